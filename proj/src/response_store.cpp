#include "irtbias/response_store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "irtbias/csv.hpp"
#include "irtbias/error.hpp"
#include "json.hpp"

namespace irtbias {

ResponseMatrix::ResponseMatrix(std::shared_ptr<const ItemBank> bank, std::vector<Respondent> respondents,
                               std::vector<Category> cells)
    : bank_(std::move(bank)), respondents_(std::move(respondents)), cells_(std::move(cells)) {
  if (!bank_) throw Error(ErrorCode::InvalidArgument, "response matrix needs an item bank");
  if (cells_.size() != respondents_.size() * bank_->size()) {
    throw Error(ErrorCode::ValidationError, "cell count does not match respondents x items");
  }
}

std::size_t ResponseMatrix::count(Category c) const { return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), c)); }

ResponseMatrix build_matrix(std::span<const ResponseRecord> records, std::shared_ptr<const ItemBank> bank) {
  if (records.empty()) throw Error(ErrorCode::EmptyData, "no response records");
  std::vector<Respondent> respondents;
  std::unordered_map<std::string, std::size_t> row_of;
  for (const auto& rec : records) {
    if (!bank->contains(rec.item_id)) {
      throw Error(ErrorCode::UnknownItem, "item id " + std::to_string(rec.item_id) + " for respondent '" +
                                              rec.respondent_id + "'");
    }
    if (rec.category == Category::MISSING) {
      throw Error(ErrorCode::InvalidCategory, "MISSING is not a valid recorded category");
    }
    auto [it, inserted] = row_of.try_emplace(rec.respondent_id, respondents.size());
    if (inserted) {
      respondents.push_back({rec.respondent_id, rec.group});
    } else if (respondents[it->second].group != rec.group) {
      throw Error(ErrorCode::ValidationError, "respondent '" + rec.respondent_id + "' appears in groups '" +
                                                  respondents[it->second].group + "' and '" + rec.group + "'");
    }
  }
  const std::size_t n_items = bank->size();
  std::vector<Category> cells(respondents.size() * n_items, Category::MISSING);
  for (const auto& rec : records) {
    Category& cell = cells[row_of[rec.respondent_id] * n_items + static_cast<std::size_t>(rec.item_id - 1)];
    if (cell != Category::MISSING) {
      throw Error(ErrorCode::DuplicateCell,
                  "respondent '" + rec.respondent_id + "', item " + std::to_string(rec.item_id));
    }
    cell = rec.category;
  }
  return ResponseMatrix(std::move(bank), std::move(respondents), std::move(cells));
}

namespace {

int parse_item_id(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": bad item_id '" + s + "'");
  }
}

std::vector<ResponseRecord> parse_csv_records(std::string_view text) {
  auto rows = csv::parse(text);
  if (rows.empty()) return {};
  const csv::Row& header = rows[0];
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;
  for (const char* name : {"respondent_id", "group", "item_id", "category"}) {
    if (!col.count(name)) throw Error(ErrorCode::ParseError, std::string("csv header lacks column '") + name + "'");
  }
  const auto raw_col = col.count("raw_text") ? std::optional<std::size_t>(col["raw_text"]) : std::nullopt;
  std::vector<ResponseRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const csv::Row& r = rows[k];
    if (r.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "csv record " + std::to_string(k) + " has " + std::to_string(r.size()) +
                                             " fields, expected " + std::to_string(header.size()));
    }
    ResponseRecord rec;
    rec.respondent_id = r[col["respondent_id"]];
    rec.group = r[col["group"]];
    rec.item_id = parse_item_id(r[col["item_id"]], k + 1);
    try {
      rec.category = parse_category(r[col["category"]]);
    } catch (const Error& e) {
      throw Error(e.code(), "csv record " + std::to_string(k) + ": " + e.detail());
    }
    if (rec.respondent_id.empty()) throw Error(ErrorCode::ParseError, "csv record " + std::to_string(k) + ": empty respondent_id");
    if (raw_col && !r[*raw_col].empty()) rec.raw_text = r[*raw_col];
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ResponseRecord> parse_jsonl_records(std::string_view text) {
  std::vector<ResponseRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ResponseRecord rec;
      rec.respondent_id = j.at("respondent_id").get<std::string>();
      rec.group = j.value("group", std::string());
      rec.item_id = j.at("item_id").get<int>();
      rec.category = parse_category(j.at("category").get<std::string>());
      if (j.contains("raw_text") && j["raw_text"].is_string()) rec.raw_text = j["raw_text"].get<std::string>();
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "jsonl line " + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), "jsonl line " + std::to_string(n) + ": " + e.detail());
    }
  }
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<ResponseRecord> parse_response_records(std::string_view text, bool jsonl) {
  auto out = jsonl ? parse_jsonl_records(text) : parse_csv_records(text);
  if (out.empty()) throw Error(ErrorCode::EmptyData, "no response records");
  return out;
}

std::vector<ResponseRecord> read_response_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open responses '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  auto first = text.find_first_not_of(" \t\r\n");
  bool jsonl = ends_with(path, ".jsonl") || ends_with(path, ".json") || (first != std::string::npos && text[first] == '{');
  return parse_response_records(text, jsonl);
}

ResponseMatrix ingest_responses(const std::string& path, std::shared_ptr<const ItemBank> bank) {
  auto records = read_response_records(path);
  return build_matrix(records, std::move(bank));
}

void write_records_csv(std::span<const ResponseRecord> records, std::ostream& out) {
  bool with_raw = std::any_of(records.begin(), records.end(), [](const auto& r) { return r.raw_text.has_value(); });
  out << "respondent_id,group,item_id,category" << (with_raw ? ",raw_text" : "") << '\n';
  for (const auto& r : records) {
    csv::Row row{r.respondent_id, r.group, std::to_string(r.item_id), std::string(to_string(r.category))};
    if (with_raw) row.push_back(r.raw_text.value_or(""));
    out << csv::join(row) << '\n';
  }
}

void write_responses_csv(const ResponseMatrix& m, std::ostream& out) {
  out << "respondent_id,group,item_id,category\n";
  for (std::size_t r = 0; r < m.n_respondents(); ++r) {
    const auto& who = m.respondents()[r];
    for (std::size_t c = 0; c < m.n_items(); ++c) {
      Category cat = m.at(r, c);
      if (cat == Category::MISSING) continue;
      out << csv::join({who.id, who.group, std::to_string(c + 1), std::string(to_string(cat))}) << '\n';
    }
  }
}

CodedMatrix binarize_pna(const ResponseMatrix& m) {
  CodedMatrix out;
  out.kind = CodedMatrix::Kind::binary;
  out.respondents = m.respondents();
  out.n_categories = 2;
  for (const Item& it : m.bank().items()) out.item_ids.push_back(it.id);
  out.cells.resize(m.cells().size());
  std::transform(m.cells().begin(), m.cells().end(), out.cells.begin(), [](Category c) -> std::int8_t {
    if (c == Category::MISSING) return CodedMatrix::kMissing;
    return c == Category::PNA ? 1 : 0;
  });
  return out;
}

CodedMatrix filter_answered(const ResponseMatrix& m) {
  CodedMatrix out;
  out.kind = CodedMatrix::Kind::ordinal;
  out.respondents = m.respondents();
  out.n_categories = 4;
  for (const Item& it : m.bank().items()) out.item_ids.push_back(it.id);
  out.cells.assign(m.cells().size(), CodedMatrix::kMissing);
  for (std::size_t r = 0; r < m.n_respondents(); ++r) {
    for (std::size_t c = 0; c < m.n_items(); ++c) {
      Category cat = m.at(r, c);
      if (cat == Category::MISSING || cat == Category::PNA) continue;
      out.at(r, c) = static_cast<std::int8_t>(*ordinal_code(recode_category(m.bank().items()[c], cat)));
    }
  }
  return out;
}

std::vector<RateRow> pna_rates(const ResponseMatrix& m, GroupBy group_by) {
  std::map<std::string, RateRow> acc;
  for (std::size_t r = 0; r < m.n_respondents(); ++r) {
    const auto& who = m.respondents()[r];
    const std::string& key = group_by == GroupBy::respondent ? who.id : who.group;
    RateRow& row = acc[key];
    row.key = key;
    for (Category c : m.row(r)) {
      if (c == Category::MISSING) continue;
      ++row.n_observed;
      if (c == Category::PNA) ++row.n_pna;
    }
  }
  std::vector<RateRow> out;
  out.reserve(acc.size());
  for (auto& [key, row] : acc) {
    if (row.n_observed == 0) throw Error(ErrorCode::EmptyGroup, "no observed cells for '" + key + "'");
    row.rate = static_cast<double>(row.n_pna) / static_cast<double>(row.n_observed);
    out.push_back(std::move(row));
  }
  return out;
}

void write_rates_csv(std::span<const RateRow> rates, std::ostream& out) {
  out << "key,rate\n";
  for (const auto& r : rates) {
    out << csv::escape(r.key) << ',' << nlohmann::json(r.rate).dump() << '\n';
  }
}

}  // namespace irtbias
