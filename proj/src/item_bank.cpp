#include "irtbias/item_bank.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "irtbias/error.hpp"

namespace irtbias {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InvalidCategory: return "InvalidCategory";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::UnparseableLabel: return "UnparseableLabel";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::InvalidGridSpec: return "InvalidGridSpec";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorCode::UndefinedFit: return "UndefinedFit";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::ScaleMismatch: return "ScaleMismatch";
    case ErrorCode::InsufficientGroupData: return "InsufficientGroupData";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Stage2Skipped: return "Stage2Skipped";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(Subscale s) { return s == Subscale::economic ? "economic" : "social"; }

Subscale parse_subscale(std::string_view s) {
  if (s == "economic") return Subscale::economic;
  if (s == "social") return Subscale::social;
  throw Error(ErrorCode::ValidationError, "unknown subscale '" + std::string(s) + "'");
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::SA: return "SA";
    case Category::A: return "A";
    case Category::D: return "D";
    case Category::SD: return "SD";
    case Category::PNA: return "PNA";
    case Category::MISSING: return "MISSING";
  }
  return "MISSING";
}

Category parse_category(std::string_view label) {
  std::string up(label);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  if (up == "SA") return Category::SA;
  if (up == "A") return Category::A;
  if (up == "D") return Category::D;
  if (up == "SD") return Category::SD;
  if (up == "PNA") return Category::PNA;
  throw Error(ErrorCode::InvalidCategory, "unknown category '" + std::string(label) + "'");
}

std::optional<int> ordinal_code(Category c) {
  switch (c) {
    case Category::SA: return 3;
    case Category::A: return 2;
    case Category::D: return 1;
    case Category::SD: return 0;
    default: return std::nullopt;
  }
}

Category category_from_code(int code) {
  switch (code) {
    case 3: return Category::SA;
    case 2: return Category::A;
    case 1: return Category::D;
    case 0: return Category::SD;
    default: throw Error(ErrorCode::InvalidCategory, "ordinal code out of range: " + std::to_string(code));
  }
}

ItemBank::ItemBank(std::vector<Item> items, std::string version, std::set<int> recode_ids)
    : items_(std::move(items)), version_(std::move(version)), recode_ids_(std::move(recode_ids)) {
  if (items_.empty()) throw Error(ErrorCode::ValidationError, "item bank is empty");
  std::sort(items_.begin(), items_.end(), [](const Item& a, const Item& b) { return a.id < b.id; });
  for (std::size_t k = 0; k < items_.size(); ++k) {
    const Item& it = items_[k];
    if (k > 0 && items_[k - 1].id == it.id) {
      throw Error(ErrorCode::ValidationError, "duplicate item id " + std::to_string(it.id));
    }
    if (it.id != static_cast<int>(k) + 1) {
      throw Error(ErrorCode::ValidationError, "item ids must form the range 1.." + std::to_string(items_.size()) +
                                                  " (found " + std::to_string(it.id) + ")");
    }
    if (it.text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::ValidationError, "item " + std::to_string(it.id) + " has empty text");
    }
  }
  for (int id : recode_ids_) {
    if (!contains(id)) throw Error(ErrorCode::ValidationError, "recode id " + std::to_string(id) + " out of range");
  }
  for (Item& it : items_) it.reverse_coded = recode_ids_.count(it.id) > 0;
}

const Item& ItemBank::item(int item_id) const {
  if (!contains(item_id)) throw Error(ErrorCode::UnknownItem, "item id " + std::to_string(item_id));
  return items_[static_cast<std::size_t>(item_id - 1)];
}

ItemBank item_bank_from_json(const nlohmann::json& j) {
  try {
    std::vector<Item> items;
    for (const auto& ji : j.at("items")) {
      Item it;
      it.id = ji.at("id").get<int>();
      it.text = ji.at("text").get<std::string>();
      it.subscale = parse_subscale(ji.at("subscale").get<std::string>());
      if (ji.contains("tags")) it.tags = ji.at("tags").get<std::vector<std::string>>();
      items.push_back(std::move(it));
    }
    auto recode = j.at("recode_ids").get<std::vector<int>>();
    return ItemBank(std::move(items), j.at("version").get<std::string>(), std::set<int>(recode.begin(), recode.end()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("item bank: ") + e.what());
  }
}

nlohmann::json item_bank_to_json(const ItemBank& bank) {
  nlohmann::json items = nlohmann::json::array();
  for (const Item& it : bank.items()) {
    items.push_back({{"id", it.id}, {"text", it.text}, {"subscale", to_string(it.subscale)}, {"tags", it.tags}});
  }
  return {{"version", bank.version()},
          {"items", std::move(items)},
          {"recode_ids", std::vector<int>(bank.recode_ids().begin(), bank.recode_ids().end())}};
}

ItemBank load_item_bank(const std::string& source) {
  if (source == "builtin") return builtin_item_bank();
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open item bank '" + source + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("item bank: ") + e.what());
  }
  return item_bank_from_json(j);
}

Category recode_category(const Item& item, Category cat) {
  if (cat == Category::MISSING) throw Error(ErrorCode::InvalidCategory, "cannot recode a MISSING cell");
  if (cat == Category::PNA || !item.reverse_coded) return cat;
  return category_from_code(3 - *ordinal_code(cat));
}

}  // namespace irtbias
