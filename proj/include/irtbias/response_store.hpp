#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "irtbias/item_bank.hpp"

namespace irtbias {

struct Respondent {
  std::string id;     // model id + run id
  std::string group;  // model family / name

  bool operator==(const Respondent&) const = default;
};

struct ResponseRecord {
  std::string respondent_id;
  std::string group;
  int item_id = 0;
  Category category = Category::PNA;
  std::optional<std::string> raw_text;
};

// Respondents x items grid of observed categories. Absent records are MISSING.
class ResponseMatrix {
 public:
  ResponseMatrix(std::shared_ptr<const ItemBank> bank, std::vector<Respondent> respondents, std::vector<Category> cells);

  const ItemBank& bank() const noexcept { return *bank_; }
  std::shared_ptr<const ItemBank> bank_ptr() const noexcept { return bank_; }
  const std::vector<Respondent>& respondents() const noexcept { return respondents_; }
  std::size_t n_respondents() const noexcept { return respondents_.size(); }
  std::size_t n_items() const noexcept { return bank_->size(); }

  // Column index is item_id - 1.
  Category at(std::size_t row, std::size_t col) const { return cells_[row * n_items() + col]; }
  std::span<const Category> row(std::size_t r) const { return {cells_.data() + r * n_items(), n_items()}; }
  const std::vector<Category>& cells() const noexcept { return cells_; }

  std::size_t count(Category c) const;

 private:
  std::shared_ptr<const ItemBank> bank_;
  std::vector<Respondent> respondents_;
  std::vector<Category> cells_;
};

// Integer-coded matrix consumed by calibration and scoring. Binary matrices
// code PNA=1 / answered=0; ordinal matrices carry recoded 0..3 codes.
struct CodedMatrix {
  enum class Kind { binary, ordinal };
  static constexpr std::int8_t kMissing = -1;

  Kind kind = Kind::binary;
  std::vector<Respondent> respondents;
  std::vector<int> item_ids;
  int n_categories = 2;
  std::vector<std::int8_t> cells;  // row-major, respondents x items

  std::size_t n_respondents() const noexcept { return respondents.size(); }
  std::size_t n_items() const noexcept { return item_ids.size(); }
  std::int8_t at(std::size_t r, std::size_t c) const { return cells[r * n_items() + c]; }
  std::int8_t& at(std::size_t r, std::size_t c) { return cells[r * n_items() + c]; }
  std::span<const std::int8_t> row(std::size_t r) const { return {cells.data() + r * n_items(), n_items()}; }
};

// Builds a matrix from records: rows in order of first appearance, one
// column per bank item. Errors: EmptyData, UnknownItem, DuplicateCell,
// InvalidCategory (MISSING record), ValidationError (respondent in two groups).
ResponseMatrix build_matrix(std::span<const ResponseRecord> records, std::shared_ptr<const ItemBank> bank);

// CSV with header respondent_id,group,item_id,category[,raw_text] or JSONL
// with the same fields. Format is chosen by extension (.jsonl/.json) or by a
// leading '{'.
std::vector<ResponseRecord> read_response_records(const std::string& path);
std::vector<ResponseRecord> parse_response_records(std::string_view text, bool jsonl);
ResponseMatrix ingest_responses(const std::string& path, std::shared_ptr<const ItemBank> bank);

// Writes every non-MISSING cell as a CSV record, row-major.
void write_responses_csv(const ResponseMatrix& m, std::ostream& out);
void write_records_csv(std::span<const ResponseRecord> records, std::ostream& out);

CodedMatrix binarize_pna(const ResponseMatrix& m);
// Answered cells get recoded ordinal codes; PNA and MISSING become missing.
CodedMatrix filter_answered(const ResponseMatrix& m);

enum class GroupBy { respondent, group };

struct RateRow {
  std::string key;
  double rate = 0.0;
  std::size_t n_pna = 0;
  std::size_t n_observed = 0;
};

// Fraction of non-MISSING cells that are PNA per key, sorted by key.
// Throws EmptyGroup if a key has no observed cells.
std::vector<RateRow> pna_rates(const ResponseMatrix& m, GroupBy group_by);
void write_rates_csv(std::span<const RateRow> rates, std::ostream& out);

}  // namespace irtbias
