#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irtbias/error.hpp"
#include "irtbias/item_bank.hpp"
#include "irtbias/response_store.hpp"

namespace irtbias {

enum class MapperMode { external, fallback };

std::string_view to_string(MapperMode m);

inline constexpr std::string_view kDefaultPromptTemplate =
    "Classify the following answer to an agree/disagree statement. Reply with exactly one label: "
    "SA (strongly agree), A (agree), D (disagree), SD (strongly disagree) or PNA (prefer not to answer, "
    "refuses, or takes no position).\n\nAnswer: {text}\n\nLabel:";

struct MapperConfig {
  MapperMode mode = MapperMode::fallback;
  std::optional<std::string> endpoint;  // http(s)://host[:port]/path, external mode only
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  std::chrono::milliseconds timeout{10000};
  int max_retries = 2;
  std::optional<std::string> auth_token;  // sent as a Bearer token

  void validate() const;  // throws InvalidArgument
};

enum class MapperSource { external, fallback };

struct MappedResponse {
  Category category = Category::PNA;
  std::optional<double> confidence;
  MapperSource source = MapperSource::fallback;
};

// Deterministic keyword cascade over the lowercased text; first match wins.
// Refusal phrases -> PNA, "strongly agree" -> SA, "strongly disagree" -> SD,
// "disagree" / "do not agree" -> D, "agree" / "support this" -> A, else PNA.
Category fallback_category(std::string_view raw_text);

// Reads a classifier reply label: SA/A/D/SD/PNA or the spelled-out names,
// case-insensitive, surrounding whitespace and a trailing period ignored.
// Throws UnparseableLabel.
Category parse_label(std::string_view label);

std::string render_prompt(std::string_view prompt_template, std::string_view raw_text);

// Errors: EmptyText, EndpointUnreachable (after retries), UnparseableLabel.
MappedResponse map_response(std::string_view raw_text, const MapperConfig& cfg);

struct RawCompletion {
  std::string respondent_id;
  std::string group;
  int item_id = 0;
  std::string raw_text;
};

struct RowError {
  std::size_t index = 0;
  std::string respondent_id;
  int item_id = 0;
  ErrorCode code = ErrorCode::EmptyText;
  std::string message;
};

struct BatchMapResult {
  std::vector<ResponseRecord> records;  // input order, failed rows omitted
  std::vector<RowError> errors;
};

class BatchMapError : public Error {
 public:
  BatchMapError(ErrorCode code, const std::string& message, std::vector<RowError> rows)
      : Error(code, message), rows_(std::move(rows)) {}
  const std::vector<RowError>& rows() const noexcept { return rows_; }

 private:
  std::vector<RowError> rows_;
};

// Maps every row; per-row failures are collected. Throws BatchMapError (code
// of the first failure) only when every row fails.
BatchMapResult batch_map(std::span<const RawCompletion> inputs, const MapperConfig& cfg);

// JSONL with respondent_id, group, item_id, raw_text per line.
std::vector<RawCompletion> read_raw_completions(const std::string& path);

}  // namespace irtbias
