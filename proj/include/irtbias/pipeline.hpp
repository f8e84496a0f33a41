#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "irtbias/calibration.hpp"
#include "irtbias/response_store.hpp"
#include "irtbias/scoring.hpp"
#include "json.hpp"

namespace irtbias {

std::string_view tool_version();

struct PipelineConfig {
  // Shared by both stages; the model field is overridden per stage.
  CalibrationConfig calibration;
  ScoringMethod method = ScoringMethod::eap;
  std::optional<std::string> reference_group;
  double sensitive_threshold = 4.0;
};

enum class StageStatus { fitted, degenerate, skipped };
std::string_view to_string(StageStatus s);

struct GroupSummary {
  std::string group;
  int n = 0;  // respondents with at least one informative cell
  int n_prior_only = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample sd, 0 when n < 2
};

struct StageReport {
  StageStatus status = StageStatus::fitted;
  std::string message;  // why the stage was not fitted
  std::optional<CalibrationResult> calibration;
  std::vector<AbilityEstimate> scores;
  std::vector<GroupSummary> groups;
};

struct GroupDeviation {
  std::string group;
  double mean = 0.0;
  double reference_mean = 0.0;
  ScoreDeviation deviation;
};

struct Provenance {
  std::string tool_version;
  std::string responses_hash;
  std::string bank_version;
  std::string bank_hash;
  nlohmann::json config;
};

struct BiasReport {
  std::vector<RateRow> pna_rates_by_group;
  std::vector<RateRow> pna_rates_by_respondent;
  StageReport stage1;
  StageReport stage2;
  std::optional<std::string> reference_group;
  // Per stage, present only when a reference group was named.
  std::optional<std::vector<GroupDeviation>> stage1_deviations;
  std::optional<std::vector<GroupDeviation>> stage2_deviations;
  Provenance provenance;
};

// pna_rates -> binarize -> 2PL -> score -> filter_answered -> GPCM -> score
// -> deviations. A stage-1 DegenerateMatrix (nobody ever declines) leaves
// stage 1 "degenerate" with prior-only scores; a failed stage-2 calibration
// leaves stage 2 "skipped" without scores (Stage2Skipped in message). Other
// errors propagate. An unknown reference group throws InvalidArgument.
BiasReport run_two_stage(const ResponseMatrix& matrix, const PipelineConfig& cfg, const std::string& responses_hash = "");
BiasReport run_two_stage(const std::string& responses_path, std::shared_ptr<const ItemBank> bank,
                         const PipelineConfig& cfg);

std::vector<GroupSummary> summarize_groups(const std::vector<AbilityEstimate>& scores);

struct ItemReportRow {
  int rank = 0;
  int item_id = 0;
  double alpha = 0.0;
  double alpha_se = 0.0;
  double location = 0.0;  // beta for the 2PL
  double location_se = 0.0;
  std::vector<double> steps;
  bool sensitive = false;  // |location| > threshold
};

// Items by |alpha| descending, ties by id.
std::vector<ItemReportRow> item_report(const CalibrationResult& result, double sensitive_threshold = 4.0);

nlohmann::json to_json(const BiasReport& report, double sensitive_threshold = 4.0);
// Deterministic serialization used for report files.
std::string dump_report(const BiasReport& report, double sensitive_threshold = 4.0);

// Plot data. Histogram edges run from -bound to bound in steps of
// bin_width; values beyond the edges land in the outer bins.
void write_item_series_csv(const BiasReport& report, std::ostream& out, double sensitive_threshold = 4.0);
void write_theta_histogram_csv(const BiasReport& report, std::ostream& out, double bin_width = 0.5);

}  // namespace irtbias
