#pragma once

#include <map>
#include <ostream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irtbias/calibration.hpp"

namespace irtbias {

enum class ScoringMethod { eap, mle };

std::string_view to_string(ScoringMethod m);
ScoringMethod parse_scoring_method(std::string_view s);

struct AbilityEstimate {
  std::string respondent_id;
  std::string group;
  double theta = 0.0;
  double se = 1.0;
  ScoringMethod method = ScoringMethod::eap;
  bool at_bound = false;
  int n_informative = 0;
  bool prior_only = false;  // no informative cells: prior mean and sd
  std::string scale_id;
};

// Scores one pattern against item parameters (pattern[i] indexes the
// categories of params[i], or is missing). MLE maximizes the pattern
// log-likelihood on [-bound, bound]: coarse scan, golden section, then Newton
// to 1e-6. EAP is the posterior mean under the grid's N(0,1) weights. A
// pattern with no informative cells returns EAP theta 0, se 1.
AbilityEstimate estimate_theta(std::span<const std::int8_t> pattern, std::span<const GPCMParams> params,
                               ScoringMethod method, const QuadratureGrid& grid);

// Scores every respondent of the matrix on the calibration's scale.
std::vector<AbilityEstimate> score_respondents(const CalibrationResult& calibration, const CodedMatrix& matrix,
                                               ScoringMethod method);

struct ScoreDeviation {
  double signed_deviation = 0.0;  // new - reference
  double magnitude = 0.0;
};

ScoreDeviation compare_scores(double theta_new, double theta_ref);
// Throws ScaleMismatch when the estimates come from different calibrations.
ScoreDeviation compare_scores(const AbilityEstimate& estimate_new, const AbilityEstimate& estimate_ref);

struct DIFGroupParams {
  std::string group;
  GPCMParams params;
};

struct DIFReport {
  int item_id = 0;
  double lr_statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double constrained_loglik = 0.0;
  double augmented_loglik = 0.0;
  std::vector<DIFGroupParams> group_params;
};

// Likelihood-ratio DIF test for one item: every other item is an anchor with
// shared parameters while the studied item gets one parameter set per group.
// Group labels come from `groups` when given (respondent id -> label), else
// from the matrix. Both fits run with loglik_tol <= 1e-9 and param_tol <= 1e-6
// so that EM stopping error stays small against the statistic.
// Throws InsufficientGroupData unless >= 2 groups each have >= 10 respondents
// answering the item.
DIFReport dif_test(const CodedMatrix& matrix, int item_id, const CalibrationConfig& cfg,
                   const std::map<std::string, std::string>* groups = nullptr);

// Runs dif_test for every calibrated item, sharing the constrained fit.
std::vector<DIFReport> dif_test_all(const CodedMatrix& matrix, const CalibrationConfig& cfg,
                                    const std::map<std::string, std::string>* groups = nullptr);

// Chi-square upper tail probability.
double chi_square_sf(double x, int df);

// respondent_id,group,stage,theta,se,method,at_bound,n_informative,scale_id
void write_scores_csv(std::span<const AbilityEstimate> scores, std::string_view stage, std::ostream& out);
nlohmann::json to_json(const AbilityEstimate& e);
// item_id,lr,df,p
void write_dif_csv(std::span<const DIFReport> reports, std::ostream& out);
nlohmann::json to_json(const DIFReport& r);

}  // namespace irtbias
