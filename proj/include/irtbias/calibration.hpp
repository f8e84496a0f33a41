#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "irtbias/irt_core.hpp"
#include "irtbias/response_store.hpp"
#include "json.hpp"

namespace irtbias {

struct CalibrationConfig {
  Model model = Model::twopl;
  int quad_points = 61;
  double grid_bound = 6.0;
  int max_em_cycles = 500;
  double param_tol = 1e-4;   // max absolute parameter change per cycle
  double loglik_tol = 1e-6;  // relative marginal log-likelihood change
  double alpha_min = 0.01;
  bool allow_negative_discrimination = false;
  std::uint64_t seed = 0;
  // Execution only; results are identical for every value and it is not echoed.
  int threads = 1;

  // Throws InvalidArgument / InvalidGridSpec.
  void validate() const;
  QuadratureGrid grid() const { return make_grid(quad_points, grid_bound); }
};

nlohmann::json config_echo(const CalibrationConfig& cfg);

struct FittedItem {
  int item_id = 0;
  GPCMParams params;  // 2PL items carry a single step (beta)
  // Observed code -> fitted category index, -1 when the code never occurred.
  std::vector<int> collapse_map;
  std::vector<double> se;  // (alpha, steps...); NaN when unstable
  double location_se = 0.0;
  bool se_unstable = false;

  double location() const { return params.location(); }
};

struct DroppedItem {
  int item_id = 0;
  std::string reason;
};

struct CalibrationResult {
  Model model = Model::twopl;
  CalibrationConfig config;
  int n_codes = 2;  // category codes in the calibrated matrix
  std::vector<FittedItem> items;
  std::vector<DroppedItem> dropped;
  double marginal_loglik = 0.0;
  std::vector<double> loglik_trace;  // marginal log-likelihood after each E-step
  int em_cycles = 0;
  bool converged = false;
  double fit_r2 = 0.0;
  std::string scale_id;

  const FittedItem* find(int item_id) const;
};

// Bock-Aitkin marginal maximum likelihood. Items whose observed responses use
// fewer than two categories are dropped as zero-variance. Errors:
// DegenerateMatrix (no item has variance), InsufficientData (fewer than two
// usable items or fewer than ten informative respondents), InvalidArgument.
CalibrationResult calibrate(const CodedMatrix& matrix, const CalibrationConfig& cfg);
// As above, starting items listed in start (by item id) from the given
// parameters when their category count matches.
CalibrationResult calibrate(const CodedMatrix& matrix, const CalibrationConfig& cfg,
                            const std::map<int, GPCMParams>& start);

// Squared Pearson correlation of observed and model-predicted category
// proportions pooled over (item x respondent group x category) cells. The
// prediction for a cell averages P_k(theta_EAP) over the group's respondents
// answering the item. Binary models use only the PNA category. Zero-variance
// inputs give 0.
// Throws UndefinedFit with fewer than 3 cells.
double fit_statistic(const CalibrationResult& result, const CodedMatrix& matrix);
// Squared Pearson correlation behind fit_statistic. 0 when either side has
// zero variance; UndefinedFit with fewer than 3 cells.
double squared_correlation(std::span<const double> observed, std::span<const double> predicted);

// Per-item standard errors from the inverse of the item's observed
// information block at the final posterior. Unstable items get NaNs and
// se_unstable (SingularInformation is reported, never thrown).
void compute_standard_errors(CalibrationResult& result, const CodedMatrix& matrix);
std::vector<std::vector<double>> standard_errors(const CalibrationResult& result, const CodedMatrix& matrix);

// Marginal log-likelihood of the matrix under fixed item parameters.
double marginal_loglik(const CalibrationResult& result, const CodedMatrix& matrix);

// Restricts the matrix to the fitted items (in result order) and maps codes
// through each item's collapse map. Codes unseen at calibration map to the
// nearest observed code, ties going down.
CodedMatrix align_to_calibration(const CalibrationResult& result, const CodedMatrix& matrix);
std::vector<GPCMParams> fitted_params(const CalibrationResult& result);

std::string compute_scale_id(const CalibrationResult& result);

nlohmann::json to_json(const CalibrationResult& result);
CalibrationResult calibration_from_json(const nlohmann::json& j);

}  // namespace irtbias
