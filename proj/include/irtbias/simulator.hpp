#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "irtbias/calibration.hpp"
#include "irtbias/irt_core.hpp"
#include "irtbias/response_store.hpp"
#include "irtbias/scoring.hpp"
#include "json.hpp"

namespace irtbias {

// Counter-based generator: every draw is SplitMix64-mixed from
// (seed, stream, a, b, draw), so any cell can be generated independently of
// every other cell and of the generation order.
class CounterRng {
 public:
  enum Stream : std::uint64_t {
    kItemPnaAlpha = 1,
    kItemPnaBeta = 2,
    kItemBiasAlpha = 3,
    kItemBiasLocation = 4,
    kItemRecode = 5,
    kThetaPna = 6,
    kThetaBias = 7,
    kCellPna = 8,
    kCellCategory = 9,
  };

  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(Stream stream, std::uint64_t a, std::uint64_t b, std::uint64_t draw = 0) const;
  // Uniform on the open interval (0, 1).
  double uniform(Stream stream, std::uint64_t a, std::uint64_t b = 0, std::uint64_t draw = 0) const;
  // Standard normal via Box-Muller on draws 2*draw and 2*draw + 1.
  double normal(Stream stream, std::uint64_t a, std::uint64_t b = 0, std::uint64_t draw = 0) const;

 private:
  std::uint64_t seed_;
};

struct SimGroup {
  std::string label;
  double theta_pna = 0.0;
  double theta_bias = 0.0;
  double theta_sd = 1.0;
  // Item id -> additive shift for this group only (planted DIF).
  std::map<int, double> pna_beta_shift;
  std::map<int, double> bias_location_shift;
};

struct ItemOverride {
  int item_id = 0;
  std::optional<double> pna_alpha;
  std::optional<double> pna_beta;
  std::optional<double> bias_alpha;
  std::optional<double> bias_location;
};

enum class SimStages { both, pna, bias };

struct SimSpec {
  int n_items = 20;
  int n_respondents_per_group = 100;
  std::vector<SimGroup> groups;
  double alpha_lo = 0.8, alpha_hi = 2.0;
  double beta_lo = -2.0, beta_hi = 2.0;
  double step_spread = 0.8;
  double recode_fraction = 0.5;
  std::uint64_t seed = 1;
  // pna: report stage 1 only. bias: no avoidance is generated and only stage
  // 2 is reported.
  SimStages stages = SimStages::both;
  std::vector<ItemOverride> overrides;
  // When set, recode flags come from this bank instead of recode_fraction and
  // n_items must equal its size.
  std::shared_ptr<const ItemBank> bank;

  void validate() const;  // throws InvalidSpec
};

SimSpec sim_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimSpec& spec);

struct GroundTruth {
  std::vector<TwoPLParams> pna;   // per item
  std::vector<GPCMParams> bias;   // per item, on the recoded scale
  std::vector<double> theta_pna;  // per respondent
  std::vector<double> theta_bias;
  std::vector<bool> recode;
  // Ordinal code on the recoded scale per cell, -1 for PNA.
  std::vector<std::int8_t> codes;
};

nlohmann::json to_json(const GroundTruth& truth, const std::vector<Respondent>& respondents);

struct Simulation {
  ResponseMatrix matrix;
  GroundTruth truth;
};

// Cell (r, i) is PNA with probability p_2pl(pna_i, theta_pna_r); otherwise a
// code is drawn from p_gpcm(bias_i, theta_bias_r) and reverse-coded items
// store the reversed raw category, so filter_answered recovers the code.
Simulation simulate(const SimSpec& spec);

struct StageRecovery {
  Model model = Model::twopl;
  int n_items_fitted = 0;
  int n_items_dropped = 0;
  double rmse_alpha = 0.0;
  double rmse_location = 0.0;  // beta for the 2PL, step mean for the GPCM
  double theta_correlation = 0.0;
  bool converged = false;
  int em_cycles = 0;
  double fit_r2 = 0.0;
};

struct RecoveryReport {
  std::optional<StageRecovery> stage1;
  std::optional<StageRecovery> stage2;
};

// simulate -> binarize / filter -> calibrate -> EAP scores, compared against
// the ground truth. Calibration errors propagate.
RecoveryReport recovery_report(const SimSpec& spec, const CalibrationConfig& cfg);
nlohmann::json to_json(const RecoveryReport& report);

}  // namespace irtbias
