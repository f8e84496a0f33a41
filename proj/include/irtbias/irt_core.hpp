#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace irtbias {

enum class Model { twopl, gpcm };

std::string_view to_string(Model m);
// Accepts "2pl" and "gpcm" (case-insensitive). Throws InvalidArgument.
Model parse_model(std::string_view s);

struct TwoPLParams {
  double alpha = 1.0;  // discrimination
  double beta = 0.0;   // difficulty
};

// Adjacent-category logit item. steps has K-1 entries for K categories;
// category 0 is the reference with exponent 0.
struct GPCMParams {
  double alpha = 1.0;
  std::vector<double> steps;

  std::size_t n_categories() const noexcept { return steps.size() + 1; }
  // Mean of the step parameters (item location / difficulty).
  double location() const;
};

GPCMParams as_gpcm(const TwoPLParams& p);

struct QuadratureGrid {
  std::vector<double> points;
  std::vector<double> weights;  // sum to 1
  double bound = 0.0;

  std::size_t size() const noexcept { return points.size(); }
};

// q equally spaced nodes on [-bound, bound] with weights proportional to the
// standard normal density. q must be odd and >= 3 (0 is then a node) and
// bound > 0; otherwise InvalidGridSpec. Calibration configs require q >= 11.
QuadratureGrid make_grid(int q, double bound);

inline constexpr double kProbFloor = 1e-300;

// 1 / (1 + exp(-alpha (theta - beta)))
double p_2pl(const TwoPLParams& params, double theta);

std::vector<double> p_gpcm(const GPCMParams& params, double theta);
// Writes K category probabilities; out.size() must equal steps.size() + 1.
void p_gpcm_into(double alpha, std::span<const double> steps, double theta, std::span<double> out);
// Log-probabilities via log-sum-exp with max subtraction.
void log_p_gpcm_into(double alpha, std::span<const double> steps, double theta, std::span<double> out);

// Pattern cells are 0/1 or CodedMatrix::kMissing. Throws AllMissing when no
// cell is informative.
double loglik_2pl(std::span<const TwoPLParams> params, std::span<const std::int8_t> pattern, double theta);
// Pattern cells index the item's categories (0..K-1) or are missing.
double loglik_gpcm(std::span<const GPCMParams> params, std::span<const std::int8_t> pattern, double theta);

struct ItemDerivatives {
  double value = 0.0;  // expected complete-data log-likelihood
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Derivatives of sum_q sum_k counts[q*K + k] * log P_k(theta_q) with respect to
// (alpha, step_1, ..., step_{K-1}). For the 2PL the layout is (alpha, beta)
// and K = 2.
ItemDerivatives item_grad_hessian(const GPCMParams& params, const QuadratureGrid& grid, std::span<const double> counts);
ItemDerivatives item_grad_hessian(const TwoPLParams& params, const QuadratureGrid& grid, std::span<const double> counts);
double expected_loglik(const GPCMParams& params, const QuadratureGrid& grid, std::span<const double> counts);

// Fisher information of one item at theta: alpha^2 * Var(category index).
double item_information(const GPCMParams& params, double theta);

}  // namespace irtbias
