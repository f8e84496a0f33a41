#include "irtbias/irt_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

#include "irtbias/error.hpp"
#include "irtbias/response_store.hpp"

namespace irtbias {

std::string_view to_string(Model m) { return m == Model::twopl ? "2pl" : "gpcm"; }

Model parse_model(std::string_view s) {
  std::string low(s);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (low == "2pl") return Model::twopl;
  if (low == "gpcm") return Model::gpcm;
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "'");
}

double GPCMParams::location() const {
  if (steps.empty()) return 0.0;
  return std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
}

GPCMParams as_gpcm(const TwoPLParams& p) { return GPCMParams{p.alpha, {p.beta}}; }

QuadratureGrid make_grid(int q, double bound) {
  if (q < 3 || q % 2 == 0) throw Error(ErrorCode::InvalidGridSpec, "quadrature points must be odd and >= 3, got " + std::to_string(q));
  if (!(bound > 0.0) || !std::isfinite(bound)) throw Error(ErrorCode::InvalidGridSpec, "grid bound must be positive");
  QuadratureGrid g;
  g.bound = bound;
  g.points.resize(static_cast<std::size_t>(q));
  g.weights.resize(static_cast<std::size_t>(q));
  const int half = q / 2;
  const double h = bound / half;
  for (int k = 0; k < q; ++k) {
    // Symmetric construction keeps the node set exactly mirrored around 0.
    int offset = k - half;
    g.points[static_cast<std::size_t>(k)] = offset * h;
    g.weights[static_cast<std::size_t>(k)] = std::exp(-0.5 * (offset * h) * (offset * h));
  }
  double total = 0.0;
  // Sum from the tails inward so mirrored weights add in the same order.
  for (int k = 0; k < half; ++k) total += g.weights[static_cast<std::size_t>(k)] + g.weights[static_cast<std::size_t>(q - 1 - k)];
  total += g.weights[static_cast<std::size_t>(half)];
  for (double& w : g.weights) w /= total;
  return g;
}

double p_2pl(const TwoPLParams& params, double theta) {
  const double x = params.alpha * (theta - params.beta);
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void cumulative_exponents(double alpha, std::span<const double> steps, double theta, std::span<double> z) {
  z[0] = 0.0;
  for (std::size_t j = 0; j < steps.size(); ++j) z[j + 1] = z[j] + alpha * (theta - steps[j]);
}

}  // namespace

void p_gpcm_into(double alpha, std::span<const double> steps, double theta, std::span<double> out) {
  cumulative_exponents(alpha, steps, theta, out);
  const double m = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : out) v /= total;
}

void log_p_gpcm_into(double alpha, std::span<const double> steps, double theta, std::span<double> out) {
  cumulative_exponents(alpha, steps, theta, out);
  const double m = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double v : out) total += std::exp(v - m);
  const double lse = m + std::log(total);
  for (double& v : out) v -= lse;
}

std::vector<double> p_gpcm(const GPCMParams& params, double theta) {
  std::vector<double> out(params.n_categories());
  p_gpcm_into(params.alpha, params.steps, theta, out);
  return out;
}

double loglik_2pl(std::span<const TwoPLParams> params, std::span<const std::int8_t> pattern, double theta) {
  if (params.size() != pattern.size()) throw Error(ErrorCode::InvalidArgument, "pattern length differs from item count");
  double ll = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == CodedMatrix::kMissing) continue;
    const double p = p_2pl(params[i], theta);
    ll += std::log(std::max(pattern[i] == 1 ? p : 1.0 - p, kProbFloor));
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::AllMissing, "pattern has no informative cells");
  return ll;
}

double loglik_gpcm(std::span<const GPCMParams> params, std::span<const std::int8_t> pattern, double theta) {
  if (params.size() != pattern.size()) throw Error(ErrorCode::InvalidArgument, "pattern length differs from item count");
  double ll = 0.0;
  std::size_t used = 0;
  std::vector<double> buf;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == CodedMatrix::kMissing) continue;
    buf.resize(params[i].n_categories());
    p_gpcm_into(params[i].alpha, params[i].steps, theta, buf);
    ll += std::log(std::max(buf.at(static_cast<std::size_t>(pattern[i])), kProbFloor));
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::AllMissing, "pattern has no informative cells");
  return ll;
}

ItemDerivatives item_grad_hessian(const GPCMParams& params, const QuadratureGrid& grid, std::span<const double> counts) {
  const std::size_t K = params.n_categories();
  const std::size_t P = K;  // alpha + K-1 steps
  if (counts.size() != grid.size() * K) throw Error(ErrorCode::InvalidArgument, "counts do not match grid x categories");

  ItemDerivatives d;
  d.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
  d.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));

  std::vector<double> logp(K), prob(K);
  // dz[k] = d z_k / d(alpha, steps)
  Eigen::MatrixXd dz(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
  Eigen::VectorXd mean_dz(static_cast<Eigen::Index>(P));
  // Cross second derivative d2 z_k / d alpha d step_j = -[j <= k]; indicator row per k.
  for (std::size_t q = 0; q < grid.size(); ++q) {
    const double* r = counts.data() + q * K;
    double n = 0.0;
    for (std::size_t k = 0; k < K; ++k) n += r[k];
    if (n == 0.0) continue;
    const double theta = grid.points[q];
    log_p_gpcm_into(params.alpha, params.steps, theta, logp);
    for (std::size_t k = 0; k < K; ++k) prob[k] = std::exp(logp[k]);

    double cum_steps = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (k > 0) cum_steps += params.steps[k - 1];
      dz(static_cast<Eigen::Index>(k), 0) = static_cast<double>(k) * theta - cum_steps;
      for (std::size_t j = 1; j < P; ++j) dz(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = j <= k ? -params.alpha : 0.0;
    }
    mean_dz.setZero();
    for (std::size_t k = 0; k < K; ++k) mean_dz += prob[k] * dz.row(static_cast<Eigen::Index>(k)).transpose();

    for (std::size_t k = 0; k < K; ++k) {
      const auto row = dz.row(static_cast<Eigen::Index>(k)).transpose();
      d.value += r[k] * logp[k];
      d.gradient += r[k] * row;
      // -n * E[dz dz^T]
      d.hessian.noalias() -= n * prob[k] * (row * row.transpose());
      // (r_k - n P_k) * d2 z_k, only alpha-step entries
      const double w = r[k] - n * prob[k];
      for (std::size_t j = 1; j <= k; ++j) {
        d.hessian(0, static_cast<Eigen::Index>(j)) -= w;
        d.hessian(static_cast<Eigen::Index>(j), 0) -= w;
      }
    }
    d.gradient -= n * mean_dz;
    d.hessian.noalias() += n * (mean_dz * mean_dz.transpose());
  }
  return d;
}

ItemDerivatives item_grad_hessian(const TwoPLParams& params, const QuadratureGrid& grid, std::span<const double> counts) {
  return item_grad_hessian(as_gpcm(params), grid, counts);
}

double expected_loglik(const GPCMParams& params, const QuadratureGrid& grid, std::span<const double> counts) {
  const std::size_t K = params.n_categories();
  std::vector<double> logp(K);
  double value = 0.0;
  for (std::size_t q = 0; q < grid.size(); ++q) {
    const double* r = counts.data() + q * K;
    bool any = false;
    for (std::size_t k = 0; k < K; ++k) any |= r[k] != 0.0;
    if (!any) continue;
    log_p_gpcm_into(params.alpha, params.steps, grid.points[q], logp);
    for (std::size_t k = 0; k < K; ++k) {
      if (r[k] != 0.0) value += r[k] * std::max(logp[k], std::log(kProbFloor));
    }
  }
  return value;
}

double item_information(const GPCMParams& params, double theta) {
  std::vector<double> p(params.n_categories());
  p_gpcm_into(params.alpha, params.steps, theta, p);
  double mean = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    mean += static_cast<double>(k) * p[k];
    sq += static_cast<double>(k * k) * p[k];
  }
  return params.alpha * params.alpha * std::max(sq - mean * mean, 0.0);
}

}  // namespace irtbias
