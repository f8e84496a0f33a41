#include "irtbias/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include "irtbias/error.hpp"
#include "irtbias/hash.hpp"
#include "irtbias/parallel.hpp"

namespace irtbias {

void CalibrationConfig::validate() const {
  if (quad_points < 11) throw Error(ErrorCode::InvalidGridSpec, "calibration needs at least 11 quadrature points");
  (void)make_grid(quad_points, grid_bound);
  if (max_em_cycles < 1) throw Error(ErrorCode::InvalidArgument, "max_em_cycles must be >= 1");
  if (!(param_tol > 0.0) || !(loglik_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerances must be positive");
  if (!allow_negative_discrimination && !(alpha_min > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha_min must be positive when discrimination is constrained");
  }
}

nlohmann::json config_echo(const CalibrationConfig& cfg) {
  return {{"model", to_string(cfg.model)},
          {"quad_points", cfg.quad_points},
          {"grid_bound", cfg.grid_bound},
          {"max_em_cycles", cfg.max_em_cycles},
          {"param_tol", cfg.param_tol},
          {"loglik_tol", cfg.loglik_tol},
          {"alpha_min", cfg.alpha_min},
          {"allow_negative_discrimination", cfg.allow_negative_discrimination},
          {"seed", cfg.seed}};
}

const FittedItem* CalibrationResult::find(int item_id) const {
  for (const auto& it : items) {
    if (it.item_id == item_id) return &it;
  }
  return nullptr;
}

namespace {

constexpr std::size_t kBlock = 64;

// Respondent observations in compressed rows, restricted to fitted items.
struct Prepared {
  std::vector<std::size_t> matrix_col;  // per fitted item
  std::vector<int> n_cat;               // per fitted item
  std::vector<std::size_t> offset;      // per fitted item, into Q*K tables
  std::size_t table_size = 0;
  std::vector<std::size_t> row_of;      // matrix row per informative respondent
  std::vector<std::size_t> row_start;   // CSR offsets, size rows + 1
  std::vector<int> obs_item;
  std::vector<int> obs_cat;

  std::size_t n_rows() const { return row_of.size(); }
  std::size_t n_items() const { return n_cat.size(); }
};

Prepared prepare(const CodedMatrix& m, const std::vector<std::size_t>& cols,
                 const std::vector<std::vector<int>>& collapse, std::size_t q) {
  Prepared p;
  p.matrix_col = cols;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    int k = 0;
    for (int v : collapse[i]) k = std::max(k, v + 1);
    p.n_cat.push_back(k);
    p.offset.push_back(p.table_size);
    p.table_size += q * static_cast<std::size_t>(k);
  }
  p.row_start.push_back(0);
  for (std::size_t r = 0; r < m.n_respondents(); ++r) {
    std::size_t before = p.obs_item.size();
    for (std::size_t i = 0; i < cols.size(); ++i) {
      std::int8_t code = m.at(r, cols[i]);
      if (code == CodedMatrix::kMissing) continue;
      if (code < 0 || static_cast<std::size_t>(code) >= collapse[i].size()) {
        throw Error(ErrorCode::InvalidArgument, "category code out of range for item " + std::to_string(m.item_ids[cols[i]]));
      }
      int fitted = collapse[i][static_cast<std::size_t>(code)];
      if (fitted < 0) {
        // Unseen during calibration: nearest observed code, ties down.
        for (int d = 1; fitted < 0 && d < static_cast<int>(collapse[i].size()); ++d) {
          if (code - d >= 0 && collapse[i][static_cast<std::size_t>(code - d)] >= 0) fitted = collapse[i][static_cast<std::size_t>(code - d)];
          else if (code + d < static_cast<int>(collapse[i].size()) && collapse[i][static_cast<std::size_t>(code + d)] >= 0)
            fitted = collapse[i][static_cast<std::size_t>(code + d)];
        }
      }
      p.obs_item.push_back(static_cast<int>(i));
      p.obs_cat.push_back(fitted);
    }
    if (p.obs_item.size() > before) {
      p.row_of.push_back(r);
      p.row_start.push_back(p.obs_item.size());
    }
  }
  return p;
}

Prepared prepare_for_result(const CalibrationResult& result, const CodedMatrix& m) {
  std::unordered_map<int, std::size_t> col_of;
  for (std::size_t c = 0; c < m.item_ids.size(); ++c) col_of[m.item_ids[c]] = c;
  std::vector<std::size_t> cols;
  std::vector<std::vector<int>> collapse;
  for (const auto& it : result.items) {
    auto f = col_of.find(it.item_id);
    if (f == col_of.end()) throw Error(ErrorCode::UnknownItem, "matrix lacks calibrated item " + std::to_string(it.item_id));
    cols.push_back(f->second);
    std::vector<int> map = it.collapse_map;
    if (map.size() < static_cast<std::size_t>(m.n_categories)) map.resize(static_cast<std::size_t>(m.n_categories), -1);
    collapse.push_back(std::move(map));
  }
  return prepare(m, cols, collapse, static_cast<std::size_t>(result.config.quad_points));
}

std::vector<double> log_prob_table(const Prepared& p, const std::vector<GPCMParams>& params, const QuadratureGrid& grid) {
  std::vector<double> tab(p.table_size);
  const std::size_t Q = grid.size();
  for (std::size_t i = 0; i < p.n_items(); ++i) {
    const std::size_t K = static_cast<std::size_t>(p.n_cat[i]);
    for (std::size_t q = 0; q < Q; ++q) {
      std::span<double> out(tab.data() + p.offset[i] + q * K, K);
      log_p_gpcm_into(params[i].alpha, params[i].steps, grid.points[q], out);
      for (double& v : out) v = std::max(v, std::log(kProbFloor));
    }
  }
  return tab;
}

// Runs the posterior computation block by block. visit(state, row, post)
// receives normalized posterior weights over the grid for informative row
// `row` (index into Prepared rows). Returns per-block states and the
// block-ordered marginal log-likelihood.
template <class State, class Make, class Visit>
std::vector<State> posterior_blocks(const Prepared& p, const std::vector<double>& logtab, const QuadratureGrid& grid,
                                    int threads, double& loglik, Make&& make, Visit&& visit) {
  const std::size_t n_blocks = (p.n_rows() + kBlock - 1) / kBlock;
  std::vector<State> states(n_blocks);
  std::vector<double> block_ll(n_blocks, 0.0);
  const std::size_t Q = grid.size();
  std::vector<double> logw(Q);
  for (std::size_t q = 0; q < Q; ++q) logw[q] = std::log(grid.weights[q]);

  parallel_for(n_blocks, threads, [&](std::size_t b) {
    State st = make();
    std::vector<double> post(Q);
    double ll = 0.0;
    const std::size_t end = std::min(p.n_rows(), (b + 1) * kBlock);
    for (std::size_t row = b * kBlock; row < end; ++row) {
      std::copy(logw.begin(), logw.end(), post.begin());
      for (std::size_t o = p.row_start[row]; o < p.row_start[row + 1]; ++o) {
        const std::size_t i = static_cast<std::size_t>(p.obs_item[o]);
        const std::size_t K = static_cast<std::size_t>(p.n_cat[i]);
        const double* col = logtab.data() + p.offset[i] + static_cast<std::size_t>(p.obs_cat[o]);
        for (std::size_t q = 0; q < Q; ++q) post[q] += col[q * K];
      }
      const double mx = *std::max_element(post.begin(), post.end());
      double s = 0.0;
      for (double& v : post) {
        v = std::exp(v - mx);
        s += v;
      }
      for (double& v : post) v /= s;
      ll += mx + std::log(s);
      visit(st, row, std::span<const double>(post));
    }
    block_ll[b] = ll;
    states[b] = std::move(st);
  });
  loglik = 0.0;
  for (double v : block_ll) loglik += v;
  return states;
}

struct EStep {
  std::vector<double> counts;  // per item Q*K expected counts, at Prepared offsets
  double loglik = 0.0;
};

EStep run_estep(const Prepared& p, const std::vector<GPCMParams>& params, const QuadratureGrid& grid, int threads) {
  const auto logtab = log_prob_table(p, params, grid);
  const std::size_t Q = grid.size();
  EStep out;
  auto states = posterior_blocks<std::vector<double>>(
      p, logtab, grid, threads, out.loglik, [&] { return std::vector<double>(p.table_size, 0.0); },
      [&](std::vector<double>& acc, std::size_t row, std::span<const double> post) {
        for (std::size_t o = p.row_start[row]; o < p.row_start[row + 1]; ++o) {
          const std::size_t i = static_cast<std::size_t>(p.obs_item[o]);
          const std::size_t K = static_cast<std::size_t>(p.n_cat[i]);
          double* dst = acc.data() + p.offset[i] + static_cast<std::size_t>(p.obs_cat[o]);
          for (std::size_t q = 0; q < Q; ++q) dst[q * K] += post[q];
        }
      });
  out.counts.assign(p.table_size, 0.0);
  for (const auto& s : states) {
    for (std::size_t k = 0; k < s.size(); ++k) out.counts[k] += s[k];
  }
  return out;
}

// Expected complete-data log-likelihood of one item in slope-intercept form,
// x = (alpha, alpha*b_1, ..., alpha*b_m). The model is an exponential family
// in x, so the objective is concave and crossing alpha = 0 is smooth.
double si_objective(const Eigen::VectorXd& x, const QuadratureGrid& grid, std::span<const double> counts,
                    Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  const auto P = x.size();
  const std::size_t K = static_cast<std::size_t>(P);
  std::vector<double> eta(K), prob(K);
  Eigen::VectorXd mean(P);
  Eigen::MatrixXd second(P, P);
  if (grad) grad->setZero(P);
  if (hess) hess->setZero(P, P);
  double value = 0.0;
  for (std::size_t q = 0; q < grid.size(); ++q) {
    const double* r = counts.data() + q * K;
    double n = 0.0;
    for (std::size_t k = 0; k < K; ++k) n += r[k];
    if (n == 0.0) continue;
    const double th = grid.points[q];
    double cum = 0.0, top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      if (k > 0) cum += x[static_cast<Eigen::Index>(k)];
      eta[k] = static_cast<double>(k) * x[0] * th - cum;
      top = std::max(top, eta[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(eta[k] - top);
    const double lse = top + std::log(z);
    for (std::size_t k = 0; k < K; ++k) {
      prob[k] = std::exp(eta[k] - lse);
      value += r[k] * (eta[k] - lse);
    }
    if (!grad && !hess) continue;
    // sufficient statistic T_k = (k*theta, -[k>=1], ..., -[k>=m])
    auto stat = [&](std::size_t k, Eigen::Index j) {
      return j == 0 ? static_cast<double>(k) * th : (k >= static_cast<std::size_t>(j) ? -1.0 : 0.0);
    };
    mean.setZero();
    second.setZero();
    for (std::size_t k = 0; k < K; ++k) {
      for (Eigen::Index a = 0; a < P; ++a) {
        const double ta = stat(k, a);
        mean[a] += prob[k] * ta;
        for (Eigen::Index b = 0; b <= a; ++b) second(a, b) += prob[k] * ta * stat(k, b);
      }
    }
    if (grad) {
      for (std::size_t k = 0; k < K; ++k) {
        if (r[k] == 0.0) continue;
        for (Eigen::Index a = 0; a < P; ++a) (*grad)[a] += r[k] * (stat(k, a) - mean[a]);
      }
    }
    if (hess) {
      for (Eigen::Index a = 0; a < P; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
          const double c = n * (second(a, b) - mean[a] * mean[b]);
          (*hess)(a, b) -= c;
          if (a != b) (*hess)(b, a) -= c;
        }
      }
    }
  }
  return value;
}

// Newton-Raphson on one item's expected complete-data log-likelihood. Every
// accepted step does not decrease the objective, which keeps EM monotone.
void maximize_item(GPCMParams& params, std::span<const double> counts, const QuadratureGrid& grid,
                   const CalibrationConfig& cfg) {
  constexpr int kMaxIter = 50;
  constexpr int kMaxHalvings = 30;
  constexpr double kMaxStep = 1.0;
  const bool constrained = !cfg.allow_negative_discrimination;

  const auto P = static_cast<Eigen::Index>(params.n_categories());
  Eigen::VectorXd x(P);
  x[0] = params.alpha;
  if (constrained && x[0] < cfg.alpha_min) x[0] = cfg.alpha_min;
  for (Eigen::Index j = 1; j < P; ++j) x[j] = x[0] * params.steps[static_cast<std::size_t>(j - 1)];
  double fx = si_objective(x, grid, counts, nullptr, nullptr);

  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    si_objective(x, grid, counts, &g, &H);
    Eigen::MatrixXd negH = -H;
    // Active bound on alpha: optimize the intercepts only.
    const bool pinned = constrained && x[0] <= cfg.alpha_min && g[0] <= 0.0;
    if (pinned) {
      g[0] = 0.0;
      negH.row(0).setZero();
      negH.col(0).setZero();
      negH(0, 0) = 1.0;
    }
    if (g.cwiseAbs().maxCoeff() < 1e-10) break;

    Eigen::VectorXd step;
    double lambda = 0.0;
    for (int tries = 0; tries < 20; ++tries) {
      Eigen::LLT<Eigen::MatrixXd> llt(negH + lambda * Eigen::MatrixXd::Identity(P, P));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        if (step.allFinite()) break;
      }
      lambda = lambda == 0.0 ? 1e-6 * std::max(1.0, negH.diagonal().cwiseAbs().maxCoeff()) : lambda * 10.0;
      step.resize(0);
    }
    if (step.size() == 0) step = g;  // steepest ascent fallback
    const double biggest = step.cwiseAbs().maxCoeff();
    if (biggest > kMaxStep) step *= kMaxStep / biggest;

    bool accepted = false;
    Eigen::VectorXd xn;
    double fn = fx;
    for (int h = 0; h < kMaxHalvings; ++h) {
      xn = x + step;
      if (constrained && xn[0] < cfg.alpha_min) xn[0] = cfg.alpha_min;
      if (xn.allFinite()) {
        fn = si_objective(xn, grid, counts, nullptr, nullptr);
        if (fn >= fx) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double moved = (xn - x).cwiseAbs().maxCoeff();
    const double gained = fn - fx;
    x = xn;
    fx = fn;
    if (moved < 1e-10 || gained <= 1e-14 * (1.0 + std::abs(fx))) break;
  }
  // back to locations; alpha exactly 0 has no location
  constexpr double kTiny = 1e-8;
  if (std::abs(x[0]) < kTiny) x[0] = x[0] < 0.0 ? -kTiny : kTiny;
  params.alpha = x[0];
  for (Eigen::Index j = 1; j < P; ++j) params.steps[static_cast<std::size_t>(j - 1)] = x[j] / x[0];
}

double logit(double p) { return std::log(p / (1.0 - p)); }

GPCMParams starting_values(const std::vector<double>& cat_counts) {
  const std::size_t K = cat_counts.size();
  double n = 0.0, score = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    n += cat_counts[k];
    score += static_cast<double>(k) * cat_counts[k];
  }
  double prop = score / (n * static_cast<double>(K - 1));
  prop = std::clamp(prop, 1e-3, 1.0 - 1e-3);
  const double center = std::clamp(-logit(prop), -3.0, 3.0);
  GPCMParams p;
  p.alpha = 1.0;
  const std::size_t m = K - 1;
  for (std::size_t j = 0; j < m; ++j) {
    double offset = m == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(m - 1);
    p.steps.push_back(center + offset);
  }
  return p;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double json_number(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::vector<GPCMParams> fitted_params(const CalibrationResult& result) {
  std::vector<GPCMParams> out;
  out.reserve(result.items.size());
  for (const auto& it : result.items) out.push_back(it.params);
  return out;
}

std::string compute_scale_id(const CalibrationResult& result) {
  Fnv1a h;
  h.update(to_string(result.model)).update("|");
  for (const auto& it : result.items) {
    h.update(std::to_string(it.item_id)).update(":").update(format_double(it.params.alpha));
    for (double s : it.params.steps) h.update(",").update(format_double(s));
    h.update(";");
  }
  return h.hex();
}

CalibrationResult calibrate(const CodedMatrix& matrix, const CalibrationConfig& cfg) {
  return calibrate(matrix, cfg, {});
}

CalibrationResult calibrate(const CodedMatrix& matrix, const CalibrationConfig& cfg,
                            const std::map<int, GPCMParams>& start) {
  cfg.validate();
  if (cfg.model == Model::twopl && matrix.n_categories != 2) {
    throw Error(ErrorCode::InvalidArgument, "the 2PL model needs a binary matrix");
  }
  if (matrix.cells.size() != matrix.n_respondents() * matrix.n_items()) {
    throw Error(ErrorCode::InvalidArgument, "matrix cells do not match its dimensions");
  }
  const QuadratureGrid grid = cfg.grid();

  CalibrationResult result;
  result.model = cfg.model;
  result.config = cfg;
  result.n_codes = matrix.n_categories;

  // Observed categories per column decide fit vs. drop.
  std::vector<std::size_t> cols;
  std::vector<std::vector<int>> collapse;
  std::vector<std::vector<double>> cat_counts;
  for (std::size_t c = 0; c < matrix.n_items(); ++c) {
    std::vector<double> counts(static_cast<std::size_t>(matrix.n_categories), 0.0);
    for (std::size_t r = 0; r < matrix.n_respondents(); ++r) {
      std::int8_t code = matrix.at(r, c);
      if (code == CodedMatrix::kMissing) continue;
      if (code < 0 || code >= matrix.n_categories) {
        throw Error(ErrorCode::InvalidArgument, "category code out of range in column " + std::to_string(c));
      }
      counts[static_cast<std::size_t>(code)] += 1.0;
    }
    std::vector<int> map(counts.size(), -1);
    std::vector<double> kept;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] > 0.0) {
        map[k] = static_cast<int>(kept.size());
        kept.push_back(counts[k]);
      }
    }
    if (kept.size() < 2) {
      result.dropped.push_back({matrix.item_ids[c], kept.empty() ? "no-observations" : "zero-variance"});
      continue;
    }
    cols.push_back(c);
    collapse.push_back(std::move(map));
    cat_counts.push_back(std::move(kept));
  }
  if (cols.empty()) throw Error(ErrorCode::DegenerateMatrix, "every item has zero response variance");
  if (cols.size() < 2) throw Error(ErrorCode::InsufficientData, "fewer than two items with response variance");

  const Prepared prep = prepare(matrix, cols, collapse, grid.size());
  if (prep.n_rows() < 10) {
    throw Error(ErrorCode::InsufficientData, "fewer than 10 respondents with observed responses (" +
                                                 std::to_string(prep.n_rows()) + ")");
  }

  std::vector<GPCMParams> params;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const int id = matrix.item_ids[cols[i]];
    auto s = start.find(id);
    if (s != start.end() && s->second.n_categories() == cat_counts[i].size()) {
      params.push_back(s->second);
    } else {
      params.push_back(starting_values(cat_counts[i]));
    }
  }

  EStep e = run_estep(prep, params, grid, cfg.threads);
  result.loglik_trace.push_back(e.loglik);
  for (int cycle = 1; cycle <= cfg.max_em_cycles; ++cycle) {
    std::vector<GPCMParams> next = params;
    parallel_for(next.size(), cfg.threads, [&](std::size_t i) {
      const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
      std::span<const double> counts(e.counts.data() + prep.offset[i], grid.size() * K);
      maximize_item(next[i], counts, grid, cfg);
    });
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      change = std::max(change, std::abs(next[i].alpha - params[i].alpha));
      for (std::size_t j = 0; j < next[i].steps.size(); ++j) {
        change = std::max(change, std::abs(next[i].steps[j] - params[i].steps[j]));
      }
    }
    params = std::move(next);
    const double previous = e.loglik;
    e = run_estep(prep, params, grid, cfg.threads);
    result.loglik_trace.push_back(e.loglik);
    result.em_cycles = cycle;
    const double rel = std::abs(e.loglik - previous) / std::max(std::abs(previous), 1e-300);
    if (change < cfg.param_tol || rel < cfg.loglik_tol) {
      result.converged = true;
      break;
    }
  }
  result.marginal_loglik = e.loglik;

  for (std::size_t i = 0; i < cols.size(); ++i) {
    FittedItem fi;
    fi.item_id = matrix.item_ids[cols[i]];
    fi.params = params[i];
    fi.collapse_map = collapse[i];
    result.items.push_back(std::move(fi));
  }
  std::sort(result.dropped.begin(), result.dropped.end(), [](const auto& a, const auto& b) { return a.item_id < b.item_id; });

  compute_standard_errors(result, matrix);
  try {
    result.fit_r2 = fit_statistic(result, matrix);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::UndefinedFit) throw;
    result.fit_r2 = 0.0;
  }
  result.scale_id = compute_scale_id(result);
  return result;
}

double marginal_loglik(const CalibrationResult& result, const CodedMatrix& matrix) {
  const Prepared prep = prepare_for_result(result, matrix);
  const QuadratureGrid grid = result.config.grid();
  return run_estep(prep, fitted_params(result), grid, result.config.threads).loglik;
}

double squared_correlation(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size()) throw Error(ErrorCode::InvalidArgument, "cell vectors differ in length");
  if (observed.size() < 3) throw Error(ErrorCode::UndefinedFit, "fewer than 3 cells for the fit statistic");
  const double n = static_cast<double>(observed.size());
  const double mo = std::accumulate(observed.begin(), observed.end(), 0.0) / n;
  const double mp = std::accumulate(predicted.begin(), predicted.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    sxy += (observed[k] - mo) * (predicted[k] - mp);
    sxx += (observed[k] - mo) * (observed[k] - mo);
    syy += (predicted[k] - mp) * (predicted[k] - mp);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
}

double fit_statistic(const CalibrationResult& result, const CodedMatrix& matrix) {
  const Prepared prep = prepare_for_result(result, matrix);
  const QuadratureGrid grid = result.config.grid();
  const auto params = fitted_params(result);
  const auto logtab = log_prob_table(prep, params, grid);
  const std::size_t Q = grid.size();

  std::vector<std::string> labels;
  for (const auto& r : matrix.respondents) labels.push_back(r.group);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<std::size_t> group_of(matrix.n_respondents());
  for (std::size_t r = 0; r < matrix.n_respondents(); ++r) {
    group_of[r] = static_cast<std::size_t>(std::lower_bound(labels.begin(), labels.end(), matrix.respondents[r].group) - labels.begin());
  }
  const std::size_t G = labels.size();
  const std::size_t Kmax = static_cast<std::size_t>(*std::max_element(prep.n_cat.begin(), prep.n_cat.end()));
  const std::size_t I = prep.n_items();
  auto slot = [&](std::size_t i, std::size_t g, std::size_t k) { return (i * G + g) * Kmax + k; };

  struct Acc {
    std::vector<double> observed, predicted, n;
  };
  double ll = 0.0;
  auto states = posterior_blocks<Acc>(
      prep, logtab, grid, result.config.threads, ll,
      [&] { return Acc{std::vector<double>(I * G * Kmax, 0.0), std::vector<double>(I * G * Kmax, 0.0), std::vector<double>(I * G, 0.0)}; },
      [&](Acc& acc, std::size_t row, std::span<const double> post) {
        const std::size_t g = group_of[prep.row_of[row]];
        double eap = 0.0;
        for (std::size_t q = 0; q < Q; ++q) eap += post[q] * grid.points[q];
        std::vector<double> probs(Kmax);
        for (std::size_t o = prep.row_start[row]; o < prep.row_start[row + 1]; ++o) {
          const std::size_t i = static_cast<std::size_t>(prep.obs_item[o]);
          const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
          acc.n[i * G + g] += 1.0;
          acc.observed[slot(i, g, static_cast<std::size_t>(prep.obs_cat[o]))] += 1.0;
          p_gpcm_into(params[i].alpha, params[i].steps, eap, std::span<double>(probs.data(), K));
          for (std::size_t k = 0; k < K; ++k) acc.predicted[slot(i, g, k)] += probs[k];
        }
      });
  Acc total{std::vector<double>(I * G * Kmax, 0.0), std::vector<double>(I * G * Kmax, 0.0), std::vector<double>(I * G, 0.0)};
  for (const auto& s : states) {
    for (std::size_t k = 0; k < s.observed.size(); ++k) {
      total.observed[k] += s.observed[k];
      total.predicted[k] += s.predicted[k];
    }
    for (std::size_t k = 0; k < s.n.size(); ++k) total.n[k] += s.n[k];
  }

  std::vector<double> obs, pred;
  for (std::size_t i = 0; i < I; ++i) {
    const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
    for (std::size_t g = 0; g < G; ++g) {
      const double n = total.n[i * G + g];
      if (n == 0.0) continue;
      const std::size_t first = result.model == Model::twopl ? 1 : 0;
      for (std::size_t k = first; k < K; ++k) {
        obs.push_back(total.observed[slot(i, g, k)] / n);
        pred.push_back(total.predicted[slot(i, g, k)] / n);
      }
    }
  }
  return squared_correlation(obs, pred);
}

void compute_standard_errors(CalibrationResult& result, const CodedMatrix& matrix) {
  const Prepared prep = prepare_for_result(result, matrix);
  const QuadratureGrid grid = result.config.grid();
  const auto params = fitted_params(result);
  const auto logtab = log_prob_table(prep, params, grid);
  const std::size_t Q = grid.size();
  const std::size_t I = prep.n_items();

  // Complete-data scores s_{i,q,k} = dz_k - E_P[dz] for every item, node and category.
  std::vector<std::size_t> score_offset(I);
  std::size_t score_size = 0;
  for (std::size_t i = 0; i < I; ++i) {
    score_offset[i] = score_size;
    const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
    score_size += Q * K * K;  // P = K parameters
  }
  std::vector<double> scores(score_size, 0.0);
  for (std::size_t i = 0; i < I; ++i) {
    const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
    const auto& pr = params[i];
    for (std::size_t q = 0; q < Q; ++q) {
      const double theta = grid.points[q];
      std::vector<double> dz(K * K, 0.0), mean(K, 0.0);
      double cum = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        if (k > 0) cum += pr.steps[k - 1];
        dz[k * K] = static_cast<double>(k) * theta - cum;
        for (std::size_t j = 1; j <= k; ++j) dz[k * K + j] = -pr.alpha;
        const double pk = std::exp(logtab[prep.offset[i] + q * K + k]);
        for (std::size_t a = 0; a < K; ++a) mean[a] += pk * dz[k * K + a];
      }
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t a = 0; a < K; ++a) scores[score_offset[i] + (q * K + k) * K + a] = dz[k * K + a] - mean[a];
      }
    }
  }

  double ll = 0.0;
  auto states = posterior_blocks<std::vector<double>>(
      prep, logtab, grid, result.config.threads, ll,
      [&] { return std::vector<double>(I * 16, 0.0); },
      [&](std::vector<double>& acc, std::size_t row, std::span<const double> post) {
        for (std::size_t o = prep.row_start[row]; o < prep.row_start[row + 1]; ++o) {
          const std::size_t i = static_cast<std::size_t>(prep.obs_item[o]);
          const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
          const std::size_t k = static_cast<std::size_t>(prep.obs_cat[o]);
          double m[4] = {0, 0, 0, 0};
          double s2[16] = {0};
          for (std::size_t q = 0; q < Q; ++q) {
            const double* s = scores.data() + score_offset[i] + (q * K + k) * K;
            const double w = post[q];
            for (std::size_t a = 0; a < K; ++a) {
              m[a] += w * s[a];
              for (std::size_t b = 0; b <= a; ++b) s2[a * 4 + b] += w * s[a] * s[b];
            }
          }
          double* dst = acc.data() + i * 16;
          for (std::size_t a = 0; a < K; ++a) {
            for (std::size_t b = 0; b <= a; ++b) dst[a * 4 + b] += s2[a * 4 + b] - m[a] * m[b];
          }
        }
      });
  std::vector<double> cov(I * 16, 0.0);
  for (const auto& s : states) {
    for (std::size_t k = 0; k < cov.size(); ++k) cov[k] += s[k];
  }

  EStep e = run_estep(prep, params, grid, result.config.threads);
  for (std::size_t i = 0; i < I; ++i) {
    const std::size_t K = static_cast<std::size_t>(prep.n_cat[i]);
    std::span<const double> counts(e.counts.data() + prep.offset[i], Q * K);
    const ItemDerivatives d = item_grad_hessian(params[i], grid, counts);
    Eigen::MatrixXd info = -d.hessian;
    for (std::size_t a = 0; a < K; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        const double v = cov[i * 16 + a * 4 + b];
        info(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -= v;
        if (a != b) info(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) -= v;
      }
    }
    FittedItem& fi = result.items[i];
    fi.se.assign(K, std::numeric_limits<double>::quiet_NaN());
    fi.location_se = std::numeric_limits<double>::quiet_NaN();
    fi.se_unstable = true;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K)));
    bool ok = true;
    for (std::size_t a = 0; a < K; ++a) {
      const double v = inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
      if (!(v > 0.0) || !std::isfinite(v)) ok = false;
      else fi.se[a] = std::sqrt(v);
    }
    fi.se_unstable = !ok;
    if (ok) {
      // Variance of the mean of the steps.
      const double m = static_cast<double>(K - 1);
      const double v = inv.bottomRightCorner(static_cast<Eigen::Index>(K - 1), static_cast<Eigen::Index>(K - 1)).sum() / (m * m);
      fi.location_se = v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
    }
  }
}

std::vector<std::vector<double>> standard_errors(const CalibrationResult& result, const CodedMatrix& matrix) {
  CalibrationResult copy = result;
  compute_standard_errors(copy, matrix);
  std::vector<std::vector<double>> out;
  for (const auto& it : copy.items) out.push_back(it.se);
  return out;
}

CodedMatrix align_to_calibration(const CalibrationResult& result, const CodedMatrix& matrix) {
  const Prepared prep = prepare_for_result(result, matrix);
  CodedMatrix out;
  out.kind = matrix.kind;
  out.respondents = matrix.respondents;
  out.n_categories = *std::max_element(prep.n_cat.begin(), prep.n_cat.end());
  for (const auto& it : result.items) out.item_ids.push_back(it.item_id);
  out.cells.assign(out.n_respondents() * out.n_items(), CodedMatrix::kMissing);
  for (std::size_t row = 0; row < prep.n_rows(); ++row) {
    for (std::size_t o = prep.row_start[row]; o < prep.row_start[row + 1]; ++o) {
      out.at(prep.row_of[row], static_cast<std::size_t>(prep.obs_item[o])) = static_cast<std::int8_t>(prep.obs_cat[o]);
    }
  }
  return out;
}

nlohmann::json to_json(const CalibrationResult& result) {
  struct Entry {
    int id;
    nlohmann::json j;
  };
  std::vector<Entry> entries;
  for (const auto& it : result.items) {
    nlohmann::json j;
    j["item_id"] = it.item_id;
    j["alpha"] = it.params.alpha;
    if (result.model == Model::twopl) j["beta"] = it.params.steps.at(0);
    else j["steps"] = it.params.steps;
    j["location"] = it.location();
    j["se"] = it.se;
    j["location_se"] = it.location_se;
    j["se_unstable"] = it.se_unstable;
    j["dropped"] = nullptr;
    j["collapse_map"] = it.collapse_map;
    entries.push_back({it.item_id, std::move(j)});
  }
  for (const auto& d : result.dropped) {
    entries.push_back({d.item_id, {{"item_id", d.item_id}, {"dropped", d.reason}}});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.id < b.id; });
  nlohmann::json items = nlohmann::json::array();
  for (auto& e : entries) items.push_back(std::move(e.j));
  return {{"model", to_string(result.model)},
          {"config", config_echo(result.config)},
          {"n_codes", result.n_codes},
          {"items", std::move(items)},
          {"marginal_loglik", result.marginal_loglik},
          {"loglik_trace", result.loglik_trace},
          {"fit_r2", result.fit_r2},
          {"converged", result.converged},
          {"em_cycles", result.em_cycles},
          {"scale_id", result.scale_id}};
}

CalibrationResult calibration_from_json(const nlohmann::json& j) {
  try {
    CalibrationResult r;
    r.model = parse_model(j.at("model").get<std::string>());
    const auto& c = j.at("config");
    r.config.model = r.model;
    r.config.quad_points = c.at("quad_points").get<int>();
    r.config.grid_bound = c.at("grid_bound").get<double>();
    r.config.max_em_cycles = c.at("max_em_cycles").get<int>();
    r.config.param_tol = c.at("param_tol").get<double>();
    r.config.loglik_tol = c.at("loglik_tol").get<double>();
    r.config.alpha_min = c.at("alpha_min").get<double>();
    r.config.allow_negative_discrimination = c.at("allow_negative_discrimination").get<bool>();
    r.config.seed = c.at("seed").get<std::uint64_t>();
    r.n_codes = j.at("n_codes").get<int>();
    for (const auto& ji : j.at("items")) {
      if (!ji.at("dropped").is_null()) {
        r.dropped.push_back({ji.at("item_id").get<int>(), ji.at("dropped").get<std::string>()});
        continue;
      }
      FittedItem fi;
      fi.item_id = ji.at("item_id").get<int>();
      fi.params.alpha = ji.at("alpha").get<double>();
      if (r.model == Model::twopl) fi.params.steps = {ji.at("beta").get<double>()};
      else fi.params.steps = ji.at("steps").get<std::vector<double>>();
      fi.collapse_map = ji.at("collapse_map").get<std::vector<int>>();
      for (const auto& s : ji.at("se")) fi.se.push_back(json_number(s));
      fi.location_se = json_number(ji.value("location_se", nlohmann::json()));
      fi.se_unstable = ji.value("se_unstable", false);
      r.items.push_back(std::move(fi));
    }
    r.marginal_loglik = j.at("marginal_loglik").get<double>();
    for (const auto& v : j.value("loglik_trace", nlohmann::json::array())) r.loglik_trace.push_back(json_number(v));
    r.fit_r2 = j.at("fit_r2").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.em_cycles = j.at("em_cycles").get<int>();
    r.scale_id = compute_scale_id(r);
    if (j.contains("scale_id") && j["scale_id"].get<std::string>() != r.scale_id) {
      throw Error(ErrorCode::ValidationError, "calibration scale_id does not match its parameters");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("calibration json: ") + e.what());
  }
}

}  // namespace irtbias
