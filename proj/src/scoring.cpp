#include "irtbias/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "irtbias/csv.hpp"
#include "irtbias/error.hpp"
#include "irtbias/parallel.hpp"

namespace irtbias {

std::string_view to_string(ScoringMethod m) { return m == ScoringMethod::eap ? "EAP" : "MLE"; }

ScoringMethod parse_scoring_method(std::string_view s) {
  std::string low(s);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (low == "eap") return ScoringMethod::eap;
  if (low == "mle") return ScoringMethod::mle;
  throw Error(ErrorCode::InvalidArgument, "unknown scoring method '" + std::string(s) + "'");
}

namespace {

struct PatternDerivs {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

// Pattern log-likelihood and its first two theta derivatives. For an
// adjacent-logit item d/dtheta log P_k = alpha (k - E[k]) and
// d2/dtheta2 = -alpha^2 Var[k].
PatternDerivs pattern_derivs(std::span<const std::int8_t> pattern, std::span<const GPCMParams> params, double theta) {
  PatternDerivs out;
  std::vector<double> p;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == CodedMatrix::kMissing) continue;
    const auto& pr = params[i];
    p.resize(pr.n_categories());
    p_gpcm_into(pr.alpha, pr.steps, theta, p);
    const auto k = static_cast<std::size_t>(pattern[i]);
    double mean = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      mean += static_cast<double>(c) * p[c];
      sq += static_cast<double>(c * c) * p[c];
    }
    out.value += std::log(std::max(p.at(k), kProbFloor));
    out.d1 += pr.alpha * (static_cast<double>(k) - mean);
    out.d2 -= pr.alpha * pr.alpha * std::max(sq - mean * mean, 0.0);
  }
  return out;
}

double pattern_value(std::span<const std::int8_t> pattern, std::span<const GPCMParams> params, double theta) {
  return pattern_derivs(pattern, params, theta).value;
}

AbilityEstimate eap(std::span<const std::int8_t> pattern, std::span<const GPCMParams> params, const QuadratureGrid& grid) {
  const std::size_t Q = grid.size();
  std::vector<double> logpost(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    logpost[q] = std::log(grid.weights[q]) + pattern_value(pattern, params, grid.points[q]);
  }
  const double mx = *std::max_element(logpost.begin(), logpost.end());
  double s = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t q = 0; q < Q; ++q) {
    const double w = std::exp(logpost[q] - mx);
    s += w;
    m1 += w * grid.points[q];
  }
  m1 /= s;
  for (std::size_t q = 0; q < Q; ++q) {
    const double w = std::exp(logpost[q] - mx) / s;
    m2 += w * (grid.points[q] - m1) * (grid.points[q] - m1);
  }
  AbilityEstimate est;
  est.method = ScoringMethod::eap;
  est.theta = m1;
  est.se = std::sqrt(m2);
  return est;
}

AbilityEstimate mle(std::span<const std::int8_t> pattern, std::span<const GPCMParams> params, double bound) {
  auto f = [&](double t) { return pattern_value(pattern, params, t); };

  // Coarse scan brackets the maximum even when discriminations are negative.
  const int n_scan = std::max(2, static_cast<int>(std::ceil(2.0 * bound / 0.05)));
  const double h = 2.0 * bound / n_scan;
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= n_scan; ++k) {
    const double v = f(-bound + k * h);
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  double lo = -bound + std::max(0, best - 1) * h;
  double hi = -bound + std::min(n_scan, best + 1) * h;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = f(a), fb = f(b);
  while (hi - lo > 1e-9) {
    if (fa < fb) {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = f(b);
    } else {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = f(a);
    }
  }
  double theta = 0.5 * (lo + hi);

  for (int it = 0; it < 20; ++it) {
    const PatternDerivs d = pattern_derivs(pattern, params, theta);
    if (!(d.d2 < 0.0)) break;
    const double next = std::clamp(theta - d.d1 / d.d2, -bound, bound);
    if (f(next) < f(theta)) break;
    const double moved = std::abs(next - theta);
    theta = next;
    if (moved < 1e-10) break;
  }

  AbilityEstimate est;
  est.method = ScoringMethod::mle;
  est.theta = theta;
  est.at_bound = bound - std::abs(theta) <= 1e-3;
  const double info = -pattern_derivs(pattern, params, theta).d2;
  est.se = info > 0.0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
  return est;
}

}  // namespace

AbilityEstimate estimate_theta(std::span<const std::int8_t> pattern, std::span<const GPCMParams> params,
                               ScoringMethod method, const QuadratureGrid& grid) {
  if (pattern.size() != params.size()) throw Error(ErrorCode::InvalidArgument, "pattern length differs from item count");
  const int informative = static_cast<int>(
      std::count_if(pattern.begin(), pattern.end(), [](std::int8_t c) { return c != CodedMatrix::kMissing; }));
  AbilityEstimate est;
  if (informative == 0) {
    est.method = ScoringMethod::eap;
    est.theta = 0.0;
    est.se = 1.0;
    est.prior_only = true;
    return est;
  }
  est = method == ScoringMethod::eap ? eap(pattern, params, grid) : mle(pattern, params, grid.bound);
  est.n_informative = informative;
  return est;
}

std::vector<AbilityEstimate> score_respondents(const CalibrationResult& calibration, const CodedMatrix& matrix,
                                               ScoringMethod method) {
  const CodedMatrix aligned = align_to_calibration(calibration, matrix);
  const auto params = fitted_params(calibration);
  const QuadratureGrid grid = calibration.config.grid();
  std::vector<AbilityEstimate> out(aligned.n_respondents());
  parallel_for(out.size(), calibration.config.threads, [&](std::size_t r) {
    AbilityEstimate est = estimate_theta(aligned.row(r), params, method, grid);
    est.respondent_id = aligned.respondents[r].id;
    est.group = aligned.respondents[r].group;
    est.scale_id = calibration.scale_id;
    out[r] = std::move(est);
  });
  return out;
}

ScoreDeviation compare_scores(double theta_new, double theta_ref) {
  const double d = theta_new - theta_ref;
  return {d, std::abs(d)};
}

ScoreDeviation compare_scores(const AbilityEstimate& estimate_new, const AbilityEstimate& estimate_ref) {
  if (estimate_new.scale_id != estimate_ref.scale_id) {
    throw Error(ErrorCode::ScaleMismatch,
                "scores come from calibrations '" + estimate_new.scale_id + "' and '" + estimate_ref.scale_id + "'");
  }
  return compare_scores(estimate_new.theta, estimate_ref.theta);
}

double chi_square_sf(double x, int df) {
  if (df <= 0) throw Error(ErrorCode::InvalidArgument, "chi-square needs df >= 1");
  if (!(x > 0.0)) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), x));
}

namespace {

std::vector<std::string> group_labels(const CodedMatrix& matrix, const std::map<std::string, std::string>* groups) {
  std::vector<std::string> labels(matrix.n_respondents());
  for (std::size_t r = 0; r < matrix.n_respondents(); ++r) {
    const auto& who = matrix.respondents[r];
    if (groups) {
      auto f = groups->find(who.id);
      if (f == groups->end()) throw Error(ErrorCode::InsufficientGroupData, "no group label for respondent '" + who.id + "'");
      labels[r] = f->second;
    } else {
      labels[r] = who.group;
    }
  }
  return labels;
}

CalibrationConfig dif_config(CalibrationConfig cfg) {
  cfg.loglik_tol = std::min(cfg.loglik_tol, 1e-9);
  cfg.param_tol = std::min(cfg.param_tol, 1e-6);
  return cfg;
}

DIFReport dif_against(const CodedMatrix& matrix, const CalibrationResult& constrained, int item_id,
                      const CalibrationConfig& cfg, const std::vector<std::string>& labels) {
  const FittedItem* studied = constrained.find(item_id);
  if (!studied) throw Error(ErrorCode::InvalidArgument, "item " + std::to_string(item_id) + " was not calibrated");
  std::size_t col = 0;
  while (matrix.item_ids[col] != item_id) ++col;

  std::map<std::string, int> answering;
  for (std::size_t r = 0; r < matrix.n_respondents(); ++r) {
    if (matrix.at(r, col) != CodedMatrix::kMissing) ++answering[labels[r]];
  }
  std::set<std::string> all_groups(labels.begin(), labels.end());
  if (all_groups.size() < 2) throw Error(ErrorCode::InsufficientGroupData, "DIF needs at least two groups");
  for (const auto& g : all_groups) {
    if (answering[g] < 10) {
      throw Error(ErrorCode::InsufficientGroupData,
                  "group '" + g + "' has " + std::to_string(answering[g]) + " respondents answering item " + std::to_string(item_id));
    }
  }
  const std::vector<std::string> ordered(all_groups.begin(), all_groups.end());

  // Split the studied column into one column per group; other groups' cells
  // are missing in each split column.
  const int max_id = *std::max_element(matrix.item_ids.begin(), matrix.item_ids.end());
  CodedMatrix aug;
  aug.kind = matrix.kind;
  aug.respondents = matrix.respondents;
  aug.n_categories = matrix.n_categories;
  for (std::size_t c = 0; c < matrix.n_items(); ++c) {
    if (c != col) aug.item_ids.push_back(matrix.item_ids[c]);
  }
  for (std::size_t g = 0; g < ordered.size(); ++g) aug.item_ids.push_back(max_id + 1 + static_cast<int>(g));
  const std::size_t n_aug = aug.item_ids.size();
  aug.cells.assign(aug.n_respondents() * n_aug, CodedMatrix::kMissing);
  for (std::size_t r = 0; r < matrix.n_respondents(); ++r) {
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < matrix.n_items(); ++c) {
      if (c == col) continue;
      aug.at(r, out_c++) = matrix.at(r, c);
    }
    const auto g = static_cast<std::size_t>(std::lower_bound(ordered.begin(), ordered.end(), labels[r]) - ordered.begin());
    aug.at(r, matrix.n_items() - 1 + g) = matrix.at(r, col);
  }

  std::map<int, GPCMParams> start;
  for (const auto& it : constrained.items) start[it.item_id] = it.params;
  for (std::size_t g = 0; g < ordered.size(); ++g) start[max_id + 1 + static_cast<int>(g)] = studied->params;
  const CalibrationResult augmented = calibrate(aug, cfg, start);

  DIFReport rep;
  rep.item_id = item_id;
  rep.constrained_loglik = constrained.marginal_loglik;
  rep.augmented_loglik = augmented.marginal_loglik;
  rep.lr_statistic = std::max(0.0, 2.0 * (augmented.marginal_loglik - constrained.marginal_loglik));
  int added = -static_cast<int>(studied->params.n_categories());
  for (std::size_t g = 0; g < ordered.size(); ++g) {
    const FittedItem* fi = augmented.find(max_id + 1 + static_cast<int>(g));
    if (!fi) continue;  // that group used a single category
    added += static_cast<int>(fi->params.n_categories());
    rep.group_params.push_back({ordered[g], fi->params});
  }
  rep.df = std::max(1, added);
  rep.p_value = chi_square_sf(rep.lr_statistic, rep.df);
  return rep;
}

}  // namespace

DIFReport dif_test(const CodedMatrix& matrix, int item_id, const CalibrationConfig& cfg,
                   const std::map<std::string, std::string>* groups) {
  const auto labels = group_labels(matrix, groups);
  if (std::set<std::string>(labels.begin(), labels.end()).size() < 2) {
    throw Error(ErrorCode::InsufficientGroupData, "DIF needs at least two groups");
  }
  if (std::find(matrix.item_ids.begin(), matrix.item_ids.end(), item_id) == matrix.item_ids.end()) {
    throw Error(ErrorCode::UnknownItem, "item " + std::to_string(item_id));
  }
  const CalibrationConfig tight = dif_config(cfg);
  const CalibrationResult constrained = calibrate(matrix, tight);
  return dif_against(matrix, constrained, item_id, tight, labels);
}

std::vector<DIFReport> dif_test_all(const CodedMatrix& matrix, const CalibrationConfig& cfg,
                                    const std::map<std::string, std::string>* groups) {
  const auto labels = group_labels(matrix, groups);
  if (std::set<std::string>(labels.begin(), labels.end()).size() < 2) {
    throw Error(ErrorCode::InsufficientGroupData, "DIF needs at least two groups");
  }
  const CalibrationConfig tight = dif_config(cfg);
  const CalibrationResult constrained = calibrate(matrix, tight);
  std::vector<DIFReport> out;
  for (const auto& it : constrained.items) out.push_back(dif_against(matrix, constrained, it.item_id, tight, labels));
  return out;
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_scores_csv(std::span<const AbilityEstimate> scores, std::string_view stage, std::ostream& out) {
  out << "respondent_id,group,stage,theta,se,method,at_bound,n_informative,scale_id\n";
  for (const auto& e : scores) {
    out << csv::escape(e.respondent_id) << ',' << csv::escape(e.group) << ',' << stage << ',' << num(e.theta) << ','
        << num(e.se) << ',' << to_string(e.method) << ',' << (e.at_bound ? "true" : "false") << ',' << e.n_informative
        << ',' << e.scale_id << '\n';
  }
}

nlohmann::json to_json(const AbilityEstimate& e) {
  return nlohmann::json{{"respondent_id", e.respondent_id},
                        {"group", e.group},
                        {"theta", e.theta},
                        {"se", e.se},
                        {"method", to_string(e.method)},
                        {"at_bound", e.at_bound},
                        {"n_informative", e.n_informative},
                        {"prior_only", e.prior_only},
                        {"scale_id", e.scale_id}};
}

void write_dif_csv(std::span<const DIFReport> reports, std::ostream& out) {
  out << "item_id,lr,df,p\n";
  for (const auto& r : reports) {
    out << r.item_id << ',' << num(r.lr_statistic) << ',' << r.df << ',' << num(r.p_value) << '\n';
  }
}

nlohmann::json to_json(const DIFReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.group_params) {
    groups.push_back({{"group", g.group}, {"alpha", g.params.alpha}, {"steps", g.params.steps}, {"location", g.params.location()}});
  }
  return nlohmann::json{{"item_id", r.item_id},
                        {"lr_statistic", r.lr_statistic},
                        {"df", r.df},
                        {"p_value", r.p_value},
                        {"constrained_loglik", r.constrained_loglik},
                        {"augmented_loglik", r.augmented_loglik},
                        {"group_params", groups}};
}

}  // namespace irtbias
