#include "irtbias/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "irtbias/csv.hpp"
#include "irtbias/error.hpp"
#include "irtbias/hash.hpp"

#ifndef IRTBIAS_VERSION
#define IRTBIAS_VERSION "0.0.0"
#endif

namespace irtbias {

std::string_view tool_version() { return IRTBIAS_VERSION; }

std::string_view to_string(StageStatus s) {
  switch (s) {
    case StageStatus::fitted: return "fitted";
    case StageStatus::degenerate: return "degenerate";
    case StageStatus::skipped: return "skipped";
  }
  return "fitted";
}

std::vector<GroupSummary> summarize_groups(const std::vector<AbilityEstimate>& scores) {
  std::map<std::string, std::vector<double>> thetas;
  std::map<std::string, int> prior_only;
  for (const auto& e : scores) {
    auto& v = thetas[e.group];
    if (e.prior_only) {
      ++prior_only[e.group];
    } else {
      v.push_back(e.theta);
    }
  }
  std::vector<GroupSummary> out;
  for (const auto& [group, v] : thetas) {
    GroupSummary g;
    g.group = group;
    g.n = static_cast<int>(v.size());
    g.n_prior_only = prior_only[group];
    if (!v.empty()) {
      double s = 0.0;
      for (double t : v) s += t;
      g.mean = s / v.size();
      if (v.size() > 1) {
        double ss = 0.0;
        for (double t : v) ss += (t - g.mean) * (t - g.mean);
        g.sd = std::sqrt(ss / (v.size() - 1));
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

std::vector<AbilityEstimate> prior_only_scores(const CodedMatrix& m, ScoringMethod method) {
  std::vector<AbilityEstimate> out;
  out.reserve(m.n_respondents());
  for (const auto& r : m.respondents) {
    AbilityEstimate e;
    e.respondent_id = r.id;
    e.group = r.group;
    e.method = method;
    e.prior_only = true;
    out.push_back(std::move(e));
  }
  return out;
}

StageReport run_stage(const CodedMatrix& m, Model model, const PipelineConfig& cfg) {
  CalibrationConfig cc = cfg.calibration;
  cc.model = model;
  StageReport st;
  try {
    st.calibration = calibrate(m, cc);
  } catch (const Error& e) {
    if (model == Model::twopl && e.code() == ErrorCode::DegenerateMatrix) {
      st.status = StageStatus::degenerate;
      st.message = e.what();
      st.scores = prior_only_scores(m, cfg.method);
      st.groups = summarize_groups(st.scores);
      return st;
    }
    if (model == Model::gpcm && (e.code() == ErrorCode::DegenerateMatrix || e.code() == ErrorCode::InsufficientData)) {
      st.status = StageStatus::skipped;
      st.message = std::string(to_string(ErrorCode::Stage2Skipped)) + ": " + e.what();
      return st;
    }
    throw;
  }
  st.scores = score_respondents(*st.calibration, m, cfg.method);
  st.groups = summarize_groups(st.scores);
  return st;
}

std::optional<std::vector<GroupDeviation>> deviations(const StageReport& st, const std::string& reference) {
  if (st.status != StageStatus::fitted) return std::nullopt;
  const auto ref = std::find_if(st.groups.begin(), st.groups.end(), [&](const GroupSummary& g) { return g.group == reference; });
  if (ref == st.groups.end() || ref->n == 0) return std::nullopt;
  std::vector<GroupDeviation> out;
  for (const auto& g : st.groups) {
    if (g.n == 0) continue;
    out.push_back(GroupDeviation{g.group, g.mean, ref->mean, compare_scores(g.mean, ref->mean)});
  }
  return out;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

BiasReport run_two_stage(const ResponseMatrix& matrix, const PipelineConfig& cfg, const std::string& responses_hash) {
  cfg.calibration.validate();
  if (cfg.reference_group) {
    const auto& rs = matrix.respondents();
    if (std::none_of(rs.begin(), rs.end(), [&](const Respondent& r) { return r.group == *cfg.reference_group; })) {
      throw Error(ErrorCode::InvalidArgument, "reference group '" + *cfg.reference_group + "' has no respondents");
    }
  }
  BiasReport rep;
  rep.pna_rates_by_group = pna_rates(matrix, GroupBy::group);
  rep.pna_rates_by_respondent = pna_rates(matrix, GroupBy::respondent);
  rep.stage1 = run_stage(binarize_pna(matrix), Model::twopl, cfg);
  rep.stage2 = run_stage(filter_answered(matrix), Model::gpcm, cfg);
  if (cfg.reference_group) {
    rep.reference_group = cfg.reference_group;
    rep.stage1_deviations = deviations(rep.stage1, *cfg.reference_group);
    rep.stage2_deviations = deviations(rep.stage2, *cfg.reference_group);
  }
  rep.provenance.tool_version = std::string(tool_version());
  rep.provenance.responses_hash = responses_hash;
  rep.provenance.bank_version = matrix.bank().version();
  rep.provenance.bank_hash = fnv1a_hex(item_bank_to_json(matrix.bank()).dump());
  nlohmann::json echo = config_echo(cfg.calibration);
  echo.erase("model");
  echo["method"] = to_string(cfg.method);
  echo["reference_group"] = cfg.reference_group ? nlohmann::json(*cfg.reference_group) : nlohmann::json();
  echo["sensitive_threshold"] = cfg.sensitive_threshold;
  rep.provenance.config = std::move(echo);
  return rep;
}

BiasReport run_two_stage(const std::string& responses_path, std::shared_ptr<const ItemBank> bank,
                         const PipelineConfig& cfg) {
  const std::string hash = fnv1a_hex(read_bytes(responses_path));
  return run_two_stage(ingest_responses(responses_path, std::move(bank)), cfg, hash);
}

std::vector<ItemReportRow> item_report(const CalibrationResult& result, double sensitive_threshold) {
  std::vector<ItemReportRow> rows;
  for (const auto& it : result.items) {
    ItemReportRow r;
    r.item_id = it.item_id;
    r.alpha = it.params.alpha;
    r.alpha_se = it.se.empty() ? std::nan("") : it.se[0];
    r.location = it.location();
    r.location_se = it.location_se;
    r.steps = it.params.steps;
    r.sensitive = std::abs(r.location) > sensitive_threshold;
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const ItemReportRow& a, const ItemReportRow& b) {
    const double x = std::abs(a.alpha), y = std::abs(b.alpha);
    if (x != y) return x > y;
    return a.item_id < b.item_id;
  });
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k].rank = static_cast<int>(k) + 1;
  return rows;
}

namespace {

nlohmann::json rates_json(const std::vector<RateRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"key", r.key}, {"rate", r.rate}, {"n_pna", r.n_pna}, {"n_observed", r.n_observed}});
  }
  return out;
}

nlohmann::json item_report_json(const CalibrationResult& result, double threshold) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : item_report(result, threshold)) {
    out.push_back({{"rank", r.rank},
                   {"item_id", r.item_id},
                   {"alpha", r.alpha},
                   {"alpha_se", r.alpha_se},
                   {"location", r.location},
                   {"location_se", r.location_se},
                   {"sensitive", r.sensitive}});
  }
  return out;
}

nlohmann::json stage_json(const StageReport& st, double threshold) {
  nlohmann::json j;
  j["status"] = to_string(st.status);
  j["message"] = st.message.empty() ? nlohmann::json() : nlohmann::json(st.message);
  j["calibration"] = st.calibration ? to_json(*st.calibration) : nlohmann::json();
  j["item_report"] = st.calibration ? item_report_json(*st.calibration, threshold) : nlohmann::json::array();
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& e : st.scores) scores.push_back(to_json(e));
  j["scores"] = std::move(scores);
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : st.groups) {
    groups.push_back({{"group", g.group}, {"n", g.n}, {"n_prior_only", g.n_prior_only}, {"mean", g.mean}, {"sd", g.sd}});
  }
  j["group_summaries"] = std::move(groups);
  return j;
}

nlohmann::json deviations_json(const std::optional<std::vector<GroupDeviation>>& devs) {
  if (!devs) return nlohmann::json();
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : *devs) {
    out.push_back({{"group", d.group},
                   {"mean", d.mean},
                   {"reference_mean", d.reference_mean},
                   {"deviation", d.deviation.signed_deviation},
                   {"magnitude", d.deviation.magnitude}});
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const BiasReport& report, double sensitive_threshold) {
  nlohmann::json j;
  j["pna_rates"] = {{"by_group", rates_json(report.pna_rates_by_group)},
                    {"by_respondent", rates_json(report.pna_rates_by_respondent)}};
  j["stage1"] = stage_json(report.stage1, sensitive_threshold);
  j["stage2"] = stage_json(report.stage2, sensitive_threshold);
  if (report.reference_group) {
    j["deviations"] = {{"reference_group", *report.reference_group},
                       {"stage1", deviations_json(report.stage1_deviations)},
                       {"stage2", deviations_json(report.stage2_deviations)}};
  }
  j["provenance"] = {{"tool_version", report.provenance.tool_version},
                     {"responses_hash", report.provenance.responses_hash},
                     {"bank_version", report.provenance.bank_version},
                     {"bank_hash", report.provenance.bank_hash},
                     {"config", report.provenance.config}};
  return j;
}

std::string dump_report(const BiasReport& report, double sensitive_threshold) {
  return to_json(report, sensitive_threshold).dump(2) + "\n";
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_item_series_csv(const BiasReport& report, std::ostream& out, double sensitive_threshold) {
  out << "stage,item_id,alpha,alpha_se,location,location_se,sensitive\n";
  const std::pair<const char*, const StageReport*> stages[] = {{"stage1", &report.stage1}, {"stage2", &report.stage2}};
  for (const auto& [name, st] : stages) {
    if (!st->calibration) continue;
    std::vector<ItemReportRow> rows = item_report(*st->calibration, sensitive_threshold);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
    for (const auto& r : rows) {
      out << name << ',' << r.item_id << ',' << num(r.alpha) << ',' << num(r.alpha_se) << ',' << num(r.location) << ','
          << num(r.location_se) << ',' << (r.sensitive ? "true" : "false") << '\n';
    }
  }
}

void write_theta_histogram_csv(const BiasReport& report, std::ostream& out, double bin_width) {
  if (!(bin_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "bin width must be positive");
  const double bound = report.provenance.config.value("grid_bound", 6.0);
  const int n_bins = static_cast<int>(std::ceil(2.0 * bound / bin_width - 1e-9));
  out << "stage,group,bin_lo,bin_hi,count\n";
  const std::pair<const char*, const StageReport*> stages[] = {{"stage1", &report.stage1}, {"stage2", &report.stage2}};
  for (const auto& [name, st] : stages) {
    std::map<std::string, std::vector<int>> counts;
    for (const auto& e : st->scores) {
      auto& c = counts[e.group];
      if (c.empty()) c.assign(n_bins, 0);
      if (e.prior_only) continue;
      int b = static_cast<int>(std::floor((e.theta + bound) / bin_width));
      c[std::clamp(b, 0, n_bins - 1)]++;
    }
    for (const auto& [group, c] : counts) {
      for (int b = 0; b < n_bins; ++b) {
        const double lo = -bound + b * bin_width;
        out << name << ',' << csv::escape(group) << ',' << num(lo) << ',' << num(std::min(bound, lo + bin_width)) << ','
            << c[b] << '\n';
      }
    }
  }
}

}  // namespace irtbias
