#include "irtbias/simulator.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <set>

#include "irtbias/error.hpp"

namespace irtbias {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t CounterRng::bits(Stream stream, std::uint64_t a, std::uint64_t b, std::uint64_t draw) const {
  std::uint64_t h = splitmix64(seed_);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return splitmix64(h ^ draw);
}

double CounterRng::uniform(Stream stream, std::uint64_t a, std::uint64_t b, std::uint64_t draw) const {
  // 53 random bits, shifted by half an ulp so 0 is never returned.
  return (static_cast<double>(bits(stream, a, b, draw) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(Stream stream, std::uint64_t a, std::uint64_t b, std::uint64_t draw) const {
  const double u1 = uniform(stream, a, b, 2 * draw);
  const double u2 = uniform(stream, a, b, 2 * draw + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SimSpec::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (n_items < 2) fail("n_items must be >= 2");
  if (n_respondents_per_group < 1) fail("n_respondents_per_group must be >= 1");
  if (groups.empty()) fail("at least one group is required");
  if (!(alpha_lo > 0.0) || alpha_hi < alpha_lo) fail("alpha range must satisfy 0 < lo <= hi");
  if (beta_hi < beta_lo) fail("beta range must satisfy lo <= hi");
  if (!(step_spread > 0.0)) fail("step_spread must be positive");
  if (!(recode_fraction >= 0.0 && recode_fraction <= 1.0)) fail("recode_fraction must lie in [0, 1]");
  for (const auto& g : groups) {
    if (g.label.empty()) fail("group labels must be non-empty");
    if (!(g.theta_sd >= 0.0)) fail("theta_sd must be >= 0");
    if (!std::isfinite(g.theta_pna) || !std::isfinite(g.theta_bias)) fail("group thetas must be finite");
  }
  for (const auto& o : overrides) {
    if (o.item_id < 1 || o.item_id > n_items) fail("override for unknown item " + std::to_string(o.item_id));
  }
  if (bank && static_cast<int>(bank->size()) != n_items) fail("n_items must equal the bank size");
}

namespace {

std::optional<double> opt_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

std::map<int, double> shift_map(const nlohmann::json& j, const char* key) {
  std::map<int, double> out;
  if (!j.contains(key)) return out;
  for (auto it = j[key].begin(); it != j[key].end(); ++it) out[std::stoi(it.key())] = it.value().get<double>();
  return out;
}

nlohmann::json shift_json(const std::map<int, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::string_view to_string(SimStages s) {
  switch (s) {
    case SimStages::both: return "both";
    case SimStages::pna: return "pna";
    case SimStages::bias: return "bias";
  }
  return "both";
}

}  // namespace

SimSpec sim_spec_from_json(const nlohmann::json& j) {
  try {
    SimSpec s;
    s.n_items = j.at("n_items").get<int>();
    s.n_respondents_per_group = j.at("n_respondents_per_group").get<int>();
    for (const auto& g : j.at("groups")) {
      SimGroup sg;
      sg.label = g.at("label").get<std::string>();
      sg.theta_pna = g.value("theta_pna", 0.0);
      sg.theta_bias = g.value("theta_bias", 0.0);
      sg.theta_sd = g.value("theta_sd", 1.0);
      sg.pna_beta_shift = shift_map(g, "pna_beta_shift");
      sg.bias_location_shift = shift_map(g, "bias_location_shift");
      s.groups.push_back(std::move(sg));
    }
    if (j.contains("item_gen")) {
      const auto& ig = j["item_gen"];
      if (ig.contains("alpha_range")) {
        s.alpha_lo = ig["alpha_range"].at(0).get<double>();
        s.alpha_hi = ig["alpha_range"].at(1).get<double>();
      }
      if (ig.contains("beta_range")) {
        s.beta_lo = ig["beta_range"].at(0).get<double>();
        s.beta_hi = ig["beta_range"].at(1).get<double>();
      }
      s.step_spread = ig.value("step_spread", s.step_spread);
    }
    s.recode_fraction = j.value("recode_fraction", s.recode_fraction);
    s.seed = j.value("seed", s.seed);
    const std::string stages = j.value("stages", std::string("both"));
    if (stages == "both") s.stages = SimStages::both;
    else if (stages == "pna") s.stages = SimStages::pna;
    else if (stages == "bias") s.stages = SimStages::bias;
    else throw Error(ErrorCode::InvalidSpec, "stages must be both, pna or bias");
    for (const auto& o : j.value("overrides", nlohmann::json::array())) {
      ItemOverride io;
      io.item_id = o.at("item_id").get<int>();
      io.pna_alpha = opt_number(o, "pna_alpha");
      io.pna_beta = opt_number(o, "pna_beta");
      io.bias_alpha = opt_number(o, "bias_alpha");
      io.bias_location = opt_number(o, "bias_location");
      s.overrides.push_back(io);
    }
    if (j.contains("bank") && j["bank"].is_string()) {
      const auto src = j["bank"].get<std::string>();
      s.bank = std::make_shared<const ItemBank>(src == "builtin" ? builtin_item_bank() : load_item_bank(src));
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("sim spec: ") + e.what());
  }
}

nlohmann::json to_json(const SimSpec& spec) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : spec.groups) {
    groups.push_back({{"label", g.label},
                      {"theta_pna", g.theta_pna},
                      {"theta_bias", g.theta_bias},
                      {"theta_sd", g.theta_sd},
                      {"pna_beta_shift", shift_json(g.pna_beta_shift)},
                      {"bias_location_shift", shift_json(g.bias_location_shift)}});
  }
  nlohmann::json overrides = nlohmann::json::array();
  for (const auto& o : spec.overrides) {
    nlohmann::json jo{{"item_id", o.item_id}};
    if (o.pna_alpha) jo["pna_alpha"] = *o.pna_alpha;
    if (o.pna_beta) jo["pna_beta"] = *o.pna_beta;
    if (o.bias_alpha) jo["bias_alpha"] = *o.bias_alpha;
    if (o.bias_location) jo["bias_location"] = *o.bias_location;
    overrides.push_back(std::move(jo));
  }
  nlohmann::json j{{"n_items", spec.n_items},
                   {"n_respondents_per_group", spec.n_respondents_per_group},
                   {"groups", std::move(groups)},
                   {"item_gen",
                    {{"alpha_range", {spec.alpha_lo, spec.alpha_hi}},
                     {"beta_range", {spec.beta_lo, spec.beta_hi}},
                     {"step_spread", spec.step_spread}}},
                   {"recode_fraction", spec.recode_fraction},
                   {"seed", spec.seed},
                   {"stages", to_string(spec.stages)},
                   {"overrides", std::move(overrides)}};
  if (spec.bank) j["bank_version"] = spec.bank->version();
  return j;
}

Simulation simulate(const SimSpec& spec) {
  spec.validate();
  const CounterRng rng(spec.seed);
  const auto n_items = static_cast<std::size_t>(spec.n_items);

  GroundTruth truth;
  truth.recode.resize(n_items);
  std::set<int> recode_ids;
  for (std::size_t i = 0; i < n_items; ++i) {
    const int id = static_cast<int>(i) + 1;
    auto span_draw = [&](CounterRng::Stream s, double lo, double hi) { return lo + (hi - lo) * rng.uniform(s, i); };
    TwoPLParams pna{span_draw(CounterRng::kItemPnaAlpha, spec.alpha_lo, spec.alpha_hi),
                    span_draw(CounterRng::kItemPnaBeta, spec.beta_lo, spec.beta_hi)};
    double bias_alpha = span_draw(CounterRng::kItemBiasAlpha, spec.alpha_lo, spec.alpha_hi);
    double location = span_draw(CounterRng::kItemBiasLocation, spec.beta_lo, spec.beta_hi);
    for (const auto& o : spec.overrides) {
      if (o.item_id != id) continue;
      if (o.pna_alpha) pna.alpha = *o.pna_alpha;
      if (o.pna_beta) pna.beta = *o.pna_beta;
      if (o.bias_alpha) bias_alpha = *o.bias_alpha;
      if (o.bias_location) location = *o.bias_location;
    }
    truth.pna.push_back(pna);
    truth.bias.push_back(GPCMParams{bias_alpha, {location - spec.step_spread, location, location + spec.step_spread}});
    truth.recode[i] = spec.bank ? spec.bank->item(id).reverse_coded
                                : rng.uniform(CounterRng::kItemRecode, i) < spec.recode_fraction;
    if (truth.recode[i]) recode_ids.insert(id);
  }

  std::shared_ptr<const ItemBank> bank = spec.bank;
  if (!bank) {
    std::vector<Item> items;
    for (std::size_t i = 0; i < n_items; ++i) {
      items.push_back(Item{static_cast<int>(i) + 1, "Simulated item " + std::to_string(i + 1), Subscale::social, false, {"simulated"}});
    }
    bank = std::make_shared<const ItemBank>(std::move(items), "simulated/" + std::to_string(spec.seed), recode_ids);
  }

  std::vector<Respondent> respondents;
  for (const auto& g : spec.groups) {
    for (int k = 0; k < spec.n_respondents_per_group; ++k) {
      char id[32];
      std::snprintf(id, sizeof id, "/r%05d", k + 1);
      respondents.push_back({g.label + id, g.label});
      const auto r = respondents.size() - 1;
      truth.theta_pna.push_back(g.theta_pna + g.theta_sd * rng.normal(CounterRng::kThetaPna, r));
      truth.theta_bias.push_back(g.theta_bias + g.theta_sd * rng.normal(CounterRng::kThetaBias, r));
    }
  }

  const std::size_t n_resp = respondents.size();
  std::vector<Category> cells(n_resp * n_items);
  truth.codes.assign(n_resp * n_items, -1);
  std::vector<double> probs(4);
  std::size_t r = 0;
  for (const auto& g : spec.groups) {
    for (int k = 0; k < spec.n_respondents_per_group; ++k, ++r) {
      for (std::size_t i = 0; i < n_items; ++i) {
        const int id = static_cast<int>(i) + 1;
        TwoPLParams pna = truth.pna[i];
        if (auto s = g.pna_beta_shift.find(id); s != g.pna_beta_shift.end()) pna.beta += s->second;
        const bool avoid = spec.stages != SimStages::bias &&
                           rng.uniform(CounterRng::kCellPna, r, i) < p_2pl(pna, truth.theta_pna[r]);
        if (avoid) {
          cells[r * n_items + i] = Category::PNA;
          continue;
        }
        GPCMParams bias = truth.bias[i];
        if (auto s = g.bias_location_shift.find(id); s != g.bias_location_shift.end()) {
          for (double& st : bias.steps) st += s->second;
        }
        p_gpcm_into(bias.alpha, bias.steps, truth.theta_bias[r], probs);
        const double u = rng.uniform(CounterRng::kCellCategory, r, i);
        int code = 3;
        double cum = 0.0;
        for (int c = 0; c < 4; ++c) {
          cum += probs[static_cast<std::size_t>(c)];
          if (u < cum) {
            code = c;
            break;
          }
        }
        truth.codes[r * n_items + i] = static_cast<std::int8_t>(code);
        cells[r * n_items + i] = category_from_code(truth.recode[i] ? 3 - code : code);
      }
    }
  }
  return Simulation{ResponseMatrix(bank, std::move(respondents), std::move(cells)), std::move(truth)};
}

nlohmann::json to_json(const GroundTruth& truth, const std::vector<Respondent>& respondents) {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < truth.pna.size(); ++i) {
    items.push_back({{"item_id", static_cast<int>(i) + 1},
                     {"pna_alpha", truth.pna[i].alpha},
                     {"pna_beta", truth.pna[i].beta},
                     {"bias_alpha", truth.bias[i].alpha},
                     {"bias_steps", truth.bias[i].steps},
                     {"bias_location", truth.bias[i].location()},
                     {"reverse_coded", static_cast<bool>(truth.recode[i])}});
  }
  nlohmann::json people = nlohmann::json::array();
  for (std::size_t r = 0; r < respondents.size(); ++r) {
    people.push_back({{"respondent_id", respondents[r].id},
                      {"group", respondents[r].group},
                      {"theta_pna", truth.theta_pna[r]},
                      {"theta_bias", truth.theta_bias[r]}});
  }
  return {{"items", std::move(items)}, {"respondents", std::move(people)}};
}

namespace {

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return a.empty() ? 0.0 : std::sqrt(s / static_cast<double>(a.size()));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

StageRecovery recover_stage(const CodedMatrix& m, Model model, const CalibrationConfig& base, const GroundTruth& truth,
                            const std::vector<double>& theta_true) {
  CalibrationConfig cfg = base;
  cfg.model = model;
  const CalibrationResult res = calibrate(m, cfg);
  StageRecovery out;
  out.model = model;
  out.n_items_fitted = static_cast<int>(res.items.size());
  out.n_items_dropped = static_cast<int>(res.dropped.size());
  out.converged = res.converged;
  out.em_cycles = res.em_cycles;
  out.fit_r2 = res.fit_r2;
  std::vector<double> a_hat, a_true, l_hat, l_true;
  for (const auto& it : res.items) {
    const auto i = static_cast<std::size_t>(it.item_id - 1);
    a_hat.push_back(it.params.alpha);
    l_hat.push_back(it.location());
    if (model == Model::twopl) {
      a_true.push_back(truth.pna[i].alpha);
      l_true.push_back(truth.pna[i].beta);
    } else {
      a_true.push_back(truth.bias[i].alpha);
      l_true.push_back(truth.bias[i].location());
    }
  }
  out.rmse_alpha = rmse(a_hat, a_true);
  out.rmse_location = rmse(l_hat, l_true);
  const auto scores = score_respondents(res, m, ScoringMethod::eap);
  std::vector<double> est, tru;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (scores[r].prior_only) continue;
    est.push_back(scores[r].theta);
    tru.push_back(theta_true[r]);
  }
  out.theta_correlation = pearson(est, tru);
  return out;
}

nlohmann::json stage_json(const StageRecovery& s) {
  return {{"model", to_string(s.model)},
          {"n_items_fitted", s.n_items_fitted},
          {"n_items_dropped", s.n_items_dropped},
          {"rmse_alpha", s.rmse_alpha},
          {"rmse_location", s.rmse_location},
          {"theta_correlation", s.theta_correlation},
          {"converged", s.converged},
          {"em_cycles", s.em_cycles},
          {"fit_r2", s.fit_r2}};
}

}  // namespace

RecoveryReport recovery_report(const SimSpec& spec, const CalibrationConfig& cfg) {
  const Simulation sim = simulate(spec);
  RecoveryReport rep;
  if (spec.stages != SimStages::bias) {
    rep.stage1 = recover_stage(binarize_pna(sim.matrix), Model::twopl, cfg, sim.truth, sim.truth.theta_pna);
  }
  if (spec.stages != SimStages::pna) {
    rep.stage2 = recover_stage(filter_answered(sim.matrix), Model::gpcm, cfg, sim.truth, sim.truth.theta_bias);
  }
  return rep;
}

nlohmann::json to_json(const RecoveryReport& report) {
  nlohmann::json j = nlohmann::json::object();
  j["stage1"] = report.stage1 ? stage_json(*report.stage1) : nlohmann::json();
  j["stage2"] = report.stage2 ? stage_json(*report.stage2) : nlohmann::json();
  return j;
}

}  // namespace irtbias
