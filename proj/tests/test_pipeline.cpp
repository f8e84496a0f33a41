#include <cmath>
#include <sstream>

#include "doctest.h"
#include "irtbias/error.hpp"
#include "irtbias/pipeline.hpp"
#include "irtbias/simulator.hpp"
#include "support.hpp"

using namespace irtbias;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

SimSpec persona_spec(int n_items, int per_group, std::uint64_t seed) {
  SimSpec s;
  s.n_items = n_items;
  s.n_respondents_per_group = per_group;
  s.seed = seed;
  s.groups = {SimGroup{"left", -1.5, -2.0, 1.0, {}, {}}, SimGroup{"base", 2.0, 0.0, 1.0, {}, {}},
              SimGroup{"right", -1.5, 2.0, 1.0, {}, {}}};
  return s;
}

double group_mean(const StageReport& st, const std::string& g) {
  for (const auto& s : st.groups) {
    if (s.group == g) return s.mean;
  }
  FAIL("missing group " << g);
  return 0.0;
}

ResponseMatrix with_pna_removed(const ResponseMatrix& m) {
  std::vector<Category> cells = m.cells();
  for (auto& c : cells) {
    if (c == Category::PNA) c = Category::MISSING;
  }
  return ResponseMatrix(m.bank_ptr(), m.respondents(), cells);
}

}  // namespace

TEST_CASE("persona run orders the groups on both stages") {
  const Simulation sim = simulate(persona_spec(30, 200, 5));
  PipelineConfig cfg;
  cfg.reference_group = "base";
  const BiasReport rep = run_two_stage(sim.matrix, cfg, "h");
  REQUIRE(rep.stage1.status == StageStatus::fitted);
  REQUIRE(rep.stage2.status == StageStatus::fitted);
  CHECK(rep.stage1.scores.size() == 600);
  CHECK(rep.stage2.scores.size() == 600);
  CHECK(group_mean(rep.stage2, "left") < group_mean(rep.stage2, "base"));
  CHECK(group_mean(rep.stage2, "base") < group_mean(rep.stage2, "right"));
  CHECK(group_mean(rep.stage1, "base") > group_mean(rep.stage1, "left"));
  CHECK(group_mean(rep.stage1, "base") > group_mean(rep.stage1, "right"));

  REQUIRE(rep.stage2_deviations);
  for (const auto& d : *rep.stage2_deviations) {
    CHECK(d.reference_mean == group_mean(rep.stage2, "base"));
    CHECK(d.deviation.signed_deviation == doctest::Approx(d.mean - d.reference_mean));
    if (d.group == "base") CHECK(d.deviation.magnitude == 0.0);
  }
  CHECK(rep.stage1.scores[0].scale_id == rep.stage1.calibration->scale_id);
  CHECK(rep.stage1.calibration->scale_id != rep.stage2.calibration->scale_id);
  CHECK(rep.provenance.responses_hash == "h");
  CHECK(rep.provenance.tool_version == tool_version());
  CHECK(rep.pna_rates_by_group.size() == 3);

  const auto j = to_json(rep);
  CHECK(j["deviations"]["reference_group"] == "base");
  CHECK(j["stage2"]["status"] == "fitted");
  CHECK(j["provenance"]["config"]["method"] == "EAP");
  CHECK(!j["provenance"]["config"].contains("threads"));
}

TEST_CASE("no reference group omits deviations and nothing else") {
  const Simulation sim = simulate(persona_spec(12, 60, 6));
  PipelineConfig cfg;
  auto plain = to_json(run_two_stage(sim.matrix, cfg));
  CHECK(!plain.contains("deviations"));
  cfg.reference_group = "left";
  auto with = to_json(run_two_stage(sim.matrix, cfg));
  CHECK(with.contains("deviations"));
  with.erase("deviations");
  with["provenance"]["config"].erase("reference_group");
  plain["provenance"]["config"].erase("reference_group");
  CHECK(with.dump() == plain.dump());

  cfg.reference_group = "nobody";
  CHECK(code_of([&] { run_two_stage(sim.matrix, cfg); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("all-PNA input: degenerate stage 1, stage 2 skipped") {
  const Simulation sim = simulate(persona_spec(5, 10, 1));
  std::vector<Category> cells(sim.matrix.cells().size(), Category::PNA);
  const ResponseMatrix all(sim.matrix.bank_ptr(), sim.matrix.respondents(), cells);
  const BiasReport rep = run_two_stage(all, PipelineConfig{});
  CHECK(rep.stage1.status == StageStatus::degenerate);
  CHECK(rep.stage1.scores.size() == 30);
  for (const auto& s : rep.stage1.scores) CHECK(s.prior_only);
  CHECK(rep.stage2.status == StageStatus::skipped);
  CHECK(rep.stage2.message.rfind("Stage2Skipped", 0) == 0);
  CHECK(rep.stage2.scores.empty());
  for (const auto& r : rep.pna_rates_by_group) CHECK(r.rate == 1.0);
  const auto j = to_json(rep);
  CHECK(j["stage2"]["status"] == "skipped");
}

TEST_CASE("stage 2 depends only on answered cells") {
  auto spec = persona_spec(15, 100, 8);
  for (auto& g : spec.groups) g.theta_pna = -1.0;
  const Simulation sim = simulate(spec);
  const BiasReport full = run_two_stage(sim.matrix, PipelineConfig{});
  const BiasReport answered = run_two_stage(with_pna_removed(sim.matrix), PipelineConfig{});
  CHECK(answered.stage1.status == StageStatus::degenerate);
  REQUIRE(full.stage2.status == StageStatus::fitted);
  CHECK(to_json(full)["stage2"].dump() == to_json(answered)["stage2"].dump());
}

TEST_CASE("respondents with no answers get prior-only stage-2 entries") {
  const Simulation sim = simulate(persona_spec(10, 40, 2));
  std::vector<Category> cells = sim.matrix.cells();
  for (std::size_t c = 0; c < 10; ++c) cells[c] = Category::PNA;  // respondent 0 declines everything
  const ResponseMatrix m(sim.matrix.bank_ptr(), sim.matrix.respondents(), cells);
  const BiasReport rep = run_two_stage(m, PipelineConfig{});
  REQUIRE(rep.stage2.scores.size() == 120);
  CHECK(rep.stage2.scores[0].prior_only);
  CHECK(rep.stage2.scores[0].theta == 0.0);
  CHECK(!rep.stage1.scores[0].prior_only);
  int prior_only = 0;
  for (const auto& g : rep.stage2.groups) prior_only += g.n_prior_only;
  CHECK(prior_only >= 1);
}

TEST_CASE("reports are deterministic across runs and thread counts") {
  const Simulation sim = simulate(persona_spec(15, 80, 3));
  PipelineConfig cfg;
  cfg.reference_group = "right";
  cfg.calibration.threads = 1;
  const std::string a = dump_report(run_two_stage(sim.matrix, cfg, "x"));
  const std::string b = dump_report(run_two_stage(sim.matrix, cfg, "x"));
  cfg.calibration.threads = 3;
  const std::string c = dump_report(run_two_stage(sim.matrix, cfg, "x"));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("item report ordering and sensitive flags") {
  CalibrationResult r;
  for (auto [id, a] : {std::pair{1, 0.5}, std::pair{2, 2.0}, std::pair{3, 1.0}}) {
    FittedItem it;
    it.item_id = id;
    it.params = GPCMParams{a, {0.1 * id}};
    it.se = {0.1, 0.2};
    it.location_se = 0.2;
    r.items.push_back(it);
  }
  auto rows = item_report(r);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].item_id == 2);
  CHECK(rows[1].item_id == 3);
  CHECK(rows[2].item_id == 1);
  CHECK(rows[0].rank == 1);
  for (const auto& row : rows) CHECK(!row.sensitive);
  r.items[0].params.steps[0] = -4.5;
  rows = item_report(r);
  CHECK(rows[2].sensitive);
  CHECK(!item_report(r, 5.0)[2].sensitive);
  r.items[2].params.alpha = 2.0;  // tie with item 2 goes by id
  rows = item_report(r);
  CHECK(rows[0].item_id == 2);
  CHECK(rows[1].item_id == 3);
}

TEST_CASE("a planted extreme item is flagged sensitive") {
  SimSpec spec;
  spec.n_items = 12;
  spec.n_respondents_per_group = 2000;
  spec.seed = 4;
  spec.groups = {SimGroup{"g", 0.0, 0.0, 1.0, {}, {}}};
  spec.overrides.push_back({7, 0.7, 5.0, std::nullopt, std::nullopt});
  const Simulation sim = simulate(spec);
  const BiasReport rep = run_two_stage(sim.matrix, PipelineConfig{});
  REQUIRE(rep.stage1.calibration);
  int flagged = 0;
  for (const auto& row : item_report(*rep.stage1.calibration)) {
    if (row.sensitive) {
      ++flagged;
      CHECK(row.item_id == 7);
    }
  }
  CHECK(flagged == 1);
  const auto j = to_json(rep);
  bool seen = false;
  for (const auto& row : j["stage1"]["item_report"]) {
    if (row["item_id"] == 7) seen = row["sensitive"].get<bool>();
  }
  CHECK(seen);
}

TEST_CASE("group summaries") {
  std::vector<AbilityEstimate> s(4);
  s[0].group = s[1].group = s[2].group = "a";
  s[3].group = "b";
  s[0].theta = 1.0;
  s[1].theta = 3.0;
  s[2].prior_only = true;
  s[3].theta = -1.0;
  const auto g = summarize_groups(s);
  REQUIRE(g.size() == 2);
  CHECK(g[0].group == "a");
  CHECK(g[0].n == 2);
  CHECK(g[0].n_prior_only == 1);
  CHECK(g[0].mean == 2.0);
  CHECK(g[0].sd == doctest::Approx(std::sqrt(2.0)));
  CHECK(g[1].sd == 0.0);
}

TEST_CASE("plot data") {
  const Simulation sim = simulate(persona_spec(10, 50, 9));
  const BiasReport rep = run_two_stage(sim.matrix, PipelineConfig{});
  std::ostringstream items, hist;
  write_item_series_csv(rep, items);
  write_theta_histogram_csv(rep, hist);
  CHECK(items.str().rfind("stage,item_id,alpha,alpha_se,location,location_se,sensitive\nstage1,1,", 0) == 0);
  std::istringstream in(hist.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "stage,group,bin_lo,bin_hi,count");
  int rows = 0, total1 = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("stage1,", 0) == 0) total1 += std::stoi(line.substr(line.rfind(',') + 1));
  }
  CHECK(rows == 2 * 3 * 24);
  int informative = 0;
  for (const auto& e : rep.stage1.scores) informative += !e.prior_only;
  CHECK(total1 == informative);
  std::ostringstream dummy;
  CHECK(code_of([&] { write_theta_histogram_csv(rep, dummy, 0.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("file entry point hashes the input bytes") {
  const Simulation sim = simulate(persona_spec(6, 20, 10));
  const auto dir = testsupport::scratch_dir("pipeline");
  const auto path = (dir / "r.csv").string();
  std::ostringstream csv;
  write_responses_csv(sim.matrix, csv);
  testsupport::spit(path, csv.str());
  const auto bank = sim.matrix.bank_ptr();
  const BiasReport a = run_two_stage(path, bank, PipelineConfig{});
  CHECK(a.provenance.responses_hash.size() == 16);
  testsupport::spit(path, csv.str() + "\n");
  const BiasReport b = run_two_stage(path, bank, PipelineConfig{});
  CHECK(a.provenance.responses_hash != b.provenance.responses_hash);
  CHECK(to_json(a)["stage2"].dump() == to_json(b)["stage2"].dump());
}
