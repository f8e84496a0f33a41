#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "CLI11.hpp"
#include "irtbias/calibration.hpp"
#include "irtbias/error.hpp"
#include "irtbias/hash.hpp"
#include "irtbias/item_bank.hpp"
#include "irtbias/pipeline.hpp"
#include "irtbias/response_mapper.hpp"
#include "irtbias/response_store.hpp"
#include "irtbias/scoring.hpp"
#include "irtbias/simulator.hpp"
#include "json.hpp"

namespace irtbias::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Raised for flag combinations CLI11 cannot check by itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temp file in the destination directory, then renames.
void write_atomic(const std::string& path, const std::string& bytes) {
  const fs::path dest(path);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  fs::path tmp = dest;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw Error(ErrorCode::IoError, "cannot write '" + tmp.string() + "'");
    o << bytes;
    o.flush();
    if (!o) throw Error(ErrorCode::IoError, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, dest, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename into '" + path + "': " + ec.message());
  }
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct Common {
  std::string out;
  bool errors_json = false;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

struct CalibFlags {
  std::string model = "2pl";
  CalibrationConfig cfg;
  bool strict = false;
};

void add_out(CLI::App* sub, Common& c, const std::string& what) {
  sub->add_option("--out", c.out, what + " (default: stdout)");
}

void add_threads(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "Worker threads (default: available parallelism)")->check(CLI::PositiveNumber);
}

void add_calibration_flags(CLI::App* sub, CalibFlags& f, bool with_model) {
  if (with_model) {
    sub->add_option("--model", f.model, "IRT model")->check(CLI::IsMember({"2pl", "gpcm"}))->capture_default_str();
  }
  sub->add_option("--quadpoints", f.cfg.quad_points, "Quadrature nodes (odd, >= 11)")->capture_default_str();
  sub->add_option("--grid-bound", f.cfg.grid_bound, "Quadrature grid bound")->capture_default_str();
  sub->add_option("--max-em-cycles", f.cfg.max_em_cycles, "Maximum EM cycles")->capture_default_str();
  sub->add_option("--param-tol", f.cfg.param_tol, "Max absolute parameter change for convergence")->capture_default_str();
  sub->add_option("--loglik-tol", f.cfg.loglik_tol, "Relative log-likelihood change for convergence")->capture_default_str();
  sub->add_option("--alpha-min", f.cfg.alpha_min, "Lower bound for discrimination")->capture_default_str();
  sub->add_flag("--allow-negative-discrimination", f.cfg.allow_negative_discrimination,
                "Do not constrain discrimination to be positive");
  sub->add_option("--seed", f.cfg.seed, "Seed")->capture_default_str();
  sub->add_flag("--strict", f.strict, "Exit 3 when calibration does not converge");
}

// Config errors are usage errors, raised before any input is read.
CalibrationConfig finalize(CalibFlags& f, const Common& c, std::optional<Model> force = std::nullopt) {
  f.cfg.model = force ? *force : parse_model(f.model);
  f.cfg.threads = c.threads;
  try {
    f.cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return f.cfg;
}

void log_config(std::ostream& err, const json& echo) { err << "irtbias: config " << echo.dump() << '\n'; }

std::string log_input(std::ostream& err, const std::string& label, const std::string& path) {
  const std::string h = fnv1a_hex(read_file(path));
  err << "irtbias: input " << label << ' ' << path << " fnv1a=" << h << '\n';
  return h;
}

std::shared_ptr<const ItemBank> load_bank(std::ostream& err, const std::string& source) {
  auto bank = std::make_shared<const ItemBank>(load_item_bank(source));
  err << "irtbias: bank " << bank->version() << " items=" << bank->size()
      << " fnv1a=" << fnv1a_hex(item_bank_to_json(*bank).dump()) << '\n';
  return bank;
}

void emit(const Common& c, std::ostream& out, const std::string& bytes) {
  if (c.out.empty() || c.out == "-") {
    out << bytes;
  } else {
    write_atomic(c.out, bytes);
  }
}

// --- commands ------------------------------------------------------------

int cmd_export_bank(const std::string& bank_src, const Common& c, std::ostream& out, std::ostream& err) {
  const auto bank = load_bank(err, bank_src);
  emit(c, out, item_bank_to_json(*bank).dump(2) + "\n");
  return kOk;
}

struct MapFlags {
  std::string input;
  std::string mode = "fallback";
  std::string endpoint;
  std::string prompt_file;
  int timeout_ms = 10000;
  int max_retries = 2;
  std::string report;
};

int cmd_map(const MapFlags& f, const Common& c, std::ostream& out, std::ostream& err) {
  MapperConfig mc;
  mc.mode = f.mode == "external" ? MapperMode::external : MapperMode::fallback;
  if (!f.endpoint.empty()) mc.endpoint = f.endpoint;
  if (!f.prompt_file.empty()) mc.prompt_template = read_file(f.prompt_file);
  mc.timeout = std::chrono::milliseconds(f.timeout_ms);
  mc.max_retries = f.max_retries;
  if (const char* tok = std::getenv("IRTBIAS_CLASSIFIER_TOKEN"); tok && *tok) mc.auth_token = tok;
  try {
    mc.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  log_config(err, {{"mode", to_string(mc.mode)},
                   {"endpoint", mc.endpoint ? json(*mc.endpoint) : json()},
                   {"timeout_ms", f.timeout_ms},
                   {"max_retries", f.max_retries},
                   {"prompt_template_fnv1a", fnv1a_hex(mc.prompt_template)}});
  log_input(err, "completions", f.input);
  const auto inputs = read_raw_completions(f.input);
  const BatchMapResult res = batch_map(inputs, mc);

  std::ostringstream csv;
  write_records_csv(res.records, csv);
  emit(c, out, csv.str());
  json rows = json::array();
  for (const auto& e : res.errors) {
    rows.push_back({{"index", e.index}, {"respondent_id", e.respondent_id}, {"item_id", e.item_id},
                    {"error", to_string(e.code)}, {"message", e.message}});
  }
  if (!f.report.empty()) write_atomic(f.report, json{{"mapped", res.records.size()}, {"errors", rows}}.dump(2) + "\n");
  err << "irtbias: mapped " << res.records.size() << " of " << inputs.size() << " rows";
  if (!res.errors.empty()) err << ", " << res.errors.size() << " row errors";
  err << '\n';
  return kOk;
}

int cmd_ingest_check(const std::string& responses, const std::string& bank_src, const Common& c, std::ostream& out,
                     std::ostream& err) {
  const auto bank = load_bank(err, bank_src);
  log_input(err, "responses", responses);
  const ResponseMatrix m = ingest_responses(responses, bank);
  std::map<std::string, int> groups;
  for (const auto& r : m.respondents()) ++groups[r.group];
  const std::size_t n_cells = m.n_respondents() * m.n_items();
  const std::size_t n_missing = m.count(Category::MISSING);
  json j{{"respondents", m.n_respondents()},
         {"items", m.n_items()},
         {"cells", n_cells},
         {"observed", n_cells - n_missing},
         {"missing", n_missing},
         {"pna", m.count(Category::PNA)},
         {"groups", groups},
         {"meets_sample_size_rule", m.n_respondents() >= 5 * m.n_items()}};
  emit(c, out, j.dump(2) + "\n");
  return kOk;
}

int cmd_pna_rates(const std::string& responses, const std::string& bank_src, const std::string& by, const Common& c,
                  std::ostream& out, std::ostream& err) {
  const auto bank = load_bank(err, bank_src);
  log_input(err, "responses", responses);
  const ResponseMatrix m = ingest_responses(responses, bank);
  const auto rates = pna_rates(m, by == "respondent" ? GroupBy::respondent : GroupBy::group);
  if (c.out.empty() || c.out == "-") {
    for (const auto& r : rates) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * r.rate);
      out << r.key << '\t' << buf << '\n';
    }
  } else {
    std::ostringstream csv;
    write_rates_csv(rates, csv);
    write_atomic(c.out, csv.str());
  }
  return kOk;
}

CodedMatrix stage_matrix(const ResponseMatrix& m, Model model) {
  return model == Model::twopl ? binarize_pna(m) : filter_answered(m);
}

int cmd_calibrate(const std::string& responses, const std::string& bank_src, CalibFlags& f, const Common& c,
                  std::ostream& out, std::ostream& err) {
  const CalibrationConfig cfg = finalize(f, c);
  log_config(err, config_echo(cfg));
  const auto bank = load_bank(err, bank_src);
  log_input(err, "responses", responses);
  const ResponseMatrix m = ingest_responses(responses, bank);
  const CalibrationResult res = calibrate(stage_matrix(m, cfg.model), cfg);
  emit(c, out, to_json(res).dump(2) + "\n");
  err << "irtbias: " << res.items.size() << " items fitted, " << res.dropped.size() << " dropped, em_cycles="
      << res.em_cycles << (res.converged ? " converged" : " NOT converged") << '\n';
  if (f.strict && !res.converged) throw NotConverged("calibration did not converge");
  return kOk;
}

int cmd_score(const std::string& responses, const std::string& bank_src, const std::string& calib_path,
              const std::string& method, const Common& c, std::ostream& out, std::ostream& err) {
  log_input(err, "calibration", calib_path);
  json cj;
  try {
    cj = json::parse(read_file(calib_path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, calib_path + ": " + e.what());
  }
  CalibrationResult cal = calibration_from_json(cj);
  cal.config.threads = c.threads;
  log_config(err, {{"method", to_string(parse_scoring_method(method))}, {"scale_id", cal.scale_id}});
  const auto bank = load_bank(err, bank_src);
  log_input(err, "responses", responses);
  const ResponseMatrix m = ingest_responses(responses, bank);
  const auto scores = score_respondents(cal, stage_matrix(m, cal.model), parse_scoring_method(method));
  if (ends_with(c.out, ".json")) {
    json arr = json::array();
    for (const auto& s : scores) arr.push_back(to_json(s));
    emit(c, out, arr.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    write_scores_csv(scores, cal.model == Model::twopl ? "stage1" : "stage2", csv);
    emit(c, out, csv.str());
  }
  return kOk;
}

struct RunFlags {
  std::string responses;
  std::string bank = "builtin";
  std::string method = "eap";
  std::string reference_group;
  double sensitive_threshold = 4.0;
  std::string plots_dir;
  std::string scores_csv;
  double bin_width = 0.5;
};

int cmd_run(const RunFlags& rf, CalibFlags& f, const Common& c, std::ostream& out, std::ostream& err) {
  PipelineConfig pc;
  pc.calibration = finalize(f, c, Model::twopl);
  pc.method = parse_scoring_method(rf.method);
  if (!rf.reference_group.empty()) pc.reference_group = rf.reference_group;
  pc.sensitive_threshold = rf.sensitive_threshold;
  const auto bank = load_bank(err, rf.bank);
  log_input(err, "responses", rf.responses);
  const BiasReport rep = run_two_stage(rf.responses, bank, pc);
  log_config(err, rep.provenance.config);
  emit(c, out, dump_report(rep, pc.sensitive_threshold));
  if (!rf.plots_dir.empty()) {
    std::ostringstream items, hist;
    write_item_series_csv(rep, items, pc.sensitive_threshold);
    write_theta_histogram_csv(rep, hist, rf.bin_width);
    write_atomic((fs::path(rf.plots_dir) / "item_parameters.csv").string(), items.str());
    write_atomic((fs::path(rf.plots_dir) / "theta_histograms.csv").string(), hist.str());
  }
  if (!rf.scores_csv.empty()) {
    std::ostringstream csv;
    write_scores_csv(rep.stage1.scores, "stage1", csv);
    std::ostringstream csv2;
    write_scores_csv(rep.stage2.scores, "stage2", csv2);
    const std::string s2 = csv2.str();
    write_atomic(rf.scores_csv, csv.str() + s2.substr(s2.find('\n') + 1));
  }
  for (const auto* st : {&rep.stage1, &rep.stage2}) {
    if (st->status != StageStatus::fitted) err << "irtbias: warning: " << st->message << '\n';
  }
  const bool stalled = (rep.stage1.calibration && !rep.stage1.calibration->converged) ||
                       (rep.stage2.calibration && !rep.stage2.calibration->converged);
  if (f.strict && stalled) throw NotConverged("a calibration stage did not converge");
  return kOk;
}

SimSpec load_spec(const std::string& path, std::optional<std::uint64_t> seed) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  if (seed) j["seed"] = *seed;
  return sim_spec_from_json(j);
}

int cmd_simulate(const std::string& spec_path, std::optional<std::uint64_t> seed, const std::string& truth_path,
                 const std::string& bank_out, const Common& c, std::ostream& out, std::ostream& err) {
  log_input(err, "spec", spec_path);
  const SimSpec spec = load_spec(spec_path, seed);
  log_config(err, to_json(spec));
  const Simulation sim = simulate(spec);
  std::ostringstream csv;
  write_responses_csv(sim.matrix, csv);
  emit(c, out, csv.str());
  if (!truth_path.empty()) write_atomic(truth_path, to_json(sim.truth, sim.matrix.respondents()).dump(2) + "\n");
  if (!bank_out.empty()) write_atomic(bank_out, item_bank_to_json(sim.matrix.bank()).dump(2) + "\n");
  return kOk;
}

int cmd_recover(const std::string& spec_path, std::optional<std::uint64_t> seed, CalibFlags& f, const Common& c,
                std::ostream& out, std::ostream& err) {
  const CalibrationConfig cfg = finalize(f, c, Model::twopl);
  log_input(err, "spec", spec_path);
  const SimSpec spec = load_spec(spec_path, seed);
  json echo = config_echo(cfg);
  echo.erase("model");
  log_config(err, echo);
  const RecoveryReport rep = recovery_report(spec, cfg);
  json j{{"spec", to_json(spec)}, {"config", echo}, {"recovery", to_json(rep)}, {"tool_version", tool_version()}};
  emit(c, out, j.dump(2) + "\n");
  const bool stalled = (rep.stage1 && !rep.stage1->converged) || (rep.stage2 && !rep.stage2->converged);
  if (f.strict && stalled) throw NotConverged("a recovery calibration did not converge");
  return kOk;
}

int cmd_dif(const std::string& responses, const std::string& bank_src, std::optional<int> item, CalibFlags& f,
            const Common& c, std::ostream& out, std::ostream& err) {
  const CalibrationConfig cfg = finalize(f, c);
  log_config(err, config_echo(cfg));
  const auto bank = load_bank(err, bank_src);
  log_input(err, "responses", responses);
  const ResponseMatrix m = ingest_responses(responses, bank);
  const CodedMatrix cm = stage_matrix(m, cfg.model);
  std::vector<DIFReport> reps;
  if (item) {
    reps.push_back(dif_test(cm, *item, cfg));
  } else {
    reps = dif_test_all(cm, cfg);
  }
  if (ends_with(c.out, ".json")) {
    json arr = json::array();
    for (const auto& r : reps) arr.push_back(to_json(r));
    emit(c, out, arr.dump(2) + "\n");
  } else {
    std::ostringstream csv;
    write_dif_csv(reps, csv);
    emit(c, out, csv.str());
  }
  return kOk;
}

json error_json(const Error& e) {
  json j{{"error", to_string(e.code())}, {"message", e.detail()}};
  if (const auto* be = dynamic_cast<const BatchMapError*>(&e)) {
    json rows = json::array();
    for (const auto& r : be->rows()) {
      rows.push_back({{"index", r.index}, {"respondent_id", r.respondent_id}, {"item_id", r.item_id},
                      {"error", to_string(r.code)}, {"message", r.message}});
    }
    j["rows"] = rows;
  }
  return j;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage IRT calibration of perceived ideological bias in LLM outputs", "irtbias"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));

  Common common;
  CalibFlags calib;
  std::string responses;
  std::string bank_src = "builtin";
  std::optional<std::uint64_t> sim_seed;
  std::string errors_flag_help = "On a data error print a JSON error object to stdout";

  auto* export_bank = app.add_subcommand("export-bank", "Write an item bank as JSON");
  export_bank->add_option("--bank", bank_src, "Item bank: 'builtin' or a JSON file")->capture_default_str();

  MapFlags mapf;
  auto* map = app.add_subcommand("map", "Map raw completions (JSONL) to response categories");
  map->add_option("--input", mapf.input, "JSONL with respondent_id, group, item_id, raw_text")
      ->required()
      ->check(CLI::ExistingFile);
  map->add_option("--mode", mapf.mode, "Mapper mode")->check(CLI::IsMember({"fallback", "external"}))->capture_default_str();
  map->add_option("--endpoint", mapf.endpoint, "Classifier URL (external mode)");
  map->add_option("--prompt-template", mapf.prompt_file, "File with a prompt template containing {text}");
  map->add_option("--timeout-ms", mapf.timeout_ms, "Request timeout in milliseconds")->capture_default_str();
  map->add_option("--max-retries", mapf.max_retries, "Retries per row")->capture_default_str();
  map->add_option("--report", mapf.report, "Write the row error report here (JSON)");

  auto* ingest = app.add_subcommand("ingest-check", "Validate a response file and summarize it");
  auto* rates = app.add_subcommand("pna-rates", "PNA rate per group or respondent");
  std::string by = "group";
  rates->add_option("--by", by, "Grouping key")->check(CLI::IsMember({"group", "respondent"}))->capture_default_str();

  auto* cal = app.add_subcommand("calibrate", "Fit a 2PL (PNA) or GPCM (answered) calibration");
  add_calibration_flags(cal, calib, true);

  auto* score = app.add_subcommand("score", "Score respondents against a calibration");
  std::string calib_path, method = "eap";
  score->add_option("--calibration", calib_path, "Calibration JSON")->required()->check(CLI::ExistingFile);

  RunFlags runf;
  auto* run = app.add_subcommand("run", "Full two-stage analysis and bias report");
  add_calibration_flags(run, calib, false);
  run->add_option("--reference-group", runf.reference_group, "Group whose mean theta is the reference");
  run->add_option("--sensitive-threshold", runf.sensitive_threshold, "|location| above which an item is flagged")
      ->capture_default_str();
  run->add_option("--plots-dir", runf.plots_dir, "Write plot-data CSVs into this directory");
  run->add_option("--bin-width", runf.bin_width, "Theta histogram bin width")->capture_default_str();
  run->add_option("--scores-csv", runf.scores_csv, "Also write both stages' scores as CSV");

  auto* sim = app.add_subcommand("simulate", "Generate synthetic responses from a simulation spec");
  std::string spec_path, truth_path, bank_out;
  sim->add_option("--spec", spec_path, "Simulation spec JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_seed, "Override the spec seed");
  sim->add_option("--truth", truth_path, "Write ground truth JSON here");
  sim->add_option("--bank-out", bank_out, "Write the simulated item bank JSON here");

  auto* recover = app.add_subcommand("recover", "Parameter-recovery study for a simulation spec");
  recover->add_option("--spec", spec_path, "Simulation spec JSON")->required()->check(CLI::ExistingFile);
  add_calibration_flags(recover, calib, false);
  // --seed on recover overrides the simulation seed.
  recover->get_option("--seed")->description("Override the spec seed");

  auto* dif = app.add_subcommand("dif", "Likelihood-ratio DIF test across groups");
  std::optional<int> dif_item;
  add_calibration_flags(dif, calib, true);
  dif->add_option("--item", dif_item, "Test only this item (default: every calibrated item)");

  for (auto* sub : {ingest, rates, cal, score, run, dif}) {
    sub->add_option("--responses", responses, "Response CSV or JSONL")->required()->check(CLI::ExistingFile);
  }
  for (auto* sub : {ingest, rates, cal, score, run, dif}) {
    sub->add_option("--bank", bank_src, "Item bank: 'builtin' or a JSON file")->capture_default_str();
  }
  for (auto* sub : {score, run}) {
    sub->add_option("--method", method, "Scoring method")
        ->check(CLI::IsMember({"eap", "mle", "EAP", "MLE"}))
        ->capture_default_str();
  }
  for (auto* sub : {export_bank, map, ingest, rates, cal, score, run, sim, recover, dif}) {
    add_out(sub, common, "Output file");
    sub->add_flag("--errors-json", common.errors_json, errors_flag_help);
  }
  for (auto* sub : {cal, score, run, recover, dif}) add_threads(sub, common);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  auto report = [&](const std::string& code, const std::string& msg) {
    if (common.errors_json) out << json{{"error", code}, {"message", msg}}.dump() << '\n';
  };
  try {
    if (*export_bank) return cmd_export_bank(bank_src, common, out, err);
    if (*map) return cmd_map(mapf, common, out, err);
    if (*ingest) return cmd_ingest_check(responses, bank_src, common, out, err);
    if (*rates) return cmd_pna_rates(responses, bank_src, by, common, out, err);
    if (*cal) return cmd_calibrate(responses, bank_src, calib, common, out, err);
    if (*score) return cmd_score(responses, bank_src, calib_path, method, common, out, err);
    if (*run) {
      runf.responses = responses;
      runf.bank = bank_src;
      runf.method = method;
      return cmd_run(runf, calib, common, out, err);
    }
    if (*sim) return cmd_simulate(spec_path, sim_seed, truth_path, bank_out, common, out, err);
    if (*recover) {
      std::optional<std::uint64_t> seed;
      if (recover->count("--seed")) seed = calib.cfg.seed;
      return cmd_recover(spec_path, seed, calib, common, out, err);
    }
    if (*dif) return cmd_dif(responses, bank_src, dif_item, calib, common, out, err);
  } catch (const UsageError& e) {
    err << "irtbias: usage error: " << e.what() << '\n';
    report("UsageError", e.what());
    return kUsage;
  } catch (const NotConverged& e) {
    err << "irtbias: " << e.what() << '\n';
    report("NonConvergence", e.what());
    return kNotConverged;
  } catch (const Error& e) {
    err << "irtbias: error: " << e.what() << '\n';
    if (common.errors_json) out << error_json(e).dump() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "irtbias: error: " << e.what() << '\n';
    report("IoError", e.what());
    return kDataError;
  }
  return kUsage;
}

}  // namespace irtbias::cli
