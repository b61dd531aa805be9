#include "caol/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "caol/bounds.hpp"
#include "caol/caol.hpp"
#include "caol/errors.hpp"
#include "caol/ingest.hpp"
#include "caol/kernels.hpp"
#include "caol/report.hpp"
#include "caol/synth.hpp"

namespace caol::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using report::format_double;

constexpr const char* kModule = "cli-report";

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::InvalidArgument, kModule, msg); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, kModule, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, kModule, path.string() + ": " + e.what());
  }
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& text) {
  const auto x = text.find('x');
  std::size_t a = 0, b = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    a = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    b = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    config_error("--filters expects AxB (e.g. 5x5), got '" + text + "'");
  }
  if (a == 0 || b == 0) config_error("--filters dimensions must be >= 1");
  return {a, b};
}

// ---------------------------------------------------------------------------
// Options shared between subcommands

struct SpecFlags {
  std::size_t n = 256, r = 8, k = 8, l = 32, trials = 100;
  std::string signals = "gaussian";
  std::string mismatch = "iid-gaussian";
  double scale = 0.1;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void attach(CLI::App* app, bool with_trials) {
    app->add_option("--n", n, "Signal length N")->capture_default_str();
    app->add_option("--r", r, "Filter length R")->capture_default_str();
    app->add_option("--k", k, "Number of filters K")->capture_default_str();
    app->add_option("--l", l, "Training samples L")->capture_default_str();
    app->add_option("--signals", signals, "gaussian | impulse")->capture_default_str();
    app->add_option("--mismatch", mismatch, "zero | iid-gaussian | bounded-ball | correlated")
        ->capture_default_str();
    app->add_option("--scale", scale, "Mismatch scale (s, sigma or c)")->capture_default_str();
    app->add_option("--noise", noise, "Bounded noise radius added to correlated mismatch")
        ->capture_default_str();
    if (with_trials) app->add_option("--trials", trials, "Monte Carlo trials")->capture_default_str();
    app->add_option("--seed", seed, "Base RNG seed")->capture_default_str();
  }

  SynthSpec spec() const {
    SynthSpec s;
    s.n = n;
    s.r = r;
    s.k = k;
    s.l = l;
    s.trials = trials;
    s.signals = parse_signal_model(signals);
    s.mismatch = {parse_mismatch_kind(mismatch), scale, noise};
    s.seed = seed;
    s.validate();
    return s;
  }
};

struct DataFlags {
  std::string data;
  std::string filters;
  std::size_t num_filters = 0;
};

struct LoadedData {
  std::vector<Signal> signals;
  OffsetPattern pattern = OffsetPattern::line(1);
  std::vector<LiftedOperator> lifts;
  std::size_t k = 0;
  json manifest;
  std::vector<std::string> warnings;
};

LoadedData load_data(const DataFlags& flags, bool need_filters = true) {
  if (flags.data.empty()) config_error("--data is required (path to a dataset manifest)");
  if (!fs::is_regular_file(flags.data)) config_error("--data: manifest '" + flags.data + "' not found");
  LoadedData out;
  const ingest::DatasetManifest manifest = ingest::load_manifest(flags.data);
  out.manifest = read_json(flags.data);
  out.signals = ingest::load_dataset(manifest, &out.warnings);
  const Geometry& g = out.signals.front().geometry();

  if (flags.filters.empty()) {
    if (need_filters) config_error("--filters is required (HxW window for images, KxR for 1-D data)");
    return out;
  }
  const auto [a, b] = parse_dims(flags.filters);
  if (g.is_grid()) {
    out.pattern = OffsetPattern::window(a, b);
    out.k = a * b;
  } else {
    out.pattern = OffsetPattern::line(b);
    out.k = a;
  }
  if (flags.num_filters > 0) out.k = flags.num_filters;
  out.lifts = build_lifts(out.signals, out.pattern);
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration: every option of the selected command, as strings

const std::set<std::string> kPathOptions = {"data", "run", "reference"};
const std::set<std::string> kUnrecorded = {"help", "config", "out"};

json record_options(const CLI::App* app) {
  json options = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (kUnrecorded.count(name)) continue;
    const bool flag = opt->get_type_size_max() == 0;
    const bool vector = opt->get_items_expected_max() > 1;
    if (flag) {
      if (opt->count() > 0) options[name] = true;
      continue;
    }
    std::vector<std::string> values = opt->results();
    if (values.empty()) {
      if (vector || opt->get_default_str().empty()) continue;
      values.push_back(opt->get_default_str());
    }
    if (kPathOptions.count(name))
      for (std::string& v : values) v = fs::absolute(v).lexically_normal().string();
    if (vector)
      options[name] = values;
    else
      options[name] = values.back();
  }
  return options;
}

struct RunContext {
  std::vector<std::string> command;
  json options;
  std::string out;
  std::uint64_t seed = 0;

  json config() const {
    return {{"command", command}, {"options", options}, {"out", out}, {"caol_version", report::kVersion}};
  }
};

/// Expands `--config FILE`: the recorded command and options come first, and
/// options given explicitly on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> user;
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) config_error("--config needs a file");
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      user.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;
  if (!fs::is_regular_file(config_path)) config_error("--config: '" + config_path + "' not found");
  const json cfg = read_json(config_path);
  if (!cfg.contains("command") || !cfg.contains("options"))
    config_error("--config: '" + config_path + "' is not a caol run config");
  const auto command = cfg.at("command").get<std::vector<std::string>>();

  std::size_t skip = 0;
  while (skip < command.size() && skip < user.size() && user[skip] == command[skip]) ++skip;
  if (skip != 0 && skip != command.size())
    config_error("--config records command '" + command.front() + "'; cannot mix commands");
  std::set<std::string> explicit_names;
  for (std::size_t i = skip; i < user.size(); ++i)
    if (user[i].rfind("--", 0) == 0) explicit_names.insert(user[i].substr(2, user[i].find('=') - 2));

  std::vector<std::string> out = command;
  for (const auto& [name, value] : cfg.at("options").items()) {
    if (explicit_names.count(name)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back("--" + name);
    } else if (value.is_array()) {
      std::string joined;
      for (const json& v : value) joined += (joined.empty() ? "" : ",") + v.get<std::string>();
      out.push_back("--" + name + "=" + joined);
    } else {
      out.push_back("--" + name + "=" + value.get<std::string>());
    }
  }
  if (!explicit_names.count("out") && cfg.contains("out")) {
    out.push_back("--out=" + cfg.at("out").get<std::string>());
  }
  out.insert(out.end(), user.begin() + static_cast<std::ptrdiff_t>(skip), user.end());
  return out;
}

std::string tensor_name(const char* stem, std::size_t index, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%0*zu.tnsr", stem, width, index);
  return buf;
}

json hp_json(const HpBound& hp) {
  return {{"delta", hp.delta}, {"bound", hp.bound}, {"prob", hp.prob}, {"vacuous", hp.vacuous}};
}

json verify_json(const VerifyReport& r) {
  return {{"theorem", r.theorem},
          {"trials", r.trials.size()},
          {"held", r.held},
          {"max_violation", r.max_violation},
          {"mean_error", r.mean_error},
          {"std_error", r.std_error},
          {"expected_bound", r.expected_bound},
          {"sigma_bar_sq", r.sigma_bar_sq},
          {"rho_sq", r.rho_sq},
          {"delta", r.delta},
          {"coverage", r.coverage},
          {"probability", r.probability},
          {"vacuous", r.vacuous},
          {"rho_bar", r.rho_chi.rho_bar},
          {"chi_bar", r.rho_chi.chi_bar},
          {"passed", r.passed}};
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  DataFlags data;
  double alpha = 1e-3;
  std::size_t iters = 1000;
  double tol = 1e-8;
  std::size_t record_every = 50;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainFlags& f, const RunContext& ctx, const report::OutputDir& out, std::ostream& log) {
  LoadedData data = load_data(f.data);
  TrainConfig config;
  config.alpha = f.alpha;
  config.max_iters = f.iters;
  config.rel_tol = f.tol;
  config.record_every = f.record_every;
  config.seed = f.seed;

  log << "train: " << data.signals.size() << " samples, R = " << data.pattern.size() << ", K = " << data.k
      << "\n";
  const TrainResult result = caol_train(data.lifts, data.k, config);
  const json cfg = ctx.config();

  out.write("filters.tnsr", ingest::encode_matrix(result.filters.matrix()));
  for (std::size_t l = 0; l < result.codes.size(); ++l)
    out.write("codes/" + tensor_name("code", l, 5), ingest::encode_matrix(result.codes[l]));

  json snaps = json::array();
  for (const TrainSnapshot& s : result.trace.snapshots) {
    const std::string filters = "snapshots/" + tensor_name("filters", s.iteration, 6);
    const std::string cross = "snapshots/" + tensor_name("cross", s.iteration, 6);
    out.write(filters, ingest::encode_matrix(s.filters));
    out.write(cross, ingest::encode_matrix(s.code_cross));
    snaps.push_back({{"iteration", s.iteration},
                     {"objective", s.objective},
                     {"sparsity", s.sparsity},
                     {"filters", filters},
                     {"code_cross", cross}});
  }
  json snap_doc = report::provenance(cfg, ctx.seed);
  snap_doc["record_every"] = result.trace.record_every;
  snap_doc["snapshots"] = snaps;
  out.write("snapshots.json", snap_doc.dump(2) + "\n");

  report::CsvTable trace({"iteration", "objective", "sparsity"});
  report::stamp(trace, cfg, ctx.seed);
  for (std::size_t i = 0; i < result.trace.objectives.size(); ++i)
    trace.add_row({std::to_string(i), format_double(result.trace.objectives[i]),
                   format_double(result.trace.sparsity[i])});
  out.write("trace.csv", trace.str());

  json summary = report::provenance(cfg, ctx.seed);
  summary["manifest"] = data.manifest;
  summary["samples"] = data.signals.size();
  summary["filter_size"] = data.pattern.size();
  summary["filter_count"] = data.k;
  summary["iterations"] = result.trace.iterations();
  summary["converged"] = result.trace.converged;
  summary["initial_objective"] = result.trace.initial_objective;
  summary["final_objective"] = result.trace.objectives.back();
  summary["final_sparsity"] = result.trace.sparsity.back();
  summary["max_relative_increase"] = result.trace.max_relative_increase();
  summary["frame_defect"] = result.filters.frame_defect();
  summary["warnings"] = data.warnings;
  out.write("summary.json", summary.dump(2) + "\n");
  out.write("config.json", cfg.dump(2) + "\n");

  log << "train: " << result.trace.iterations() << " iterations, F = "
      << format_double(result.trace.objectives.back()) << (result.trace.converged ? " (converged)" : "")
      << "\n";
  return report::kExitOk;
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsFlags {
  std::string run;
  std::string reference;
  SpecFlags spec;
  std::vector<double> deltas;
};

/// Rebuilds the data set a saved run was trained on.
LoadedData load_run_data(const fs::path& run) {
  const json cfg = read_json(run / "config.json");
  const json& opts = cfg.at("options");
  DataFlags flags;
  flags.data = opts.value("data", "");
  flags.filters = opts.value("filters", "");
  flags.num_filters = std::stoul(opts.value("num-filters", "0"));
  return load_data(flags);
}

int cmd_bounds(const BoundsFlags& f, const RunContext& ctx, const report::OutputDir& out, std::ostream& log) {
  std::vector<LiftedOperator> lifts;
  CodeSet codes;
  MismatchSet mismatches;
  json source;
  if (!f.run.empty()) {
    const fs::path run(f.run);
    if (!fs::is_regular_file(run / "config.json")) config_error("--run: no config.json under '" + f.run + "'");
    LoadedData data = load_run_data(run);
    lifts = std::move(data.lifts);
    for (std::size_t l = 0; l < lifts.size(); ++l)
      codes.push_back(ingest::load_matrix(run / "codes" / tensor_name("code", l, 5)));
    const Matrix reference = ingest::load_matrix(f.reference.empty() ? run / "filters.tnsr" : fs::path(f.reference));
    mismatches = mismatch_from_codes(codes, lifts, reference);
    source = {{"run", fs::absolute(run).string()}};
  } else {
    const SynthSpec spec = f.spec.spec();
    SynthInstance inst = synth_instance(spec);
    lifts = std::move(inst.lifts);
    codes = std::move(inst.codes);
    mismatches = std::move(inst.mismatches);
    source = {{"synthetic", to_string(spec.signals)}, {"rejections", inst.rejections}};
  }

  const BoundReport rep = compute_bound_report(lifts, codes, mismatches, f.deltas);
  if (!rep.rejected_deltas.empty()) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "delta " << rep.rejected_deltas.front() << " outside admissible interval (0, " << rep.delta_limit
        << ")";
    throw Error(ErrorCode::DeltaOutOfRange, "bounds", msg.str());
  }

  const json cfg = ctx.config();
  json doc = report::provenance(cfg, ctx.seed);
  doc["source"] = source;
  doc["samples"] = lifts.size();
  doc["det_bound"] = rep.det.bound;
  doc["det_numerator"] = rep.det.numerator;
  doc["lambda_min"] = rep.det.lambda_min;
  doc["gram_lambda_max"] = rep.gram_lambda_max;
  doc["gram_full_rank"] = rep.gram_full_rank;
  doc["cross_full_rank"] = rep.cross_full_rank;
  doc["rho_sq"] = rep.rho_sq;
  doc["sigma_bar_sq"] = rep.sigma_bar_sq;
  doc["expected_bound"] = rep.expected_bound;
  doc["rho_bar"] = rep.rho_chi.rho_bar;
  doc["chi_bar"] = rep.rho_chi.chi_bar;
  doc["gamma"] = rep.stats.gamma;
  doc["sigma"] = rep.stats.sigma;
  doc["delta_limit"] = rep.delta_limit;
  doc["hp"] = json::array();
  for (const HpBound& hp : rep.hp) doc["hp"].push_back(hp_json(hp));

  report::CsvTable csv({"quantity", "delta", "value"});
  report::stamp(csv, cfg, ctx.seed);
  for (const char* key : {"det_bound", "det_numerator", "lambda_min", "gram_lambda_max", "rho_sq", "sigma_bar_sq",
                          "expected_bound", "rho_bar", "chi_bar", "gamma", "sigma", "delta_limit"})
    csv.add_row({key, "", format_double(doc[key].get<double>())});
  for (const HpBound& hp : rep.hp) {
    const std::string d = format_double(hp.delta);
    csv.add_row({"hp_bound", d, format_double(hp.bound)});
    csv.add_row({"hp_prob", d, format_double(hp.prob)});
    csv.add_row({"hp_vacuous", d, hp.vacuous ? "1" : "0"});
  }

  out.write("bounds.json", doc.dump(2) + "\n");
  out.write("bounds.csv", csv.str());
  out.write("config.json", cfg.dump(2) + "\n");
  log << "bounds: det_bound = " << format_double(rep.det.bound) << ", rho_sq = " << format_double(rep.rho_sq)
      << "\n";
  for (const HpBound& hp : rep.hp)
    if (hp.vacuous) log << "bounds: delta " << format_double(hp.delta) << " gives a vacuous probability\n";
  return report::kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyFlags {
  SpecFlags spec;
  bool thm1 = false, cor1 = false, thm2 = false;
  double delta = 0.05;
  double perturb = 0.0;
};

int cmd_verify(const VerifyFlags& f, const RunContext& ctx, const report::OutputDir& out, std::ostream& log) {
  if (!f.thm1 && !f.cor1 && !f.thm2) config_error("verify: select at least one of --thm1, --cor1, --thm2");
  const SynthSpec spec = f.spec.spec();
  const VerifyOptions options{f.perturb};

  std::vector<VerifyReport> reports;
  if (f.thm1) reports.push_back(verify_det_bound(spec, options));
  if (f.cor1) reports.push_back(monte_carlo_expected(spec, options));
  if (f.thm2) reports.push_back(monte_carlo_hp(spec, f.delta, options));

  const json cfg = ctx.config();
  json doc = report::provenance(cfg, ctx.seed);
  doc["reports"] = json::array();
  bool all_passed = true;
  for (const VerifyReport& r : reports) {
    doc["reports"].push_back(verify_json(r));
    report::CsvTable csv({"trial", "error", "bound", "holds", "rejections"});
    report::stamp(csv, cfg, ctx.seed);
    for (const TrialRecord& t : r.trials)
      csv.add_row({std::to_string(t.trial), format_double(t.error), format_double(t.bound), t.holds ? "1" : "0",
                   std::to_string(t.rejections)});
    out.write("trials_" + r.theorem + ".csv", csv.str());
    log << "verify " << r.theorem << ": " << (r.passed ? "PASS" : "FAIL") << " (" << r.held << "/"
        << r.trials.size() << " trials within bound)\n";

    if (!r.passed) {
      all_passed = false;
      std::size_t worst = 0;
      for (std::size_t t = 0; t < r.trials.size(); ++t)
        if (r.trials[t].error - r.trials[t].bound > r.trials[worst].error - r.trials[worst].bound) worst = t;
      json failure = report::provenance(cfg, ctx.seed);
      failure["theorem"] = r.theorem;
      failure["summary"] = verify_json(r);
      failure["trial"] = {{"index", r.trials[worst].trial},
                          {"rng_stream", r.trials[worst].trial + 1},
                          {"error", r.trials[worst].error},
                          {"bound", r.trials[worst].bound}};
      out.write("failure_" + r.theorem + ".json", failure.dump(2) + "\n");
    }
  }
  out.write("verify.json", doc.dump(2) + "\n");
  out.write("config.json", cfg.dump(2) + "\n");
  return all_passed ? report::kExitOk : report::kExitValidation;
}

// ---------------------------------------------------------------------------
// scan

struct RhoFlags {
  DataFlags data;
  std::string signals = "impulse";
  std::size_t n = 256, r = 8, samples = 256, replicates = 50;
  std::vector<std::size_t> grid;
  std::uint64_t seed = 0;
};

int cmd_scan_rho(const RhoFlags& f, const RunContext& ctx, const report::OutputDir& out, std::ostream& log) {
  std::vector<Signal> signals;
  OffsetPattern pattern = OffsetPattern::line(1);
  if (!f.data.data.empty()) {
    LoadedData data = load_data(f.data);
    signals = std::move(data.signals);
    pattern = data.pattern;
  } else {
    SynthSpec spec;
    spec.n = f.n;
    spec.r = f.r;
    spec.k = f.r;
    spec.l = f.samples;
    spec.signals = parse_signal_model(f.signals);
    spec.mismatch = {MismatchModel::Kind::Zero, 0.0, 0.0};
    spec.seed = f.seed;
    spec.validate();
    Rng rng = make_rng(f.seed);
    signals = draw_signals(spec, rng);
    pattern = spec.offsets();
  }
  std::vector<std::size_t> grid = f.grid;
  if (grid.empty())
    for (std::size_t l = 1; l <= signals.size(); l *= 2) grid.push_back(l);

  const std::vector<RhoScanRow> rows = rho_scan(signals, pattern, grid, f.replicates, f.seed);
  const json cfg = ctx.config();
  report::CsvTable csv({"samples", "rho_sq", "std_rho_sq", "replicates"});
  report::stamp(csv, cfg, ctx.seed);
  json doc = report::provenance(cfg, ctx.seed);
  doc["rows"] = json::array();
  for (const RhoScanRow& row : rows) {
    csv.add_row({std::to_string(row.samples), format_double(row.mean_rho_sq), format_double(row.std_rho_sq),
                 std::to_string(row.replicates)});
    doc["rows"].push_back({{"samples", row.samples}, {"rho_sq", row.mean_rho_sq}, {"std_rho_sq", row.std_rho_sq}});
  }
  if (rows.size() >= 2) doc["log_log_slope"] = log_log_slope(rows);
  out.write("rho_scan.csv", csv.str());
  out.write("rho_scan.json", doc.dump(2) + "\n");
  out.write("config.json", cfg.dump(2) + "\n");
  log << "scan rho: " << rows.size() << " rows\n";
  return report::kExitOk;
}

struct ChiFlags {
  std::string run;
  std::string reference;
  std::size_t stride = kDefaultChiStride;
};

int cmd_scan_chi(const ChiFlags& f, const RunContext& ctx, const report::OutputDir& out, std::ostream& log) {
  if (f.run.empty()) config_error("--run is required (a train output directory)");
  const fs::path run(f.run);
  if (!fs::is_regular_file(run / "snapshots.json"))
    throw Error(ErrorCode::MissingSnapshots, kModule, "--run: no snapshots.json under '" + f.run + "'");
  LoadedData data = load_run_data(run);
  const json snaps = read_json(run / "snapshots.json");

  TrainTrace trace;
  trace.record_every = snaps.at("record_every").get<std::size_t>();
  for (const json& s : snaps.at("snapshots")) {
    TrainSnapshot snap;
    snap.iteration = s.at("iteration").get<std::size_t>();
    snap.objective = s.at("objective").get<double>();
    snap.sparsity = s.at("sparsity").get<double>();
    snap.code_cross = ingest::load_matrix(run / s.at("code_cross").get<std::string>());
    trace.snapshots.push_back(std::move(snap));
  }
  const Matrix reference = ingest::load_matrix(f.reference.empty() ? run / "filters.tnsr" : fs::path(f.reference));
  const std::vector<ChiRow> rows = chi_track(trace, data.lifts, reference, f.stride);

  const json cfg = ctx.config();
  report::CsvTable csv({"iteration", "chi_bar"});
  report::stamp(csv, cfg, ctx.seed);
  for (const ChiRow& row : rows) csv.add_row({std::to_string(row.iteration), format_double(row.chi_bar)});
  out.write("chi_track.csv", csv.str());
  out.write("config.json", cfg.dump(2) + "\n");
  log << "scan chi: " << rows.size() << " rows\n";
  return report::kExitOk;
}

constexpr const char* kScanFooter = R"(CSV layout (comma separated, LF, '#' metadata lines precede the header):
  rho_scan.csv   samples,rho_sq,std_rho_sq,replicates   one row per sample count
  chi_track.csv  iteration,chi_bar                      one row per tracked snapshot
gnuplot: set datafile separator ','; plot 'rho_scan.csv' using 1:2 skip 4 with linespoints)";

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> args = expand_config(raw_args);

  CLI::App app{"Convolutional analysis operator learning with filter-error bounds"};
  app.set_version_flag("--version", report::kVersion);
  app.require_subcommand(1);
  app.footer("Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical failure, "
             "5 validation failure.\nReplay any run with: caol --config <out>/config.json [--out DIR]");
  std::string out_dir;

  TrainFlags train;
  CLI::App* train_cmd = app.add_subcommand("train", "Learn an orthogonal filter bank from a data set");
  train_cmd->add_option("--data", train.data.data, "Dataset manifest (JSON)");
  train_cmd->add_option("--filters", train.data.filters, "HxW window for images, KxR for 1-D data");
  train_cmd->add_option("--num-filters", train.data.num_filters, "Override K (default R for images)");
  train_cmd->add_option("--alpha", train.alpha, "Sparsity weight")->capture_default_str();
  train_cmd->add_option("--iters", train.iters, "Maximum iterations")->capture_default_str();
  train_cmd->add_option("--tol", train.tol, "Relative objective tolerance")->capture_default_str();
  train_cmd->add_option("--record-every", train.record_every, "Snapshot stride")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "Seed for the initial filters")->capture_default_str();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  BoundsFlags bounds;
  CLI::App* bounds_cmd = app.add_subcommand("bounds", "Evaluate filter-error bounds for a saved run or a synthetic ensemble");
  bounds_cmd->add_option("--run", bounds.run, "Train output directory (filters + codes)");
  bounds_cmd->add_option("--reference", bounds.reference, "Reference filters tensor (default: run filters)");
  bounds.spec.attach(bounds_cmd, false);
  bounds_cmd->add_option("--delta", bounds.deltas, "Deviation levels for the high-probability bound")
      ->delimiter(',');
  bounds_cmd->add_option("--out", out_dir, "Output directory")->required();

  VerifyFlags verify;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Monte Carlo validation of the error bounds");
  verify.spec.attach(verify_cmd, true);
  verify_cmd->add_flag("--thm1", verify.thm1, "Deterministic bound, every trial");
  verify_cmd->add_flag("--cor1", verify.cor1, "Expected bound, mean over trials");
  verify_cmd->add_flag("--thm2", verify.thm2, "High-probability bound, coverage over trials");
  verify_cmd->add_option("--delta", verify.delta, "Deviation level for --thm2")->capture_default_str();
  verify_cmd->add_option("--perturb-bound", verify.perturb, "Add a constant to every bound (testing hook)")
      ->group("Testing");
  verify_cmd->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* scan_cmd = app.add_subcommand("scan", "Plot-ready data-dependence tables");
  scan_cmd->require_subcommand(1);
  scan_cmd->footer(kScanFooter);

  RhoFlags rho;
  CLI::App* rho_cmd = scan_cmd->add_subcommand("rho", "rho^2 against the number of samples");
  rho_cmd->add_option("--data", rho.data.data, "Dataset manifest (default: synthetic signals)");
  rho_cmd->add_option("--filters", rho.data.filters, "HxW window for images, KxR for 1-D data");
  rho_cmd->add_option("--signals", rho.signals, "Synthetic model: impulse | gaussian")->capture_default_str();
  rho_cmd->add_option("--n", rho.n, "Synthetic signal length")->capture_default_str();
  rho_cmd->add_option("--r", rho.r, "Synthetic filter length")->capture_default_str();
  rho_cmd->add_option("--samples", rho.samples, "Synthetic data set size")->capture_default_str();
  rho_cmd->add_option("--grid", rho.grid, "Sample counts (default: powers of two)")->delimiter(',');
  rho_cmd->add_option("--replicates", rho.replicates, "Random subsets per sample count")->capture_default_str();
  rho_cmd->add_option("--seed", rho.seed, "Seed")->capture_default_str();
  rho_cmd->add_option("--out", out_dir, "Output directory")->required();
  rho_cmd->footer(kScanFooter);

  ChiFlags chi;
  CLI::App* chi_cmd = scan_cmd->add_subcommand("chi", "chi_bar along a saved training trace");
  chi_cmd->add_option("--run", chi.run, "Train output directory");
  chi_cmd->add_option("--reference", chi.reference, "Reference filters tensor (default: final filters)");
  chi_cmd->add_option("--stride", chi.stride, "Iteration stride")->capture_default_str();
  chi_cmd->add_option("--out", out_dir, "Output directory")->required();
  chi_cmd->footer(kScanFooter);

  std::vector<const char*> argv{"caol"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return report::kExitOk;
    }
    err << "caol: error [" << kModule << "] " << e.what() << "\n";
    return report::kExitConfig;
  }

  RunContext ctx;
  ctx.out = fs::absolute(out_dir).lexically_normal().string();
  const CLI::App* leaf = app.get_subcommands().front();
  ctx.command.push_back(leaf->get_name());
  while (!leaf->get_subcommands().empty()) {
    leaf = leaf->get_subcommands().front();
    ctx.command.push_back(leaf->get_name());
  }
  ctx.options = record_options(leaf);

  const report::OutputDir output(out_dir);
  if (train_cmd->parsed()) {
    ctx.seed = train.seed;
    return cmd_train(train, ctx, output, out);
  }
  if (bounds_cmd->parsed()) {
    ctx.seed = bounds.spec.seed;
    return cmd_bounds(bounds, ctx, output, out);
  }
  if (verify_cmd->parsed()) {
    ctx.seed = verify.spec.seed;
    return cmd_verify(verify, ctx, output, out);
  }
  if (rho_cmd->parsed()) {
    ctx.seed = rho.seed;
    return cmd_scan_rho(rho, ctx, output, out);
  }
  return cmd_scan_chi(chi, ctx, output, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  kernels::apply_thread_env();
  try {
    return dispatch(args, out, err);
  } catch (const Error& e) {
    err << "caol: error [" << e.module() << "] " << to_string(e.code()) << ": " << e.what() << "\n";
    return report::exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "caol: error [" << kModule << "] " << e.what() << "\n";
    return report::kExitConfig;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace caol::cli
