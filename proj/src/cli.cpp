#include "rrlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "rrlab/io.hpp"
#include "rrlab/svg.hpp"

#ifndef RRLAB_GIT_DESCRIBE
#define RRLAB_GIT_DESCRIBE "unknown"
#endif

namespace rrlab {

namespace fs = std::filesystem;

// ----------------------------- config resolution -----------------------------

std::vector<std::uint64_t> parse_seed_list(const std::string& spec) {
  std::vector<std::uint64_t> out;
  auto parse_u64 = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("invalid seed '" + s + "' in '" + spec + "'");
    }
    return std::stoull(s);
  };
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_u64(item));
      continue;
    }
    const auto lo = parse_u64(item.substr(0, dash));
    const auto hi = parse_u64(item.substr(dash + 1));
    if (hi < lo) throw std::invalid_argument("empty seed range '" + item + "'");
    if (hi - lo >= 100000) throw std::invalid_argument("seed range '" + item + "' is too long");
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) throw std::invalid_argument("empty seed list");
  return out;
}

std::size_t locate_key(const std::string& text, const std::string& dotted_key) {
  std::size_t pos = 0;
  std::size_t found = std::string::npos;
  std::size_t start = 0;
  while (start <= dotted_key.size()) {
    const auto dot = dotted_key.find('.', start);
    const std::string part = dotted_key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    found = text.find("\"" + part + "\"", pos);
    if (found == std::string::npos) return 0;
    pos = found + part.size() + 2;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(found), '\n')) + 1;
}

namespace {

std::string where(const std::optional<fs::path>& path, const std::string& text, const std::string& key) {
  if (!path) return "";
  const std::size_t line = key.empty() ? 0 : locate_key(text, key);
  return line ? path->string() + ":" + std::to_string(line) + ": " : path->string() + ": ";
}

}  // namespace

ScenarioConfig resolve_config(const ConfigRequest& req) {
  std::string text;
  json user = json::object();
  if (req.config_path) {
    if (!fs::is_regular_file(*req.config_path)) {
      throw UsageError("cannot read config file '" + req.config_path->string() + "'");
    }
    text = read_file(*req.config_path);
    try {
      user = json::parse(text);
    } catch (const json::parse_error& e) {
      throw UsageError(req.config_path->string() + ": " + e.what());
    }
    if (!user.is_object()) throw UsageError(req.config_path->string() + ":1: config must be a JSON object");
  }

  std::string name;
  if (user.contains("scenario")) {
    if (!user["scenario"].is_string()) {
      throw UsageError(where(req.config_path, text, "scenario") + "'scenario' must be a string");
    }
    name = user["scenario"].get<std::string>();
  }
  if (req.scenario) {
    if (!name.empty() && name != *req.scenario) {
      throw UsageError(where(req.config_path, text, "scenario") + "config is for scenario '" + name +
                       "' but --scenario is '" + *req.scenario + "'");
    }
    name = *req.scenario;
  }
  if (name.empty()) throw UsageError("no scenario given (use --scenario or a config with \"scenario\")");

  json merged;
  try {
    const Scenario sc = scenario_from_string(name);
    merged = merge_config(default_config(sc), user);
  } catch (const ConfigError& e) {
    throw UsageError(where(req.config_path, text, e.key()) + e.what());
  }
  for (const auto& o : req.overrides) {
    try {
      apply_override(merged, o);
    } catch (const ConfigError& e) {
      throw UsageError("--override " + o + ": " + e.what());
    }
  }
  try {
    if (req.seeds) {
      merged["seeds"] = parse_seed_list(*req.seeds);
    } else if (req.env_seed && !req.env_seed->empty()) {
      const auto base = parse_seed_list(*req.env_seed);
      if (base.size() != 1) throw std::invalid_argument("RRLAB_SEED must be a single integer");
      const std::size_t n = merged["seeds"].size();
      json seeds = json::array();
      for (std::size_t i = 0; i < n; ++i) seeds.push_back(base.front() + i);
      merged["seeds"] = seeds;
    }
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("seeds: ") + e.what());
  }
  try {
    return parse_scenario_config(merged);
  } catch (const ConfigError& e) {
    throw UsageError(where(req.config_path, text, e.key()) + e.what());
  }
}

// ----------------------------- artifacts -----------------------------

namespace {

std::vector<LineSeries> mean_series(const ScenarioReport& report, std::size_t every,
                                    double (*value)(const StepMetrics&), double initial(const RunRecord&)) {
  std::vector<LineSeries> out;
  for (const auto& arm : report.arms) {
    if (arm.runs.empty()) continue;
    LineSeries s;
    s.name = arm.spec.name;
    const std::size_t steps = arm.runs.front().steps.size();
    auto mean_at = [&](std::size_t step) {
      double total = 0.0;
      for (const auto& r : arm.runs) total += step == 0 ? initial(r) : value(r.steps[step - 1]);
      return total / static_cast<double>(arm.runs.size());
    };
    for (std::size_t step = 0; step <= steps; step += every) s.points.emplace_back(static_cast<double>(step), mean_at(step));
    if (steps % every != 0) s.points.emplace_back(static_cast<double>(steps), mean_at(steps));
    out.push_back(std::move(s));
  }
  return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

void write_artifacts(const ScenarioReport& report, const fs::path& out_dir, const json& manifest) {
  fs::create_directories(out_dir);
  for (const auto& arm : report.arms) {
    for (const auto& run : arm.runs) {
      write_file_atomic(out_dir / "metrics" / arm.spec.name / (std::to_string(run.seed) + ".csv"), to_csv(run));
    }
  }
  for (const auto& [rel, csv] : report.extra_csv) write_file_atomic(out_dir / "metrics" / rel, csv);
  for (const auto& [name, stats] : report.ranges) {
    write_file_atomic(out_dir / "metrics" / "ranges" / (name + ".csv"), range_stats_csv(stats));
    write_file_atomic(out_dir / "figures" / ("ranges_" + name + ".svg"),
                      range_bars_svg(stats, "reward range: " + name));
  }
  for (const auto& [name, ckpt] : report.checkpoints) {
    write_file_atomic(out_dir / "checkpoints" / (name + ".json"), dump(ckpt));
  }
  for (const auto& [name, m] : report.matrices) {
    write_file_atomic(out_dir / "checkpoints" / ("matrix_" + name + ".json"),
                      dump(json{{"type", "matrix"}, {"name", name}, {"matrix", to_json(m)}}));
    write_file_atomic(out_dir / "figures" / ("heatmap_" + name + ".svg"), heatmap_svg(m, name));
  }
  if (!report.arms.empty()) {
    const std::size_t every = report.config.eval_every;
    const auto acc = mean_series(
        report, every, [](const StepMetrics& m) { return m.accuracy; },
        [](const RunRecord& r) { return r.initial_accuracy; });
    write_file_atomic(out_dir / "figures" / "accuracy.svg",
                      line_chart_svg(acc, to_string(report.config.scenario) + ": mean accuracy", "PPO step",
                                     "accuracy", 0.0, 1.0));
    const auto kl = mean_series(
        report, every, [](const StepMetrics& m) { return m.kl; }, [](const RunRecord& r) { return r.initial_kl; });
    double kl_max = 1e-12;
    for (const auto& s : kl) {
      for (const auto& p : s.points) kl_max = std::max(kl_max, p.second);
    }
    write_file_atomic(out_dir / "figures" / "kl.svg",
                      line_chart_svg(kl, to_string(report.config.scenario) + ": mean KL to reference", "PPO step",
                                     "KL", 0.0, kl_max));
  }
  json verdicts = json::array();
  for (const auto& v : report.verdicts) verdicts.push_back(to_json(v));
  write_file_atomic(out_dir / "verdicts.json",
                    dump(json{{"all_gating_pass", report.all_gating_pass()}, {"verdicts", verdicts}}));
  write_file_atomic(out_dir / "summary.json", dump(summary_json(report)));
  write_file_atomic(out_dir / "manifest.json", dump(manifest));
}

// ----------------------------- report -----------------------------

namespace {

json read_artifact(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw UsageError("partial artifacts: missing " + p.string());
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw UsageError("corrupt artifact " + p.string() + ": " + e.what());
  }
}

std::string cell(const json& v) {
  if (v.is_number_float()) return format_fixed(v.get<double>(), 4);
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void render_table(std::ostream& out, const std::vector<std::string>& cols, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    w[c] = cols[c].size();
    for (const auto& r : rows) w[c] = std::max(w[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string text;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) text += "  ";
      text += r[c] + std::string(w[c] - r[c].size(), ' ');
    }
    text.erase(text.find_last_not_of(' ') + 1);
    out << text << '\n';
  };
  line(cols);
  std::vector<std::string> rule;
  for (auto n : w) rule.emplace_back(n, '-');
  line(rule);
  for (const auto& r : rows) line(r);
}

std::vector<std::string> table_columns(const std::string& name, const json& rows) {
  if (name == "lemma1") return {"probe", "c", "gamma", "q_value", "advantage_max_abs", "grad_norm"};
  if (name == "lambda") return {"lambda", "short_mean_accuracy", "long_mean_accuracy", "long_std_accuracy"};
  std::vector<std::string> cols;
  if (!rows.empty()) {
    if (rows.front().contains("seed")) cols.push_back("seed");
    for (auto it = rows.front().begin(); it != rows.front().end(); ++it) {
      if (it.key() != "seed") cols.push_back(it.key());
    }
  }
  return cols;
}

}  // namespace

std::string render_report(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "manifest.json")) throw UsageError("no manifest in '" + dir.string() + "'");
  const json manifest = read_artifact(dir / "manifest.json");
  const json summary = read_artifact(dir / "summary.json");
  const json verdicts = read_artifact(dir / "verdicts.json");
  std::ostringstream out;
  try {
    out << "scenario: " << summary.at("scenario").get<std::string>() << "\n";
    out << "seeds:    " << summary.at("seeds").dump() << "\n";
    out << "git:      " << manifest.value("git_describe", std::string("unknown")) << "\n\n";

    const json& arms = summary.at("arms");
    if (!arms.empty()) {
      std::vector<std::vector<std::string>> rows;
      for (const auto& a : arms) {
        rows.push_back({a.at("arm").get<std::string>(), a.at("primary").get<bool>() ? "primary" : "control",
                        cell(a.at("seeds")), cell(a.at("mean_final_accuracy")), cell(a.at("std_final_accuracy")),
                        cell(a.at("median_final_accuracy")), cell(a.at("mean_short_accuracy"))});
      }
      render_table(out, {"arm", "kind", "seeds", "mean_final", "std_final", "median_final", "mean_short"}, rows);
      out << '\n';
    }
    for (auto it = summary.at("tables").begin(); it != summary.at("tables").end(); ++it) {
      const json& rows = it.value();
      if (!rows.is_array() || rows.empty()) continue;
      const auto cols = table_columns(it.key(), rows);
      std::vector<std::vector<std::string>> body;
      for (const auto& r : rows) {
        std::vector<std::string> line;
        for (const auto& c : cols) line.push_back(r.contains(c) ? cell(r.at(c)) : "");
        body.push_back(std::move(line));
      }
      out << "[" << it.key() << "]\n";
      render_table(out, cols, body);
      out << '\n';
    }
    for (const auto& v : verdicts.at("verdicts")) {
      const bool pass = v.at("pass").get<bool>();
      const bool gating = v.at("gating").get<bool>();
      out << (gating ? (pass ? "PASS " : "FAIL ") : "INFO ") << v.at("name").get<std::string>() << ": "
          << v.at("claim").get<std::string>() << "\n";
    }
  } catch (const json::exception& e) {
    throw UsageError("corrupt artifact in '" + dir.string() + "': " + e.what());
  }
  return out.str();
}

// ----------------------------- commands -----------------------------

namespace {

struct RunOptions {
  std::string scenario;
  std::string config;
  std::string out;
  std::string seeds;
  std::vector<std::string> overrides;
  int jobs = 0;
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_scenario) {
  if (with_scenario) cmd->add_option("--scenario", o.scenario, "scenario name");
  cmd->add_option("--config", o.config, "JSON scenario config");
  cmd->add_option("--out", o.out, "artifact directory")->required();
  cmd->add_option("--seeds", o.seeds, "seed list, e.g. 0-9 or 1,4,7");
  cmd->add_option("--override", o.overrides, "dotted key=value, repeatable");
  cmd->add_option("--jobs", o.jobs, "worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
}

ConfigRequest request_from(const RunOptions& o) {
  ConfigRequest req;
  if (!o.scenario.empty()) req.scenario = o.scenario;
  if (!o.config.empty()) req.config_path = o.config;
  req.overrides = o.overrides;
  if (!o.seeds.empty()) req.seeds = o.seeds;
  if (const char* env = std::getenv("RRLAB_SEED")) req.env_seed = std::string(env);
  return req;
}

int execute_run(const RunOptions& o, ConfigRequest req, const std::string& command_line, std::ostream& out,
                std::ostream& err) {
  const ScenarioConfig cfg = resolve_config(req);
  const fs::path dir(o.out);
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    throw UsageError("cannot create output directory '" + dir.string() + "': " + e.what());
  }
  set_worker_threads(o.jobs);
  out << "rrlab: running " << to_string(cfg.scenario) << " on " << cfg.seeds.size() << " seed(s)" << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioReport report = run_scenario(cfg, Exec::parallel);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const json manifest{{"tool", "rrlab"},
                      {"scenario", to_string(cfg.scenario)},
                      {"seeds", cfg.seeds},
                      {"config", cfg.raw},
                      {"git_describe", RRLAB_GIT_DESCRIBE},
                      {"wall_time_seconds", wall},
                      {"threads", worker_threads()},
                      {"command", command_line}};
  write_artifacts(report, dir, manifest);
  for (const auto& v : report.verdicts) {
    out << (v.gating ? (v.pass ? "PASS " : "FAIL ") : "INFO ") << v.name << ": " << v.claim << std::endl;
  }
  out << "rrlab: artifacts in " << dir.string() << std::endl;
  if (!report.all_gating_pass()) {
    for (const auto& v : report.verdicts) {
      if (v.gating && !v.pass) err << "assertion failed: " << v.name << " " << v.measured.dump() << "\n";
    }
    return kExitAssertion;
  }
  return kExitOk;
}

Matrix matrix_from_checkpoint(const json& j, std::string& kind) {
  kind = j.at("type").get<std::string>();
  if (kind == "matrix") return matrix_from_json(j.at("matrix"));
  if (kind == "scalar_rm") {
    const ScalarRewardModel rm = scalar_rm_from_json(j);
    const ToyWorld world = make_world(rm.k());
    return rm_matrix([&](std::size_t x, std::size_t a) { return rm.reward(x, a); }, world);
  }
  if (kind == "brme") {
    const BrmeModel brme = brme_from_json(j);
    const ToyWorld world = make_world(brme.k());
    return rm_matrix([&](std::size_t x, std::size_t a) { return nominal_reward(brme_predict(brme, x, a)); }, world);
  }
  throw UsageError("unsupported checkpoint type '" + kind + "'");
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rrlab: reward-robust RLHF toy experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunOptions run_o, sweep_o, lemma_o;
  auto* run = app.add_subcommand("run", "run a scenario and write artifacts");
  add_run_options(run, run_o, true);
  auto* sweep = app.add_subcommand("sweep", "run the lambda sweep");
  add_run_options(sweep, sweep_o, false);
  std::string lambdas;
  sweep->add_option("--lambdas", lambdas, "comma-separated lambda grid");
  auto* lemma = app.add_subcommand("lemma1", "run the zero-gradient probes");
  add_run_options(lemma, lemma_o, false);
  std::size_t probes = 0;
  lemma->add_option("--probes", probes, "number of random probes");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "render a summary of an artifact directory");
  report->add_option("dir", report_dir, "artifact directory")->required();

  std::string hm_checkpoint, hm_out, hm_name, hm_variant = "zero_one";
  bool hm_golden = false;
  std::optional<double> hm_constant;
  std::size_t hm_k = 8;
  auto* heat = app.add_subcommand("heatmap", "render a K x K heatmap SVG");
  heat->add_option("--checkpoint", hm_checkpoint, "checkpoint JSON (scalar_rm, brme or matrix)");
  heat->add_flag("--golden", hm_golden, "render the golden reward");
  heat->add_option("--constant", hm_constant, "render a constant reward");
  heat->add_option("--k", hm_k, "world size for --golden/--constant")->check(CLI::Range(2, 4096));
  heat->add_option("--variant", hm_variant, "golden variant (zero_one or margin)");
  heat->add_option("--name", hm_name, "output file stem");
  heat->add_option("--out", hm_out, "output directory")->required();

  std::string vc_config, vc_scenario;
  auto* validate = app.add_subcommand("validate-config", "check a scenario config");
  validate->add_option("--config", vc_config, "JSON scenario config")->required();
  validate->add_option("--scenario", vc_scenario, "expected scenario");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string command_line;
  for (std::size_t i = 0; i < args.size(); ++i) command_line += (i ? " " : "") + args[i];

  try {
    if (run->parsed()) return execute_run(run_o, request_from(run_o), command_line, out, err);
    if (sweep->parsed()) {
      ConfigRequest req = request_from(sweep_o);
      req.scenario = "lambda_sweep";
      if (!lambdas.empty()) req.overrides.push_back("lambdas=[" + lambdas + "]");
      return execute_run(sweep_o, req, command_line, out, err);
    }
    if (lemma->parsed()) {
      ConfigRequest req = request_from(lemma_o);
      req.scenario = "lemma1";
      if (probes > 0) req.overrides.push_back("lemma1.probes=" + std::to_string(probes));
      return execute_run(lemma_o, req, command_line, out, err);
    }
    if (report->parsed()) {
      out << render_report(report_dir);
      return kExitOk;
    }
    if (heat->parsed()) {
      const int sources = (hm_checkpoint.empty() ? 0 : 1) + (hm_golden ? 1 : 0) + (hm_constant ? 1 : 0);
      if (sources != 1) throw UsageError("heatmap needs exactly one of --checkpoint, --golden, --constant");
      Matrix m;
      std::string title;
      if (!hm_checkpoint.empty()) {
        if (!fs::is_regular_file(hm_checkpoint)) throw UsageError("missing checkpoint '" + hm_checkpoint + "'");
        json j;
        try {
          j = json::parse(read_file(hm_checkpoint));
        } catch (const json::parse_error& e) {
          throw UsageError("corrupt checkpoint '" + hm_checkpoint + "': " + e.what());
        }
        std::string kind;
        try {
          m = matrix_from_checkpoint(j, kind);
        } catch (const json::exception& e) {
          throw UsageError("corrupt checkpoint '" + hm_checkpoint + "': " + e.what());
        } catch (const std::invalid_argument& e) {
          throw UsageError("corrupt checkpoint '" + hm_checkpoint + "': " + e.what());
        }
        title = fs::path(hm_checkpoint).stem().string() + " (" + kind + ")";
        if (hm_name.empty()) hm_name = fs::path(hm_checkpoint).stem().string();
      } else if (hm_golden) {
        GoldenVariant variant;
        try {
          variant = golden_variant_from_string(hm_variant);
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
        m = make_world(hm_k, variant).golden;
        title = "golden reward (" + hm_variant + ")";
        if (hm_name.empty()) hm_name = "golden";
      } else {
        m = Matrix(hm_k, hm_k, *hm_constant);
        title = "constant reward " + format_double(*hm_constant);
        if (hm_name.empty()) hm_name = "constant";
      }
      const fs::path path = fs::path(hm_out) / (hm_name + ".svg");
      write_file_atomic(path, heatmap_svg(m, title));
      out << "wrote " << path.string() << "\n";
      return kExitOk;
    }
    if (validate->parsed()) {
      ConfigRequest req;
      req.config_path = vc_config;
      if (!vc_scenario.empty()) req.scenario = vc_scenario;
      const ScenarioConfig cfg = resolve_config(req);
      out << "ok: " << vc_config << " (scenario " << to_string(cfg.scenario) << ")\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitAssertion;
  }
  return kExitUsage;
}

}  // namespace rrlab
