// Command-line front end: scenario runs, forecaster training/scoring, ledger
// queries, canonical re-export, and chain verification. Standard output is
// machine-readable (JSON or CSV-ish lines); diagnostics go to standard error,
// gated by REGULUS_LOG (error | info | debug).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "regulus/denoiser.hpp"
#include "regulus/forecasting.hpp"
#include "regulus/ledger.hpp"
#include "regulus/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel g_log_level = LogLevel::error;

void init_log_level() {
  const char* env = std::getenv("REGULUS_LOG");
  if (env == nullptr) return;
  std::string v = env;
  if (v == "debug") g_log_level = LogLevel::debug;
  else if (v == "info") g_log_level = LogLevel::info;
  else g_log_level = LogLevel::error;
}

void log_at(LogLevel level, const std::string& msg) {
  if (level <= g_log_level) {
    const char* tag = level == LogLevel::error ? "error" : level == LogLevel::info ? "info" : "debug";
    std::cerr << "regulus: [" << tag << "] " << msg << "\n";
  }
}

void log_error(const std::string& msg) { log_at(LogLevel::error, msg); }
void log_info(const std::string& msg) { log_at(LogLevel::info, msg); }
void log_debug(const std::string& msg) { log_at(LogLevel::debug, msg); }

// 2 = usage/config/parse problem, 1 = domain failure.
int exit_code_for(regulus::Errc c) {
  switch (c) {
    case regulus::Errc::parse_error:
    case regulus::Errc::invalid_config:
    case regulus::Errc::io_error:
      return 2;
    default:
      return 1;
  }
}

json load_json_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) regulus::fail(regulus::Errc::io_error, "cannot open " + path.string());
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) {
    regulus::fail(regulus::Errc::parse_error, "invalid JSON in " + path.string());
  }
  return j;
}

// --set values are typed by shape: bool literal, integer, real, else string.
json parse_override_value(const std::string& raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  try {
    std::size_t used = 0;
    long long i = std::stoll(raw, &used);
    if (used == raw.size()) return i;
  } catch (...) {
  }
  try {
    std::size_t used = 0;
    double d = std::stod(raw, &used);
    if (used == raw.size()) return d;
  } catch (...) {
  }
  return raw;
}

void apply_override(json& doc, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    regulus::fail(regulus::Errc::invalid_config, "--set expects key=value, got: " + assignment);
  }
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) regulus::fail(regulus::Errc::invalid_config, "empty path segment in " + key);
    if (dot == std::string::npos) {
      (*node)[part] = parse_override_value(value);
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  log_debug("override " + key + " = " + value);
}

regulus::sim::ScenarioConfig resolve_config(const std::optional<std::string>& config_path,
                                            const std::vector<std::string>& overrides,
                                            const std::optional<std::uint64_t>& seed) {
  json doc = json::object();
  if (config_path) doc = load_json_file(*config_path);
  for (const std::string& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return regulus::sim::config_from_json(doc);
}

regulus::ledger::Ledger import_ledger(const fs::path& in) {
  fs::path records = in, blocks;
  if (fs::is_directory(in)) {
    records = in / "ledger.jsonl";
    blocks = in / "blocks.json";
  } else {
    blocks = in.parent_path() / "blocks.json";
  }
  std::ifstream r(records, std::ios::binary);
  if (!r) regulus::fail(regulus::Errc::io_error, "cannot open " + records.string());
  std::ifstream b(blocks, std::ios::binary);
  if (!b) regulus::fail(regulus::Errc::io_error, "cannot open " + blocks.string());
  log_info("importing ledger from " + records.string());
  return regulus::ledger::Ledger::import_from(r, b);
}

// Trajectory CSV: header trajectory_id,row,f0..f{d-1}; rows of one trajectory
// are contiguous and 0-indexed.
struct TrajectorySet {
  std::vector<std::string> ids;
  std::vector<regulus::forecast::Matrix> data;
};

TrajectorySet load_trajectory_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) regulus::fail(regulus::Errc::io_error, "cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    regulus::fail(regulus::Errc::parse_error, "empty trajectory CSV: " + path.string());
  }
  std::size_t dims = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) cols.push_back(col);
    if (cols.size() < 3 || cols[0] != "trajectory_id" || cols[1] != "row") {
      regulus::fail(regulus::Errc::parse_error, "bad trajectory CSV header");
    }
    dims = cols.size() - 2;
  }
  TrajectorySet out;
  std::vector<std::vector<double>> rows;
  std::string current;
  auto flush = [&]() {
    if (current.empty()) return;
    regulus::forecast::Matrix m(rows.size(), dims);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < dims; ++c) m.at(r, c) = rows[r][c];
    }
    out.ids.push_back(current);
    out.data.push_back(std::move(m));
    rows.clear();
  };
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != dims + 2) {
      regulus::fail(regulus::Errc::parse_error,
                    "line " + std::to_string(lineno) + ": expected " +
                        std::to_string(dims + 2) + " columns");
    }
    if (cells[0] != current) {
      flush();
      current = cells[0];
    }
    std::vector<double> vals(dims);
    for (std::size_t c = 0; c < dims; ++c) {
      vals[c] = regulus::canonical::parse_double(cells[c + 2]);
    }
    std::size_t expect = rows.size();
    if (regulus::canonical::parse_i64(cells[1]) != static_cast<std::int64_t>(expect)) {
      regulus::fail(regulus::Errc::parse_error,
                    "line " + std::to_string(lineno) + ": rows must be contiguous from 0");
    }
    rows.push_back(std::move(vals));
  }
  flush();
  if (out.data.empty()) {
    regulus::fail(regulus::Errc::parse_error, "no trajectories in " + path.string());
  }
  return out;
}

// Featurize sliding windows out of a scenario export. End epochs are
// [window-1, last_sealed] unless capped for training.
TrajectorySet windows_from_ledger(const regulus::ledger::Ledger& led,
                                  const regulus::sim::ScenarioConfig& cfg,
                                  std::optional<regulus::ledger::Epoch> max_end) {
  TrajectorySet out;
  if (led.blocks().empty()) regulus::fail(regulus::Errc::empty_dataset, "ledger has no blocks");
  regulus::ledger::Epoch last = led.blocks().back().epoch;
  if (max_end) last = std::min(last, *max_end);
  std::size_t W = cfg.forecasting.window;
  std::vector<regulus::ledger::AgentId> agents;
  for (const auto& [id, pk] : led.keys()) {
    if (id.rfind("__", 0) == 0) continue;  // system identities
    agents.push_back(id);
  }
  for (const regulus::ledger::AgentId& id : agents) {
    for (regulus::ledger::Epoch end = W - 1; end <= last; ++end) {
      try {
        regulus::forecast::BehaviorTrajectory traj =
            regulus::forecast::featurize(led, id, W, end, cfg.forecasting.features);
        out.ids.push_back(id + "@" + std::to_string(end));
        out.data.push_back(std::move(traj.x));
      } catch (const regulus::Error& e) {
        if (e.code() != regulus::Errc::empty_window) throw;
      }
    }
  }
  if (out.data.empty()) regulus::fail(regulus::Errc::empty_dataset, "no non-empty windows");
  return out;
}

TrajectorySet load_input_trajectories(const fs::path& in,
                                      const regulus::sim::ScenarioConfig& cfg,
                                      std::optional<regulus::ledger::Epoch> max_end) {
  if (fs::is_directory(in)) {
    regulus::ledger::Ledger led = import_ledger(in);
    return windows_from_ledger(led, cfg, max_end);
  }
  return load_trajectory_csv(in);
}

int cmd_run(const std::optional<std::string>& config_path, const fs::path& out_dir,
            const std::vector<std::string>& overrides,
            const std::optional<std::uint64_t>& seed) {
  regulus::sim::ScenarioConfig cfg = resolve_config(config_path, overrides, seed);
  log_info("running scenario: " + std::to_string(cfg.n_agents) + " agents, " +
           std::to_string(cfg.n_epochs) + " epochs, seed " + std::to_string(cfg.seed));
  regulus::sim::SimulationRun run = regulus::sim::run_scenario(cfg);
  regulus::sim::write_report(run, out_dir);
  ordered_json status;
  status["status"] = "ok";
  status["out"] = out_dir.string();
  status["records"] = run.ledger.record_count();
  status["blocks"] = run.ledger.blocks().size();
  status["f1"] = run.report.detection.f1;
  std::cout << status.dump() << "\n";
  return 0;
}

int cmd_verify(const fs::path& in) {
  regulus::ledger::Ledger led = import_ledger(in);
  std::vector<regulus::ledger::Violation> violations = led.verify_chain();
  // Chain intact: every sealed record must also carry a valid inclusion proof.
  if (violations.empty()) {
    for (const regulus::ledger::Block& block : led.blocks()) {
      for (const regulus::crypto::Hash32& id : block.record_ids) {
        regulus::ledger::MerkleProof proof = led.prove_inclusion(id);
        if (!regulus::ledger::verify_proof(id, proof, block.merkle_root)) {
          violations.push_back({block.height, regulus::ledger::ViolationKind::merkle_root_mismatch,
                                "inclusion proof failed for " + regulus::crypto::to_hex(id)});
        }
      }
    }
  }
  ordered_json result;
  result["status"] = violations.empty() ? "ok" : "violations";
  ordered_json list = ordered_json::array();
  for (const regulus::ledger::Violation& v : violations) {
    ordered_json vj;
    vj["height"] = v.height;
    vj["kind"] = std::string(regulus::ledger::to_string(v.kind));
    vj["detail"] = v.detail;
    list.push_back(std::move(vj));
    log_error("block " + std::to_string(v.height) + ": " +
              std::string(regulus::ledger::to_string(v.kind)) + " (" + v.detail + ")");
  }
  result["violations"] = std::move(list);
  std::cout << result.dump(2) << "\n";
  return violations.empty() ? 0 : 1;
}

int cmd_train(const std::optional<std::string>& config_path, const fs::path& in,
              const fs::path& out_dir, const std::vector<std::string>& overrides,
              const std::optional<std::uint64_t>& seed) {
  regulus::sim::ScenarioConfig cfg = resolve_config(config_path, overrides, seed);
  // Scenario exports are truncated to the honest warm-up span for training.
  std::optional<regulus::ledger::Epoch> cap;
  if (fs::is_directory(in)) cap = static_cast<regulus::ledger::Epoch>(cfg.warmup_epochs() - 1);
  TrajectorySet set = load_input_trajectories(in, cfg, cap);
  log_info("training on " + std::to_string(set.data.size()) + " trajectories");
  regulus::forecast::NoiseSchedule schedule = regulus::forecast::build_schedule(
      cfg.forecasting.schedule, cfg.forecasting.T, cfg.forecasting.beta_min,
      cfg.forecasting.beta_max);
  regulus::forecast::TrainConfig tc;
  tc.learning_rate = cfg.forecasting.learning_rate;
  tc.batch_size = cfg.forecasting.batch_size;
  tc.epochs = cfg.forecasting.train_epochs;
  tc.seed = regulus::crypto::derive_seed(cfg.seed, 5);
  regulus::forecast::TrainResult trained =
      regulus::forecast::train_denoiser(set.data, schedule, tc);
  fs::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "model.ckpt", std::ios::binary);
    if (!os) regulus::fail(regulus::Errc::io_error, "cannot write model.ckpt");
    trained.model.save(os);
  }
  {
    std::ofstream os(out_dir / "loss.csv", std::ios::binary);
    if (!os) regulus::fail(regulus::Errc::io_error, "cannot write loss.csv");
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < trained.loss_curve.size(); ++i) {
      os << i << "," << regulus::canonical::format_double(trained.loss_curve[i]) << "\n";
    }
  }
  std::vector<double> scores;
  for (std::size_t i = 0; i < set.data.size(); ++i) {
    scores.push_back(regulus::forecast::anomaly_score(
        trained.model, set.data[i], schedule, cfg.forecasting.t_star, cfg.forecasting.K,
        regulus::crypto::derive_seed(cfg.seed, 600000 + i)));
  }
  regulus::forecast::ThresholdCalibration cal =
      regulus::forecast::calibrate_threshold(scores, cfg.forecasting.percentile);
  {
    std::ofstream os(out_dir / "calibration.csv", std::ios::binary);
    if (!os) regulus::fail(regulus::Errc::io_error, "cannot write calibration.csv");
    os << "percentile," << regulus::canonical::format_double(cal.percentile) << "\n";
    os << "threshold," << regulus::canonical::format_double(cal.threshold) << "\n";
    for (double s : cal.honest_scores) {
      os << "score," << regulus::canonical::format_double(s) << "\n";
    }
  }
  ordered_json status;
  status["status"] = "ok";
  status["trajectories"] = set.data.size();
  status["final_loss"] = trained.loss_curve.empty() ? 0.0 : trained.loss_curve.back();
  status["threshold"] = cal.threshold;
  std::cout << status.dump() << "\n";
  return 0;
}

regulus::forecast::ThresholdCalibration load_calibration_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) regulus::fail(regulus::Errc::io_error, "cannot open " + path.string());
  double percentile = 95.0;
  std::vector<double> scores;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      regulus::fail(regulus::Errc::parse_error, "bad calibration line: " + line);
    }
    std::string key = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    if (key == "percentile") percentile = regulus::canonical::parse_double(value);
    else if (key == "score") scores.push_back(regulus::canonical::parse_double(value));
    else if (key != "threshold") {
      regulus::fail(regulus::Errc::parse_error, "bad calibration key: " + key);
    }
  }
  return regulus::forecast::calibrate_threshold(std::move(scores), percentile);
}

int cmd_score(const std::optional<std::string>& config_path, const fs::path& in,
              const fs::path& model_path, const fs::path& out_dir,
              const std::vector<std::string>& overrides,
              const std::optional<std::uint64_t>& seed) {
  regulus::sim::ScenarioConfig cfg = resolve_config(config_path, overrides, seed);
  fs::path ckpt = fs::is_directory(model_path) ? model_path / "model.ckpt" : model_path;
  std::ifstream ms(ckpt, std::ios::binary);
  if (!ms) regulus::fail(regulus::Errc::io_error, "cannot open " + ckpt.string());
  regulus::forecast::DenoiserModel model = regulus::forecast::DenoiserModel::load(ms);
  regulus::forecast::ThresholdCalibration cal =
      load_calibration_csv(ckpt.parent_path() / "calibration.csv");
  TrajectorySet set = load_input_trajectories(in, cfg, std::nullopt);
  for (std::size_t i = 0; i < set.data.size(); ++i) {
    if (set.data[i].rows != model.window() || set.data[i].cols != model.feature_dim()) {
      log_error("trajectory " + set.ids[i] + " is " + std::to_string(set.data[i].rows) + "x" +
                std::to_string(set.data[i].cols) + ", checkpoint expects " +
                std::to_string(model.window()) + "x" + std::to_string(model.feature_dim()));
      return 2;
    }
  }
  regulus::forecast::NoiseSchedule schedule = regulus::forecast::build_schedule(
      cfg.forecasting.schedule, cfg.forecasting.T, cfg.forecasting.beta_min,
      cfg.forecasting.beta_max);
  fs::create_directories(out_dir);
  std::ofstream os(out_dir / "scores.csv", std::ios::binary);
  if (!os) regulus::fail(regulus::Errc::io_error, "cannot write scores.csv");
  os << "trajectory_id,anomaly_score,deviation_probability,action\n";
  std::size_t alerts = 0;
  for (std::size_t i = 0; i < set.data.size(); ++i) {
    double score = regulus::forecast::anomaly_score(
        model, set.data[i], schedule, cfg.forecasting.t_star, cfg.forecasting.K,
        regulus::crypto::derive_seed(cfg.seed, 800000 + i));
    double p = regulus::forecast::deviation_probability(cal, score);
    regulus::forecast::AlertAction action = regulus::forecast::classify_deviation(p);
    if (action != regulus::forecast::AlertAction::none) ++alerts;
    os << set.ids[i] << "," << regulus::canonical::format_double(score) << ","
       << regulus::canonical::format_double(p) << "," << regulus::forecast::to_string(action)
       << "\n";
  }
  ordered_json status;
  status["status"] = "ok";
  status["scored"] = set.data.size();
  status["alerts"] = alerts;
  std::cout << status.dump() << "\n";
  return 0;
}

int cmd_query(const fs::path& in, const std::optional<std::string>& agent,
              const std::optional<std::uint64_t>& epoch_min,
              const std::optional<std::uint64_t>& epoch_max,
              const std::optional<std::string>& kind) {
  regulus::ledger::Ledger led = import_ledger(in);
  regulus::ledger::QueryFilter f;
  if (agent) f.agent_id = *agent;
  if (epoch_min || epoch_max) {
    f.epoch_range = {epoch_min.value_or(0),
                     epoch_max.value_or(std::numeric_limits<std::uint64_t>::max())};
  }
  if (kind) {
    auto k = regulus::ledger::record_kind_from_string(*kind);
    if (!k) regulus::fail(regulus::Errc::invalid_config, "unknown record kind: " + *kind);
    f.kind = *k;
  }
  for (const regulus::ledger::BehaviorRecord& r : led.query(f)) {
    std::cout << regulus::ledger::Ledger::record_to_json(r).dump() << "\n";
  }
  return 0;
}

int cmd_export(const fs::path& in, const fs::path& out_dir) {
  regulus::ledger::Ledger led = import_ledger(in);
  fs::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "ledger.jsonl", std::ios::binary);
    if (!os) regulus::fail(regulus::Errc::io_error, "cannot write ledger.jsonl");
    led.export_records(os);
  }
  {
    std::ofstream os(out_dir / "blocks.json", std::ios::binary);
    if (!os) regulus::fail(regulus::Errc::io_error, "cannot write blocks.json");
    led.export_blocks(os);
  }
  ordered_json status;
  status["status"] = "ok";
  status["records"] = led.record_count();
  status["blocks"] = led.blocks().size();
  std::cout << status.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  init_log_level();
  regulus::crypto::init();

  CLI::App app{"deterministic ledger-backed multi-agent regulation toolkit"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string in_path;
  std::string model_path;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "scenario config JSON");
    cmd->add_option("--set", overrides, "override a config key (dotted.path=value)");
    cmd->add_option("--seed", seed, "alias for --set seed=N");
  };

  CLI::App* run = app.add_subcommand("run", "run a scenario and write its report");
  add_config_flags(run);
  run->add_option("--out", out_dir, "report directory");

  CLI::App* verify = app.add_subcommand("verify", "re-import a ledger export and verify it");
  verify->add_option("--in", in_path, "report directory or ledger.jsonl path")->required();

  CLI::App* train = app.add_subcommand("train", "train the denoiser on honest trajectories");
  add_config_flags(train);
  train->add_option("--in", in_path, "trajectory CSV or scenario report directory")->required();
  train->add_option("--out", out_dir, "directory for model.ckpt, loss.csv, calibration.csv");

  CLI::App* score = app.add_subcommand("score", "score trajectories against a checkpoint");
  add_config_flags(score);
  score->add_option("--in", in_path, "trajectory CSV or scenario report directory")->required();
  score->add_option("--model", model_path, "model.ckpt or its directory")->required();
  score->add_option("--out", out_dir, "directory for scores.csv");

  CLI::App* query = app.add_subcommand("query", "print matching records as JSON lines");
  query->add_option("--in", in_path, "report directory or ledger.jsonl path")->required();
  std::optional<std::string> q_agent, q_kind;
  std::optional<std::uint64_t> q_emin, q_emax;
  query->add_option("--agent", q_agent, "filter by agent id");
  query->add_option("--epoch-min", q_emin, "filter epochs >= this");
  query->add_option("--epoch-max", q_emax, "filter epochs <= this");
  query->add_option("--kind", q_kind, "filter by record kind name");

  CLI::App* exp = app.add_subcommand("export", "re-export a ledger in canonical form");
  exp->add_option("--in", in_path, "report directory or ledger.jsonl path")->required();
  exp->add_option("--out", out_dir, "directory for ledger.jsonl and blocks.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, overrides, seed);
    if (verify->parsed()) return cmd_verify(in_path);
    if (train->parsed()) return cmd_train(config_path, in_path, out_dir, overrides, seed);
    if (score->parsed()) return cmd_score(config_path, in_path, model_path, out_dir, overrides, seed);
    if (query->parsed()) return cmd_query(in_path, q_agent, q_emin, q_emax, q_kind);
    if (exp->parsed()) return cmd_export(in_path, out_dir);
  } catch (const regulus::Error& e) {
    log_error(e.what());
    std::cerr << "regulus: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "regulus: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
