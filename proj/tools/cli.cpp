#include "cli.hpp"

#include "tsflow/audit.hpp"
#include "tsflow/backends.hpp"
#include "tsflow/banks.hpp"
#include "tsflow/controller.hpp"
#include "tsflow/error.hpp"
#include "tsflow/executor.hpp"
#include "tsflow/hash.hpp"
#include "tsflow/llm_gateway.hpp"
#include "tsflow/metrics.hpp"
#include "tsflow/report.hpp"
#include "tsflow/retrieval.hpp"
#include "tsflow/task.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

extern char** environ;

namespace tsflow::cli {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) config_error("'" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  config_error("'" + key + "' expects true or false, got '" + value + "'");
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::string env_name(const std::string& key) {
  std::string out = "TSFLOW_";
  for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

PhaseConfig phase_from(const CliConfig& c) {
  PhaseConfig p;
  p.k = c.k;
  p.warmup_iters = c.warmup;
  p.opt_iters = c.opt;
  p.debug_retries = c.debug_retries;
  p.seed = c.seed;
  p.parallel = c.parallel;
  p.case_neighbors = c.case_neighbors;
  p.context_budget = c.context_budget;
  p.validate();
  return p;
}

std::string env_or_empty(const std::map<std::string, std::string>& env, const std::string& name) {
  auto it = env.find(name);
  return it == env.end() ? std::string{} : it->second;
}

std::unique_ptr<PlannerBackend> make_planner(const CliConfig& c, const BankSet& banks,
                                             const std::map<std::string, std::string>& env) {
  if (c.planner == "scripted") return std::make_unique<ScriptedBackend>(banks);
  if (c.planner == "random") return std::make_unique<RandomBackend>(banks, c.seed);
  if (c.planner == "llm" || c.planner == "replay") {
    GatewayConfig g;
    g.mode = c.planner == "replay" ? GatewayMode::Replay : parse_gateway_mode(c.llm_mode);
    if (g.mode == GatewayMode::Mock) config_error("llm-mode mock is only available to tests");
    g.transcript = c.transcript;
    g.strict_sequence = c.strict_sequence;
    if ((g.mode == GatewayMode::Replay || g.mode == GatewayMode::Record) && g.transcript.empty()) {
      config_error(std::string(to_string(g.mode)) + " mode needs --transcript");
    }
    g.endpoint = env_or_empty(env, "LLM_ENDPOINT");
    g.api_key = env_or_empty(env, "LLM_API_KEY");
    g.model_name = env_or_empty(env, "LLM_MODEL");
    return std::make_unique<LlmBackend>(std::make_shared<LlmGateway>(std::move(g)));
  }
  config_error("unknown planner '" + c.planner + "' (scripted, random, llm, replay)");
}

TaskSpec load_checked_task(const std::filesystem::path& path, const BankSet& banks) {
  if (path.empty()) config_error("--task is required");
  TaskSpec task = load_task(path);
  const auto violations = validate_task(task, banks);
  if (!violations.empty()) {
    std::string msg = "task " + path.string() + " is invalid:";
    for (const auto& v : violations) msg += " " + std::string(to_string(v.kind)) + " (" + v.detail + ");";
    config_error(msg);
  }
  return task;
}

int do_run(const CliConfig& c, std::ostream& out, const std::map<std::string, std::string>& vars) {
  const BankSet banks = load_banks(c.banks);
  const TaskSpec task = load_checked_task(c.task, banks);
  const PhaseConfig phase = phase_from(c);
  const PromptSet prompts = c.prompts.empty() ? PromptSet::defaults() : PromptSet::load(c.prompts);
  auto planner = make_planner(c, banks, vars);

  std::filesystem::create_directories(c.out);
  AuditLog log(c.out / "audit.log");
  ExecutorOptions opts;
  opts.native_timeout = std::chrono::milliseconds(c.native_timeout_ms);
  ModelExecutor executor(banks, opts);
  SearchEnv env{task, banks, executor, log, phase, prompts, {}};
  const FinalReport report = run_full(env, *planner);
  log.close();

  json doc = to_json(report, false);
  doc["report_digest"] = report_digest(report);
  write_file(c.out / "report.json", doc.dump(2) + "\n");
  json meta = to_json(report, true);
  write_file(c.out / "run_meta.json",
             json{{"audit_head_hash", meta["audit_head_hash"]}, {"wall_clock", meta["wall_clock"]}}.dump(2) + "\n");
  if (report.winning_config) {
    write_file(c.out / "winner.config.json", to_json(*report.winning_config).dump(2) + "\n");
  } else {
    std::filesystem::remove(c.out / "winner.config.json");
  }
  out << json{{"success", report.success},
              {"winner", report.winner_candidate_id},
              {"report_digest", doc["report_digest"]},
              {"out", c.out.string()}}
             .dump()
      << "\n";
  return report.success ? kOk : kReportedFailure;
}

int do_retrieve(const std::filesystem::path& task_path, const std::filesystem::path& banks_dir, std::size_t k,
                std::size_t neighbors, std::ostream& out) {
  const BankSet banks = load_banks(banks_dir);
  const TaskSpec task = load_checked_task(task_path, banks);
  const CaseIndex index = index_cases(banks, task.kind);
  const RetrievalResult r = top_k_models(retrieve(index, task.description, neighbors), banks, k);
  json ranked = json::array();
  for (const auto& c : r.ranked) ranked.push_back({{"case_id", c.case_id}, {"similarity", c.similarity}});
  json votes = json::array();
  for (const auto& v : r.model_votes) {
    votes.push_back({{"model_id", v.model_id}, {"score", v.score}, {"contributing_cases", v.contributing_cases}});
  }
  out << json{{"ranked", ranked}, {"model_votes", votes}, {"rationale", r.rationale}, {"shortfall", r.shortfall}}
             .dump(2)
      << "\n";
  return kOk;
}

/// Each row of a forecast file is one single-step window.
std::vector<Eigen::MatrixXd> row_blocks(const TimeSeriesFrame& frame) {
  std::vector<Eigen::MatrixXd> out;
  for (Eigen::Index i = 0; i < frame.values().rows(); ++i) out.emplace_back(frame.values().row(i));
  return out;
}

std::vector<Eigen::MatrixXd> segment_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::MissingFile, dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Eigen::MatrixXd> out;
  for (const auto& f : files) out.push_back(load_frame(f, infer_data_format(f)).values());
  return out;
}

int do_eval(const std::string& pred, const std::string& truth, const std::string& real, const std::string& fake,
            const std::string& metrics, double alpha, std::ostream& out) {
  const auto ids = split_csv(metrics);
  if (ids.empty()) config_error("--metrics needs at least one metric id");
  for (const auto& id : ids) {
    if (!find_metric_info(id)) config_error("unknown metric '" + id + "'");
  }
  RiskParams risk{alpha};
  std::map<std::string, double> scores;
  if (!pred.empty() || !truth.empty()) {
    if (pred.empty() || truth.empty()) config_error("--pred and --truth go together");
    const auto p = row_blocks(load_frame(pred, infer_data_format(pred)));
    const auto t = row_blocks(load_frame(truth, infer_data_format(truth)));
    scores = evaluate_forecast(ids, p, t, risk);
  } else if (!real.empty() || !fake.empty()) {
    if (real.empty() || fake.empty()) config_error("--real and --fake go together");
    const auto r = segment_dir(real);
    const auto f = segment_dir(fake);
    scores = evaluate_generation(ids, r, f, risk);
  } else {
    config_error("eval needs --pred/--truth or --real/--fake");
  }
  out << json(scores).dump(2) << "\n";
  return kOk;
}

int do_verify(const std::filesystem::path& file, std::ostream& out) {
  if (!std::filesystem::exists(file)) throw Error(ErrorCode::MissingFile, file.string());
  const ChainVerdict v = verify_chain(file);
  json doc = {{"ok", v.ok}, {"entries", v.entries}, {"head_hash", v.head_hash}};
  if (!v.ok) {
    doc["first_bad_seq"] = v.first_bad_seq ? json(*v.first_bad_seq) : json(nullptr);
    doc["reason"] = v.reason;
  }
  out << doc.dump() << "\n";
  return v.ok ? kOk : kAuditFailure;
}

int do_audit_report(const std::filesystem::path& file, const std::string& format, std::ostream& out) {
  if (!std::filesystem::exists(file)) throw Error(ErrorCode::MissingFile, file.string());
  out << export_report(file, parse_report_format(format));
  return kOk;
}

int do_banks_validate(const std::filesystem::path& dir, std::ostream& out) {
  const BankSet banks = load_banks(dir);
  out << json{{"ok", true},
              {"cases", banks.cases.size()},
              {"refinements", banks.refinements.size()},
              {"models", banks.models.size()},
              {"metrics", banks.metrics.size()},
              {"content_digest", banks.content_digest}}
             .dump()
      << "\n";
  return kOk;
}

std::string key_help(const std::string& key) {
  static const std::map<std::string, std::string> help{
      {"task", "Task sidecar file (JSON)"},
      {"banks", "Bank directory (default banks)"},
      {"out", "Output directory (default out)"},
      {"planner", "scripted, random, llm or replay (default scripted)"},
      {"seed", "Run seed (default 0)"},
      {"k", "Candidates kept after stage one (default 2)"},
      {"warmup", "Warm-up iterations per candidate (default 3)"},
      {"opt", "Optimization iterations for the winner (default 10)"},
      {"debug_retries", "Repair attempts per failed run (default 2)"},
      {"parallel", "Concurrent warm-up loops, 0 for k (default 0)"},
      {"case_neighbors", "Cases retrieved before voting (default 5)"},
      {"context_budget", "Planner context budget in characters (default 16000)"},
      {"llm_mode", "live, record or replay for the llm planner (default live)"},
      {"transcript", "LLM transcript file for record and replay"},
      {"prompts", "Directory with prompt template overrides"},
      {"native_timeout_ms", "Wall-clock limit per native run (default 120000)"}};
  auto it = help.find(key);
  return it == help.end() ? key : it->second;
}

/// Registers the run/replay options; flag values are applied after the file and env.
void add_run_options(CLI::App& cmd, std::map<std::string, std::string>& flags, std::string& config_file,
                     bool strict_flag_allowed) {
  cmd.add_option("--config", config_file, "YAML config file (flat map of the keys below)");
  for (const auto& key : config_keys()) {
    if (key == "strict_sequence") {
      if (strict_flag_allowed) {
        cmd.add_flag_function(
            "--strict-sequence", [&flags](std::int64_t) { flags["strict_sequence"] = "true"; },
            "Consume the transcript strictly in order");
      }
      continue;
    }
    cmd.add_option(flag_name(key), flags[key], key_help(key));
  }
}

CliConfig merged_config(const std::map<std::string, std::string>& flags, const CLI::App& cmd,
                        const std::string& config_file, const std::map<std::string, std::string>& env) {
  CliConfig c;
  if (!config_file.empty()) apply_yaml_file(c, config_file);
  apply_env(c, env);
  for (const auto& [key, value] : flags) {
    if (key == "strict_sequence") {
      apply_setting(c, key, value);
    } else if (cmd.count(flag_name(key)) > 0) {
      apply_setting(c, key, value);
    }
  }
  return c;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "task",     "banks",          "out",        "planner",         "seed",     "k",
      "warmup",   "opt",            "debug_retries", "parallel",     "case_neighbors",
      "context_budget", "llm_mode", "transcript", "strict_sequence", "prompts", "native_timeout_ms"};
  return keys;
}

void apply_setting(CliConfig& c, const std::string& key, const std::string& value) {
  if (key == "task") c.task = value;
  else if (key == "banks") c.banks = value;
  else if (key == "out") c.out = value;
  else if (key == "planner") c.planner = value;
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "k") c.k = parse_number<std::size_t>(key, value);
  else if (key == "warmup") c.warmup = parse_number<int>(key, value);
  else if (key == "opt") c.opt = parse_number<int>(key, value);
  else if (key == "debug_retries") c.debug_retries = parse_number<int>(key, value);
  else if (key == "parallel") c.parallel = parse_number<std::size_t>(key, value);
  else if (key == "case_neighbors") c.case_neighbors = parse_number<std::size_t>(key, value);
  else if (key == "context_budget") c.context_budget = parse_number<std::size_t>(key, value);
  else if (key == "llm_mode") c.llm_mode = value;
  else if (key == "transcript") c.transcript = value;
  else if (key == "strict_sequence") c.strict_sequence = parse_bool(key, value);
  else if (key == "prompts") c.prompts = value;
  else if (key == "native_timeout_ms") c.native_timeout_ms = parse_number<std::int64_t>(key, value);
  else config_error("unknown config key '" + key + "'");
}

void apply_yaml_file(CliConfig& c, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingFile, file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  YAML::Node root;
  try {
    root = YAML::Load(ss.str());
  } catch (const YAML::Exception& e) {
    config_error(file.string() + ": " + e.what());
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) config_error(file.string() + ": top level must be a map");
  for (const auto& item : root) {
    const auto key = item.first.as<std::string>();
    const YAML::Node& value = item.second;
    if (!value.IsScalar()) config_error(file.string() + ": '" + key + "' must be a scalar");
    if (!value.Tag().empty() && value.Tag() != "?" && value.Tag() != "!") {
      config_error(file.string() + ": '" + key + "' uses an explicit tag");
    }
    apply_setting(c, key, value.Scalar());
  }
  // yaml-cpp resolves anchors and aliases transparently, so look for them in the text.
  std::istringstream lines(ss.str());
  std::string line;
  while (std::getline(lines, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto rest = line.find_first_not_of(" \t", colon + 1);
    if (rest != std::string::npos && (line[rest] == '&' || line[rest] == '*')) {
      config_error(file.string() + ": anchors and aliases are not supported");
    }
  }
}

void apply_env(CliConfig& c, const std::map<std::string, std::string>& env) {
  for (const auto& key : config_keys()) {
    auto it = env.find(env_name(key));
    if (it != env.end()) apply_setting(c, key, it->second);
  }
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string kv(*e);
    const auto eq = kv.find('=');
    if (eq != std::string::npos) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env) {
  CLI::App app{"tsflow: case-based model selection and refinement search for time series", "tsflow"};
  app.require_subcommand(1);

  std::map<std::string, std::string> run_flags;
  std::string run_config;
  auto* run = app.add_subcommand("run", "Run the full search and write report.json, audit.log, winner.config.json");
  add_run_options(*run, run_flags, run_config, true);

  std::map<std::string, std::string> replay_flags;
  std::string replay_config;
  auto* replay = app.add_subcommand("replay", "Run against a recorded LLM transcript");
  add_run_options(*replay, replay_flags, replay_config, true);

  std::string r_task, r_banks = "banks";
  std::size_t r_k = 2, r_cases = 5;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Print case retrieval and model votes for a task as JSON");
  retrieve_cmd->add_option("--task", r_task, "Task sidecar file")->required();
  retrieve_cmd->add_option("--banks", r_banks, "Bank directory");
  retrieve_cmd->add_option("--k", r_k, "Models to keep");
  retrieve_cmd->add_option("--cases", r_cases, "Cases retrieved before voting");

  std::string e_pred, e_truth, e_real, e_fake, e_metrics;
  double e_alpha = 0.05;
  auto* eval = app.add_subcommand("eval", "Score forecasts or generated segments");
  eval->add_option("--pred", e_pred, "Forecast frame, one single-step forecast per row");
  eval->add_option("--truth", e_truth, "Realized frame aligned with --pred");
  eval->add_option("--real", e_real, "Directory of real segment frames");
  eval->add_option("--fake", e_fake, "Directory of generated segment frames");
  eval->add_option("--metrics", e_metrics, "Comma-separated metric ids")->required();
  eval->add_option("--alpha", e_alpha, "VaR/ES tail probability");

  auto* audit = app.add_subcommand("audit", "Audit log tools");
  audit->require_subcommand(1);
  std::string a_verify_file, a_report_file, a_format = "md";
  auto* verify = audit->add_subcommand("verify", "Check the hash chain; exit 3 on the first bad entry");
  verify->add_option("file", a_verify_file, "audit.log")->required();
  auto* report = audit->add_subcommand("report", "Render the run report from an audit log");
  report->add_option("file", a_report_file, "audit.log")->required();
  report->add_option("--format", a_format, "md or json");

  auto* banks = app.add_subcommand("banks", "Bank tools");
  banks->require_subcommand(1);
  std::string b_dir;
  auto* validate = banks->add_subcommand("validate", "Load and cross-check a bank directory");
  validate->add_option("dir", b_dir, "Bank directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (run->parsed()) return do_run(merged_config(run_flags, *run, run_config, env), out, env);
    if (replay->parsed()) {
      CliConfig c = merged_config(replay_flags, *replay, replay_config, env);
      c.planner = "replay";
      return do_run(c, out, env);
    }
    if (retrieve_cmd->parsed()) return do_retrieve(r_task, r_banks, r_k, r_cases, out);
    if (eval->parsed()) return do_eval(e_pred, e_truth, e_real, e_fake, e_metrics, e_alpha, out);
    if (verify->parsed()) return do_verify(a_verify_file, out);
    if (report->parsed()) return do_audit_report(a_report_file, a_format, out);
    if (validate->parsed()) return do_banks_validate(b_dir, out);
  } catch (const Error& e) {
    err << json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << "\n";
    if (e.code() == ErrorCode::ChainInvalid) return kAuditFailure;
    return kConfig;
  } catch (const std::exception& e) {
    err << json{{"error", "Unexpected"}, {"message", e.what()}}.dump() << "\n";
    return kConfig;
  }
  return kConfig;
}

}  // namespace tsflow::cli
