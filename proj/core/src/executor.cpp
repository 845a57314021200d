#include "tsflow/executor.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"
#include "tsflow/native_models.hpp"
#include "tsflow/subprocess.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tsflow {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kStatusNames = {"success", "train_error", "timeout", "invalid_output"};

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
}

RunResult failure(RunStatus status, std::string message) {
  RunResult r;
  r.status = status;
  r.message = std::move(message);
  return r;
}

bool all_finite(const std::vector<Eigen::MatrixXd>& blocks) {
  for (const auto& b : blocks) {
    if (!b.allFinite()) return false;
  }
  return true;
}

HyperValue hyper(const CandidateConfig& config, const ModelDescriptor& model, const std::string& name) {
  auto it = config.hyperparams.find(name);
  if (it != config.hyperparams.end()) return it->second;
  if (const auto* spec = model.find_param(name)) return spec->default_value;
  throw Error(ErrorCode::InvalidArgument, model.id + ": no value for hyperparameter '" + name + "'");
}

double real_hyper(const CandidateConfig& c, const ModelDescriptor& m, const std::string& name, double fallback) {
  if (!c.hyperparams.count(name) && !m.find_param(name)) return fallback;
  return as_real(hyper(c, m, name));
}

std::vector<Eigen::MatrixXd> forecast_native(NativeModel kind, const CandidateConfig& config,
                                             const ModelDescriptor& model, const TaskSpec& task,
                                             const EffectiveSettings& settings) {
  const DatasetSplit& ds = *task.dataset;
  const Scaler scaler = Scaler::fit(ds.train.values(), settings.normalization);
  const std::vector<Window> test = make_windows(ds.test, ds.window);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(test.size());
  switch (kind) {
    case NativeModel::NaiveLast:
      for (const auto& w : test) out.push_back(predict_naive_last(w.input, ds.window.horizon));
      break;
    case NativeModel::ExpSmoothing: {
      const double alpha = real_hyper(config, model, "alpha", 0.3);
      for (const auto& w : test) {
        out.push_back(scaler.inverse(predict_exp_smoothing(scaler.transform(w.input), ds.window.horizon, alpha)));
      }
      break;
    }
    case NativeModel::GdLinear: {
      std::vector<Window> train = make_windows(ds.train, ds.window);
      for (auto& w : train) {
        w.input = scaler.transform(w.input);
        w.target = scaler.transform(w.target);
      }
      GdLinearOptions opts;
      opts.lr = real_hyper(config, model, "lr", opts.lr);
      opts.epochs = static_cast<int>(real_hyper(config, model, "epochs", opts.epochs));
      opts.val_fraction = real_hyper(config, model, "val_fraction", opts.val_fraction);
      opts.seed = config.seed;
      opts.settings = settings;
      const GdLinearModel fitted = fit_gd_linear(train, opts);
      for (const auto& w : test) out.push_back(scaler.inverse(fitted.predict(scaler.transform(w.input))));
      break;
    }
    default:
      throw Error(ErrorCode::InvalidArgument, std::string(to_string(kind)) + " is not a forecasting model");
  }
  return out;
}

std::vector<Eigen::MatrixXd> generate_native(NativeModel kind, const CandidateConfig& config,
                                             const ModelDescriptor& model, const TaskSpec& task,
                                             const EffectiveSettings& settings) {
  const DatasetSplit& ds = *task.dataset;
  const std::size_t q = ds.window.horizon;
  const std::size_t n_fake = make_segments(ds.test, q, ds.window.stride).size();
  const Scaler scaler = Scaler::fit(ds.train.values(), settings.normalization);
  std::vector<Eigen::MatrixXd> out;
  switch (kind) {
    case NativeModel::GaussianGen: {
      std::vector<Eigen::MatrixXd> segs = make_segments(ds.train, q, ds.window.stride);
      for (auto& s : segs) s = scaler.transform(s);
      out = generate_gaussian(segs, n_fake, settings.cov_shrinkage, config.seed);
      for (auto& s : out) s = scaler.inverse(s);
      break;
    }
    case NativeModel::BlockBootstrapGen: {
      const auto block_len = static_cast<std::size_t>(real_hyper(config, model, "block_len", 4));
      out = generate_block_bootstrap(ds.train.values(), q, n_fake, block_len, config.seed);
      break;
    }
    default:
      throw Error(ErrorCode::InvalidArgument, std::string(to_string(kind)) + " is not a generation model");
  }
  return out;
}

RunResult finish_with_outputs(RunResult r, const TaskSpec& task, const std::vector<Eigen::MatrixXd>& outputs,
                              const RiskParams& risk) {
  if (!all_finite(outputs)) return failure(RunStatus::InvalidOutput, "model produced non-finite values");
  r.artifact_digest = outputs_digest(outputs);
  try {
    r.metrics = score_outputs(task, outputs, risk);
  } catch (const Error& e) {
    return failure(RunStatus::TrainError, std::string("evaluation failed: ") + e.what());
  }
  for (const auto& [id, v] : r.metrics) {
    if (!std::isfinite(v)) return failure(RunStatus::InvalidOutput, "metric " + id + " is not finite");
  }
  r.status = RunStatus::Success;
  r.primary_loss = r.metrics.at(task.primary_criterion);
  return r;
}

std::vector<Eigen::MatrixXd> blocks_from_json(const json& doc) {
  if (!doc.is_array()) throw Error(ErrorCode::SchemaViolation, "predictions must be an array of q x d blocks");
  std::vector<Eigen::MatrixXd> out;
  for (const auto& block : doc) {
    if (!block.is_array() || block.empty() || !block[0].is_array()) {
      throw Error(ErrorCode::SchemaViolation, "each prediction block must be a non-empty 2-D array");
    }
    Eigen::MatrixXd m(block.size(), block[0].size());
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (!block[i].is_array() || block[i].size() != block[0].size()) {
        throw Error(ErrorCode::SchemaViolation, "ragged prediction block");
      }
      for (std::size_t j = 0; j < block[i].size(); ++j) {
        if (!block[i][j].is_number()) throw Error(ErrorCode::SchemaViolation, "non-numeric prediction cell");
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = block[i][j].get<double>();
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

std::string_view to_string(RunStatus status) noexcept { return kStatusNames[static_cast<std::size_t>(status)]; }

RunStatus parse_run_status(std::string_view text) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == text) return static_cast<RunStatus>(i);
  }
  throw Error(ErrorCode::SchemaViolation, "unknown run status '" + std::string(text) + "'");
}

json to_json(const RunResult& r) {
  json doc = {{"status", to_string(r.status)},
              {"message", r.message},
              {"metrics", r.metrics},
              {"primary_loss", r.primary_loss ? json(*r.primary_loss) : json(nullptr)},
              {"artifact_digest", r.artifact_digest},
              {"warnings", r.warnings}};
  return doc;
}

RunResult run_result_from_json(const json& doc) {
  RunResult r;
  r.status = parse_run_status(doc.at("status").get<std::string>());
  r.message = doc.value("message", "");
  if (doc.contains("metrics")) r.metrics = doc.at("metrics").get<std::map<std::string, double>>();
  if (doc.contains("primary_loss") && !doc.at("primary_loss").is_null()) r.primary_loss = doc.at("primary_loss").get<double>();
  r.artifact_digest = doc.value("artifact_digest", "");
  if (doc.contains("warnings")) r.warnings = doc.at("warnings").get<std::vector<std::string>>();
  return r;
}

std::string summarize(const RunResult& r) {
  std::ostringstream os;
  os << "status: " << to_string(r.status) << "\n";
  if (r.primary_loss) os << "primary_loss: " << format_double(*r.primary_loss) << "\n";
  if (!r.metrics.empty()) {
    os << "metrics:";
    for (const auto& [k, v] : r.metrics) os << " " << k << "=" << format_double(v);
    os << "\n";
  }
  if (!r.message.empty()) os << "error: " << r.message << "\n";
  if (!r.ok() && !r.stderr_tail.empty()) os << "stderr tail:\n" << r.stderr_tail << "\n";
  for (const auto& w : r.warnings) os << "warning: " << w << "\n";
  return os.str();
}

std::map<std::string, double> score_outputs(const TaskSpec& task, const std::vector<Eigen::MatrixXd>& outputs,
                                            const RiskParams& risk) {
  const DatasetSplit& ds = *task.dataset;
  if (task.kind == TaskKind::Forecasting) {
    const std::vector<Window> test = make_windows(ds.test, ds.window);
    if (outputs.size() != test.size()) {
      throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(test.size()) + " prediction blocks, got " +
                                                std::to_string(outputs.size()));
    }
    std::vector<Eigen::MatrixXd> targets;
    targets.reserve(test.size());
    for (const auto& w : test) targets.push_back(w.target);
    return evaluate_forecast(task.criteria, outputs, targets, risk);
  }
  const std::vector<Eigen::MatrixXd> real = make_segments(ds.test, ds.window.horizon, ds.window.stride);
  return evaluate_generation(task.criteria, real, outputs, risk);
}

std::string outputs_digest(const std::vector<Eigen::MatrixXd>& outputs) {
  std::string bytes;
  for (const auto& b : outputs) {
    bytes += std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ":";
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) {
        bytes += format_double(b(i, j));
        bytes += ',';
      }
    }
    bytes += ';';
  }
  return sha256_hex(bytes);
}

RunResult run_native(const CandidateConfig& config, const ModelDescriptor& model, const TaskSpec& task,
                     const ExecutorOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  if (!model.native) return failure(RunStatus::TrainError, model.id + " has no native binding");
  const NativeModel kind = *model.native;
  if (task_kind_of(kind) != task.kind) {
    return failure(RunStatus::TrainError, model.id + " cannot serve a " + std::string(to_string(task.kind)) + " task");
  }
  if (config.freeform_patch) {
    return failure(RunStatus::TrainError, "freeform_patch is only accepted by external bindings");
  }
  std::vector<Eigen::MatrixXd> outputs;
  try {
    const EffectiveSettings settings = apply_directives(config, kind);
    r.warnings = settings.warnings;
    outputs = task.kind == TaskKind::Forecasting ? forecast_native(kind, config, model, task, settings)
                                                 : generate_native(kind, config, model, task, settings);
  } catch (const std::exception& e) {
    RunResult f = failure(RunStatus::TrainError, e.what());
    f.warnings = r.warnings;
    f.duration_ms = elapsed_ms(start);
    return f;
  }
  r.duration_ms = elapsed_ms(start);
  // Native models cannot be interrupted mid-fit, so the budget is enforced after the fact.
  if (std::chrono::milliseconds(r.duration_ms) > options.native_timeout) {
    RunResult f = failure(RunStatus::Timeout, "native run exceeded " + std::to_string(options.native_timeout.count()) + " ms");
    f.duration_ms = r.duration_ms;
    return f;
  }
  RunResult done = finish_with_outputs(std::move(r), task, outputs, options.risk);
  done.duration_ms = elapsed_ms(start);
  return done;
}

json make_exec_request(const CandidateConfig& config, const TaskSpec& task, bool engine_scoring) {
  const DatasetSplit& ds = *task.dataset;
  return {{"v", 1},
          {"task",
           {{"id", task.id},
            {"kind", to_string(task.kind)},
            {"window", {{"p", ds.window.input_len}, {"q", ds.window.horizon}, {"stride", ds.window.stride}}},
            {"criteria", task.criteria},
            {"primary_criterion", task.primary_criterion}}},
          {"data", {{"train", to_json_frame(ds.train)}, {"test", to_json_frame(ds.test)}}},
          {"config", to_json(config)},
          {"scoring", engine_scoring ? "engine" : "executor"}};
}

RunResult interpret_exec_response(const std::string& stdout_text, const TaskSpec& task, const RiskParams& risk) {
  json doc = json::parse(stdout_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return failure(RunStatus::TrainError, "malformed ExecResponse: not a JSON object");
  static const std::array<std::string_view, 5> known = {"v", "status", "metrics", "predictions_path", "message"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      return failure(RunStatus::TrainError, "malformed ExecResponse: unknown field '" + key + "'");
    }
  }
  if (doc.value("v", json()) != json(1)) return failure(RunStatus::TrainError, "malformed ExecResponse: v must be 1");
  const json status = doc.value("status", json());
  const std::string message = doc.contains("message") && doc["message"].is_string() ? doc["message"].get<std::string>() : "";
  if (status == "error") return failure(RunStatus::TrainError, message.empty() ? "executor reported an error" : message);
  if (status != "success") return failure(RunStatus::TrainError, "malformed ExecResponse: status must be success or error");

  RunResult r;
  if (doc.contains("metrics")) {
    if (!doc["metrics"].is_object()) return failure(RunStatus::TrainError, "malformed ExecResponse: metrics must be an object");
    for (const auto& [k, v] : doc["metrics"].items()) {
      if (!v.is_number()) return failure(RunStatus::TrainError, "malformed ExecResponse: metric " + k + " is not a number");
      r.metrics[k] = v.get<double>();
    }
    for (const auto& id : task.criteria) {
      if (!r.metrics.count(id)) return failure(RunStatus::TrainError, "ExecResponse is missing metric " + id);
    }
    for (const auto& [k, v] : r.metrics) {
      if (!std::isfinite(v)) return failure(RunStatus::InvalidOutput, "metric " + k + " is not finite");
    }
    r.status = RunStatus::Success;
    r.primary_loss = r.metrics.at(task.primary_criterion);
    r.artifact_digest = json_digest(doc["metrics"]);
    return r;
  }
  if (doc.contains("predictions_path") && doc["predictions_path"].is_string()) {
    const std::filesystem::path path = doc["predictions_path"].get<std::string>();
    std::ifstream in(path);
    if (!in) return failure(RunStatus::TrainError, "cannot read predictions file " + path.string());
    json preds = json::parse(in, nullptr, false);
    if (preds.is_discarded()) return failure(RunStatus::InvalidOutput, "predictions file is not JSON");
    std::vector<Eigen::MatrixXd> outputs;
    try {
      outputs = blocks_from_json(preds.is_object() && preds.contains("predictions") ? preds["predictions"] : preds);
    } catch (const Error& e) {
      return failure(RunStatus::InvalidOutput, e.what());
    }
    return finish_with_outputs(std::move(r), task, outputs, risk);
  }
  return failure(RunStatus::TrainError, "ExecResponse has neither metrics nor predictions_path");
}

RunResult run_external(const CandidateConfig& config, const TaskSpec& task, const ExternalBinding& binding,
                       const ExecutorOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ProcessOptions popts;
  popts.timeout = std::chrono::milliseconds(binding.timeout_ms);
  const std::string request = make_exec_request(config, task).dump() + "\n";
  ProcessResult p = run_process(binding.command, request, popts);

  RunResult r;
  if (p.spawn_error) {
    r = failure(RunStatus::TrainError, "spawn failed: " + *p.spawn_error);
  } else if (p.timed_out) {
    r = failure(RunStatus::Timeout, "external executor exceeded " + std::to_string(binding.timeout_ms) + " ms");
  } else if (p.exit_code != 0) {
    std::string msg = "external executor exited with status " + std::to_string(p.exit_code);
    if (!p.stderr_tail.empty()) msg += ": " + p.stderr_tail;
    r = failure(RunStatus::TrainError, msg);
  } else {
    r = interpret_exec_response(p.stdout_text, task, options.risk);
  }
  r.stderr_tail = p.stderr_tail;
  r.stdout_tail = p.stdout_text.size() > 8192 ? p.stdout_text.substr(p.stdout_text.size() - 8192) : p.stdout_text;
  r.duration_ms = elapsed_ms(start);
  return r;
}

ModelExecutor::ModelExecutor(const BankSet& banks, ExecutorOptions options) : banks_(banks), options_(std::move(options)) {}

RunResult ModelExecutor::run(const CandidateConfig& config, const TaskSpec& task) {
  const ModelDescriptor* model = banks_.find_model(config.model_id);
  if (!model) return failure(RunStatus::TrainError, "unknown model " + config.model_id);
  if (model->native) return run_native(config, *model, task, options_);
  if (model->external) return run_external(config, task, *model->external, options_);
  return failure(RunStatus::TrainError, model->id + " has no binding");
}

}  // namespace tsflow
