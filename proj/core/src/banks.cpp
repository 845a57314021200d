#include "tsflow/banks.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"
#include "tsflow/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tsflow {

std::string_view to_string(RefinementCategory category) noexcept {
  switch (category) {
    case RefinementCategory::Preprocessing: return "preprocessing";
    case RefinementCategory::TrainingOptimization: return "training_optimization";
    case RefinementCategory::TuningEvaluation: return "tuning_evaluation";
  }
  return "unknown";
}

namespace {

constexpr std::pair<ModelFamily, std::string_view> kFamilies[] = {
    {ModelFamily::Tree, "tree"},       {ModelFamily::Deep, "deep"},
    {ModelFamily::Econometric, "econometric"}, {ModelFamily::Gan, "gan"},
    {ModelFamily::Vae, "vae"},         {ModelFamily::Diffusion, "diffusion"},
    {ModelFamily::Linear, "linear"},   {ModelFamily::Baseline, "baseline"},
};

/// Field access for one record file: every read marks the field as known, and
/// `finish` rejects anything left over.
class RecordReader {
 public:
  RecordReader(const RawRecord& raw) : file_(raw.file), doc_(raw.doc) {
    if (!doc_.is_object()) fail("<root>", "record must be a JSON object");
    const auto& v = field("v");
    if (!v.is_number_integer() || v.get<int>() != 1) fail("v", "schema version must be 1");
  }

  [[noreturn]] void fail(const std::string& field, const std::string& why) const {
    throw Error(ErrorCode::SchemaViolation, file_ + ": field '" + field + "': " + why);
  }

  const nlohmann::json& field(const std::string& name) {
    seen_.insert(name);
    if (!doc_.contains(name)) fail(name, "required");
    return doc_[name];
  }

  bool has(const std::string& name) {
    seen_.insert(name);
    return doc_.contains(name);
  }

  std::string string(const std::string& name, bool allow_empty = false) {
    const auto& v = field(name);
    if (!v.is_string()) fail(name, "expected string");
    auto s = v.get<std::string>();
    if (!allow_empty && s.empty()) fail(name, "must be non-empty");
    return s;
  }

  std::vector<std::string> strings(const std::string& name) {
    const auto& v = field(name);
    if (!v.is_array()) fail(name, "expected array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) fail(name, "expected array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  std::set<TaskKind> kinds(const std::string& name) {
    std::set<TaskKind> out;
    for (const auto& s : strings(name)) {
      try {
        out.insert(parse_task_kind(s));
      } catch (const Error&) {
        fail(name, "unknown task kind '" + s + "'");
      }
    }
    if (out.empty()) fail(name, "must list at least one task kind");
    return out;
  }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (!seen_.count(key)) fail(key, "unknown field");
    }
  }

  const std::string& file() const { return file_; }

 private:
  std::string file_;
  const nlohmann::json& doc_;
  std::set<std::string> seen_;
};

CaseRecord parse_case(const RawRecord& raw) {
  RecordReader r(raw);
  CaseRecord c;
  c.id = r.string("id");
  try {
    c.task_kind = parse_task_kind(r.string("task_kind"));
  } catch (const Error&) {
    r.fail("task_kind", "must be forecasting or generation");
  }
  c.domain_tags = r.strings("domain_tags");
  c.description = r.string("description", true);
  c.solution_summary = r.string("solution_summary", true);
  c.recommended_model = r.string("recommended_model");
  if (r.has("outcome")) {
    const auto& o = r.field("outcome");
    if (!o.is_object()) r.fail("outcome", "expected object of metric -> number");
    for (const auto& [k, v] : o.items()) {
      if (!v.is_number()) r.fail("outcome." + k, "expected number");
      c.outcome[k] = v.get<double>();
    }
  }
  r.finish();
  return c;
}

RefinementEntry parse_refinement(const RawRecord& raw) {
  RecordReader r(raw);
  RefinementEntry e;
  e.id = r.string("id");
  const auto category = r.string("category");
  if (category == "preprocessing") e.category = RefinementCategory::Preprocessing;
  else if (category == "training_optimization") e.category = RefinementCategory::TrainingOptimization;
  else if (category == "tuning_evaluation") e.category = RefinementCategory::TuningEvaluation;
  else r.fail("category", "must be preprocessing, training_optimization or tuning_evaluation");
  e.title = r.string("title");
  e.guidance = r.string("guidance");
  e.applicability = r.strings("applicability");
  if (e.applicability.empty()) r.fail("applicability", "must list at least one model family");
  for (const auto& fam : e.applicability) {
    if (!parse_model_family(fam)) r.fail("applicability", "unknown model family '" + fam + "'");
  }

  const auto& d = r.field("directive");
  if (!d.is_object() || !d.contains("kind") || !d["kind"].is_string()) {
    r.fail("directive", "expected {kind, params}");
  }
  for (const auto& [key, _] : d.items()) {
    if (key != "kind" && key != "params") r.fail("directive." + key, "unknown field");
  }
  const auto kind = parse_directive_kind(d["kind"].get<std::string>());
  if (!kind) r.fail("directive.kind", "'" + d["kind"].get<std::string>() + "' is not in the directive catalog");
  e.directive_template.kind = *kind;
  const nlohmann::json params = d.contains("params") ? d["params"] : nlohmann::json::object();
  if (!params.is_object()) r.fail("directive.params", "expected object");
  for (const auto& spec : directive_params(*kind)) {
    if (!params.contains(spec.name)) r.fail("directive.params." + spec.name, "required by " + std::string(to_string(*kind)));
    const auto& p = params[spec.name];
    if (!p.is_object() || !p.contains("default") || !p["default"].is_number()) {
      r.fail("directive.params." + spec.name, "expected {default, min?, max?}");
    }
    DirectiveParamTemplate t;
    t.default_value = p["default"].get<double>();
    t.min = p.contains("min") ? p["min"].get<double>() : spec.min;
    t.max = p.contains("max") ? p["max"].get<double>() : spec.max;
    if (!spec.admits(t.default_value)) r.fail("directive.params." + spec.name, "default outside " + spec.describe());
    if (t.min > t.max || t.default_value < t.min || t.default_value > t.max) {
      r.fail("directive.params." + spec.name, "default must lie in [min, max]");
    }
    if (t.min < spec.min || t.max > spec.max) {
      r.fail("directive.params." + spec.name, "range exceeds catalog " + spec.describe());
    }
    e.directive_template.params[spec.name] = t;
  }
  for (const auto& [name, _] : params.items()) {
    if (!e.directive_template.params.count(name)) r.fail("directive.params." + name, "unknown parameter");
  }
  r.finish();
  return e;
}

HyperparamSpec parse_hyperparam(RecordReader& r, const nlohmann::json& h, std::size_t index) {
  const std::string path = "hyperparams[" + std::to_string(index) + "]";
  if (!h.is_object()) r.fail(path, "expected object");
  HyperparamSpec spec;
  if (!h.contains("name") || !h["name"].is_string()) r.fail(path + ".name", "required string");
  spec.name = h["name"].get<std::string>();
  if (!h.contains("type") || !h["type"].is_string()) r.fail(path + ".type", "required string");
  try {
    spec.type = parse_hyper_type(h["type"].get<std::string>());
  } catch (const Error&) {
    r.fail(path + ".type", "must be int, real, log-real or categorical");
  }
  for (const auto& [key, _] : h.items()) {
    if (key != "name" && key != "type" && key != "min" && key != "max" && key != "choices" && key != "default") {
      r.fail(path + "." + key, "unknown field");
    }
  }
  if (spec.type == HyperType::Categorical) {
    if (!h.contains("choices") || !h["choices"].is_array() || h["choices"].empty()) {
      r.fail(path + ".choices", "categorical needs a non-empty choice list");
    }
    for (const auto& c : h["choices"]) spec.choices.push_back(c.get<std::string>());
  } else {
    if (!h.contains("min") || !h.contains("max") || !h["min"].is_number() || !h["max"].is_number()) {
      r.fail(path, "numeric hyperparameter needs min and max");
    }
    spec.min = h["min"].get<double>();
    spec.max = h["max"].get<double>();
    if (spec.min > spec.max) r.fail(path, "min > max");
    if (spec.type == HyperType::LogReal && !(spec.min > 0.0)) r.fail(path + ".min", "log-real needs min > 0");
  }
  if (!h.contains("default")) r.fail(path + ".default", "required");
  auto coerced = spec.coerce(h["default"]);
  if (const auto* why = std::get_if<std::string>(&coerced)) r.fail(path + ".default", *why);
  spec.default_value = std::get<HyperValue>(coerced);
  return spec;
}

ModelDescriptor parse_model(const RawRecord& raw) {
  RecordReader r(raw);
  ModelDescriptor m;
  m.id = r.string("id");
  const auto fam = parse_model_family(r.string("family"));
  if (!fam) r.fail("family", "unknown model family");
  m.family = *fam;
  m.task_kinds = r.kinds("task_kinds");
  m.summary = r.string("summary");
  const auto& hp = r.field("hyperparams");
  if (!hp.is_array()) r.fail("hyperparams", "expected array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < hp.size(); ++i) {
    auto spec = parse_hyperparam(r, hp[i], i);
    if (!names.insert(spec.name).second) r.fail("hyperparams", "duplicate name '" + spec.name + "'");
    m.hyperparam_schema.push_back(std::move(spec));
  }
  const auto& b = r.field("binding");
  if (!b.is_object() || b.size() != 1) r.fail("binding", "expected {native: kind} or {external: {...}}");
  if (b.contains("native")) {
    const auto native = b["native"].is_string() ? parse_native_model(b["native"].get<std::string>()) : std::nullopt;
    if (!native) r.fail("binding.native", "does not name an implemented native model");
    if (m.task_kinds != std::set<TaskKind>{task_kind_of(*native)}) {
      r.fail("task_kinds", "must match the native model's task kind");
    }
    m.native = native;
  } else if (b.contains("external")) {
    const auto& ext = b["external"];
    if (!ext.is_object() || !ext.contains("command") || !ext["command"].is_array() || ext["command"].empty()) {
      r.fail("binding.external.command", "required non-empty array");
    }
    ExternalBinding binding;
    for (const auto& c : ext["command"]) binding.command.push_back(c.get<std::string>());
    if (ext.contains("timeout_ms")) binding.timeout_ms = ext["timeout_ms"].get<std::int64_t>();
    if (binding.timeout_ms < 1) r.fail("binding.external.timeout_ms", "must be positive");
    m.external = std::move(binding);
  } else {
    r.fail("binding", "expected native or external");
  }
  r.finish();
  return m;
}

MetricDescriptor parse_metric(const RawRecord& raw) {
  RecordReader r(raw);
  MetricDescriptor m;
  m.id = r.string("id");
  m.task_kinds = r.kinds("task_kinds");
  if (r.string("direction") != "minimize") r.fail("direction", "only minimize is supported");
  m.summary = r.string("summary");
  const MetricInfo* info = find_metric_info(m.id);
  if (!info) r.fail("id", "'" + m.id + "' is not an implemented metric");
  for (TaskKind k : m.task_kinds) {
    if ((k == TaskKind::Forecasting && !info->forecasting) || (k == TaskKind::Generation && !info->generation)) {
      r.fail("task_kinds", "metric does not apply to " + std::string(to_string(k)) + " tasks");
    }
  }
  r.finish();
  return m;
}

template <typename Record>
void sort_and_check(std::vector<Record>& records, std::vector<const RawRecord*>& raws) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return records[a].id < records[b].id; });
  std::vector<Record> sorted;
  std::vector<const RawRecord*> sorted_raw;
  for (auto i : order) {
    if (!sorted.empty() && sorted.back().id == records[i].id) throw Error(ErrorCode::DuplicateId, records[i].id);
    sorted.push_back(std::move(records[i]));
    sorted_raw.push_back(raws[i]);
  }
  records = std::move(sorted);
  raws = std::move(sorted_raw);
}

template <typename Record, typename Parser>
std::vector<Record> parse_all(std::span<const RawRecord> raws, Parser parse, nlohmann::json& canon) {
  std::vector<Record> out;
  std::vector<const RawRecord*> ptrs;
  for (const auto& raw : raws) {
    out.push_back(parse(raw));
    ptrs.push_back(&raw);
  }
  sort_and_check(out, ptrs);
  canon = nlohmann::json::array();
  for (const auto* p : ptrs) canon.push_back(p->doc);
  return out;
}

template <typename Record>
const Record* find_by_id(const std::vector<Record>& records, std::string_view id) {
  auto it = std::lower_bound(records.begin(), records.end(), id,
                             [](const Record& r, std::string_view key) { return r.id < key; });
  return it != records.end() && it->id == id ? &*it : nullptr;
}

std::vector<RawRecord> read_section(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::MissingFile, dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, f.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      out.push_back({f.string(), nlohmann::json::parse(ss.str())});
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::SchemaViolation, f.string() + ": " + e.what());
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace

std::string_view to_string(ModelFamily family) noexcept {
  for (const auto& [f, name] : kFamilies) {
    if (f == family) return name;
  }
  return "unknown";
}

std::optional<ModelFamily> parse_model_family(std::string_view text) noexcept {
  for (const auto& [f, name] : kFamilies) {
    if (name == text) return f;
  }
  return std::nullopt;
}

DirectiveInstance DirectiveTemplate::instantiate() const {
  DirectiveInstance out{kind, {}};
  for (const auto& [name, t] : params) out.params[name] = t.default_value;
  return out;
}

const HyperparamSpec* ModelDescriptor::find_param(std::string_view name) const {
  for (const auto& p : hyperparam_schema) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Hyperparams ModelDescriptor::defaults() const {
  Hyperparams out;
  for (const auto& p : hyperparam_schema) out[p.name] = p.default_value;
  return out;
}

bool ModelDescriptor::accepts(DirectiveKind kind) const {
  if (native) return honors(*native, kind);
  return true;
}

const CaseRecord* BankSet::find_case(std::string_view id) const { return find_by_id(cases, id); }
const RefinementEntry* BankSet::find_refinement(std::string_view id) const { return find_by_id(refinements, id); }
const ModelDescriptor* BankSet::find_model(std::string_view id) const { return find_by_id(models, id); }
const MetricDescriptor* BankSet::find_metric(std::string_view id) const { return find_by_id(metrics, id); }

BankSet build_banks(std::span<const RawRecord> cases, std::span<const RawRecord> refinements,
                    std::span<const RawRecord> models, std::span<const RawRecord> metrics) {
  BankSet banks;
  nlohmann::json canon;
  banks.cases = parse_all<CaseRecord>(cases, parse_case, canon["cases"]);
  banks.refinements = parse_all<RefinementEntry>(refinements, parse_refinement, canon["refinements"]);
  banks.models = parse_all<ModelDescriptor>(models, parse_model, canon["models"]);
  banks.metrics = parse_all<MetricDescriptor>(metrics, parse_metric, canon["metrics"]);

  for (const auto& c : banks.cases) {
    const ModelDescriptor* m = banks.find_model(c.recommended_model);
    if (!m) throw Error(ErrorCode::DanglingReference, "case " + c.id + " -> model " + c.recommended_model);
    if (!m->task_kinds.count(c.task_kind)) {
      throw Error(ErrorCode::DanglingReference, "case " + c.id + " recommends " + m->id + " which does not serve " +
                                                    std::string(to_string(c.task_kind)) + " tasks");
    }
    for (const auto& [metric, _] : c.outcome) {
      if (!banks.find_metric(metric)) throw Error(ErrorCode::DanglingReference, "case " + c.id + " -> metric " + metric);
    }
  }
  for (const auto& e : banks.refinements) {
    const DirectiveInstance instance = e.directive_template.instantiate();
    if (auto err = check_directive(instance)) {
      throw Error(ErrorCode::SchemaViolation, "refinement " + e.id + ": default directive invalid: " + *err);
    }
    bool usable = false;
    for (const auto& m : banks.models) {
      const auto fam = std::string(to_string(m.family));
      const bool listed = std::find(e.applicability.begin(), e.applicability.end(), fam) != e.applicability.end();
      usable = usable || (listed && m.accepts(instance.kind));
    }
    if (!usable) {
      throw Error(ErrorCode::DanglingReference,
                  "refinement " + e.id + ": no model in families [" + join(e.applicability, ", ") + "] accepts " +
                      std::string(to_string(instance.kind)));
    }
  }
  banks.content_digest = json_digest(canon);
  return banks;
}

BankSet load_banks(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw Error(ErrorCode::MissingFile, root.string());
  const auto cases = read_section(root / "cases");
  const auto refinements = read_section(root / "refinements");
  const auto models = read_section(root / "models");
  const auto metrics = read_section(root / "metrics");
  return build_banks(cases, refinements, models, metrics);
}

std::string render_case(const CaseRecord& c) {
  std::ostringstream os;
  os << "[case " << c.id << "] (" << to_string(c.task_kind) << "; tags: " << join(c.domain_tags, ", ") << ")\n"
     << "Task: " << c.description << "\n"
     << "Solution: " << c.solution_summary << "\n"
     << "Recommended model: " << c.recommended_model << "\n";
  return os.str();
}

std::string render_refinement(const RefinementEntry& e) {
  std::ostringstream os;
  os << "[tip " << e.id << "] " << e.title << " (" << to_string(e.category) << ")\n" << e.guidance << "\n";
  os << "Directive: " << to_string(e.directive_template.kind);
  for (const auto& [name, t] : e.directive_template.params) {
    os << " " << name << "=" << format_double(t.default_value) << " in [" << format_double(t.min) << ", "
       << format_double(t.max) << "]";
  }
  os << "\nApplies to: " << join(e.applicability, ", ") << "\n";
  return os.str();
}

std::string render_model(const ModelDescriptor& m) {
  std::ostringstream os;
  os << "[model " << m.id << "] family=" << to_string(m.family) << "\n" << m.summary << "\n";
  os << "Hyperparameters:";
  if (m.hyperparam_schema.empty()) os << " none";
  for (const auto& p : m.hyperparam_schema) {
    os << " " << p.name << " (" << p.describe() << ", default " << to_display(p.default_value) << ")";
  }
  os << "\n";
  return os.str();
}

std::string bank_excerpt(const BankSet& banks, BankSection section, std::span<const std::string> ids) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::string out;
  for (const auto& id : sorted) {
    if (!out.empty()) out += "\n";
    switch (section) {
      case BankSection::Cases: {
        const auto* c = banks.find_case(id);
        if (!c) throw Error(ErrorCode::UnknownId, "case " + id);
        out += render_case(*c);
        break;
      }
      case BankSection::Refinements: {
        const auto* e = banks.find_refinement(id);
        if (!e) throw Error(ErrorCode::UnknownId, "refinement " + id);
        out += render_refinement(*e);
        break;
      }
      case BankSection::Models: {
        const auto* m = banks.find_model(id);
        if (!m) throw Error(ErrorCode::UnknownId, "model " + id);
        out += render_model(*m);
        break;
      }
      case BankSection::Metrics: {
        const auto* m = banks.find_metric(id);
        if (!m) throw Error(ErrorCode::UnknownId, "metric " + id);
        out += "[metric " + m->id + "] " + m->summary + "\n";
        break;
      }
    }
  }
  return out;
}

}  // namespace tsflow
