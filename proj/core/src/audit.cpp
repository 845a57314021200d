#include "tsflow/audit.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

namespace tsflow {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kActionNames = {"A_model",   "A_refinement",  "A_fine_tune",
                                                           "A_logging", "debug_attempt", "phase_marker"};
constexpr std::array<std::string_view, 3> kVerdictNames = {"accepted", "rejected", "n/a"};

const json& field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) throw Error(ErrorCode::SchemaViolation, std::string("log entry: missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& doc, const char* name) {
  const json& v = field(doc, name);
  if (!v.is_string()) throw Error(ErrorCode::SchemaViolation, std::string("log entry: field '") + name + "' must be a string");
  return v.get<std::string>();
}

std::string first_line(const std::string& text) {
  auto pos = text.find('\n');
  return pos == std::string::npos ? text : text.substr(0, pos);
}

std::string short_digest(const std::string& digest) { return digest.substr(0, 12); }

}  // namespace

std::string_view to_string(ActionKind action) noexcept { return kActionNames[static_cast<std::size_t>(action)]; }

ActionKind parse_action_kind(std::string_view text) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i) {
    if (kActionNames[i] == text) return static_cast<ActionKind>(i);
  }
  throw Error(ErrorCode::SchemaViolation, "unknown action '" + std::string(text) + "'");
}

std::string_view to_string(Verdict verdict) noexcept { return kVerdictNames[static_cast<std::size_t>(verdict)]; }

Verdict parse_verdict(std::string_view text) {
  for (std::size_t i = 0; i < kVerdictNames.size(); ++i) {
    if (kVerdictNames[i] == text) return static_cast<Verdict>(i);
  }
  throw Error(ErrorCode::SchemaViolation, "unknown verdict '" + std::string(text) + "'");
}

json hashed_body(const LogEntry& e) {
  json doc = {
      {"seq", e.seq},
      {"iteration", e.iteration},
      {"candidate_id", e.candidate_id},
      {"action", to_string(e.action)},
      {"payload", e.payload},
      {"rationale", e.rationale},
      {"config_digest", e.config_digest},
      {"metrics", nullptr},
      {"verdict", nullptr},
      {"timestamp", e.timestamp},
      {"prev_hash", e.prev_hash},
  };
  if (e.metrics) doc["metrics"] = *e.metrics;
  if (e.verdict) doc["verdict"] = to_string(*e.verdict);
  return doc;
}

json to_json(const LogEntry& entry) {
  json doc = hashed_body(entry);
  doc["entry_hash"] = entry.entry_hash;
  return doc;
}

LogEntry entry_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "log entry must be a JSON object");
  static const std::array<std::string_view, 12> known = {
      "seq",   "iteration", "candidate_id", "action",    "payload",   "rationale",
      "config_digest", "metrics", "verdict", "timestamp", "prev_hash", "entry_hash"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::SchemaViolation, "log entry: unknown field '" + key + "'");
    }
  }
  LogEntry e;
  const json& seq = field(doc, "seq");
  if (!seq.is_number_unsigned()) throw Error(ErrorCode::SchemaViolation, "log entry: seq must be a non-negative integer");
  e.seq = seq.get<std::uint64_t>();
  const json& it = field(doc, "iteration");
  if (!it.is_number_integer()) throw Error(ErrorCode::SchemaViolation, "log entry: iteration must be an integer");
  e.iteration = it.get<std::int64_t>();
  e.candidate_id = string_field(doc, "candidate_id");
  e.action = parse_action_kind(string_field(doc, "action"));
  e.payload = field(doc, "payload");
  e.rationale = string_field(doc, "rationale");
  e.config_digest = string_field(doc, "config_digest");
  const json& metrics = field(doc, "metrics");
  if (!metrics.is_null()) {
    if (!metrics.is_object()) throw Error(ErrorCode::SchemaViolation, "log entry: metrics must be an object or null");
    std::map<std::string, double> m;
    for (const auto& [k, v] : metrics.items()) {
      if (!v.is_number()) throw Error(ErrorCode::SchemaViolation, "log entry: metric '" + k + "' must be a number");
      m[k] = v.get<double>();
    }
    e.metrics = std::move(m);
  }
  const json& verdict = field(doc, "verdict");
  if (!verdict.is_null()) {
    if (!verdict.is_string()) throw Error(ErrorCode::SchemaViolation, "log entry: verdict must be a string or null");
    e.verdict = parse_verdict(verdict.get<std::string>());
  }
  e.timestamp = string_field(doc, "timestamp");
  e.prev_hash = string_field(doc, "prev_hash");
  e.entry_hash = string_field(doc, "entry_hash");
  return e;
}

std::string compute_entry_hash(const LogEntry& entry) {
  return sha256_hex(entry.prev_hash + canonical_json(hashed_body(entry)));
}

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

AuditLog::AuditLog() : clock_(utc_timestamp) {}

AuditLog::AuditLog(const std::filesystem::path& file) : clock_(utc_timestamp) {
  file_ = std::fopen(file.c_str(), "wb");
  if (!file_) throw Error(ErrorCode::IoFailure, "cannot open audit log " + file.string());
}

AuditLog::~AuditLog() {
  if (file_) std::fclose(file_);
}

AuditLog::Appended AuditLog::append(EntryFields fields) {
  LogEntry e = append_entry(std::move(fields));
  return {e.seq, e.entry_hash};
}

LogEntry AuditLog::append_entry(EntryFields fields) {
  std::lock_guard lock(mutex_);
  if (!open_) throw Error(ErrorCode::LogClosed, "append on a closed audit log");
  LogEntry e;
  static_cast<EntryFields&>(e) = std::move(fields);
  e.seq = entries_.size();
  e.timestamp = clock_();
  e.prev_hash = entries_.empty() ? std::string(kZeroHash) : entries_.back().entry_hash;
  e.entry_hash = compute_entry_hash(e);
  if (file_) {
    const std::string line = canonical_json(to_json(e)) + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
      throw Error(ErrorCode::IoFailure, "failed to write audit entry " + std::to_string(e.seq));
    }
  }
  entries_.push_back(e);
  return e;
}

void AuditLog::close() {
  std::lock_guard lock(mutex_);
  open_ = false;
  if (file_) {
    std::fclose(file_);
    file_ = nullptr;
  }
}

bool AuditLog::is_open() const {
  std::lock_guard lock(mutex_);
  return open_;
}

std::vector<LogEntry> AuditLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::string AuditLog::head_hash() const {
  std::lock_guard lock(mutex_);
  return entries_.empty() ? std::string(kZeroHash) : entries_.back().entry_hash;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void AuditLog::set_clock(Clock clock) {
  std::lock_guard lock(mutex_);
  clock_ = std::move(clock);
}

ChainVerdict verify_lines(const std::vector<std::string>& lines) { return verify_lines(lines, 0, std::string(kZeroHash)); }

ChainVerdict verify_lines(const std::vector<std::string>& lines, std::uint64_t first_seq, std::string prev_hash) {
  ChainVerdict verdict;
  std::string prev = std::move(prev_hash);
  auto fail = [&](std::uint64_t i, std::string reason) {
    verdict.ok = false;
    verdict.first_bad_seq = i;
    verdict.reason = std::move(reason);
    return verdict;
  };
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::uint64_t i = first_seq + k;
    json doc = json::parse(lines[k], nullptr, false);
    if (doc.is_discarded()) return fail(i, "line is not valid JSON");
    LogEntry e;
    try {
      e = entry_from_json(doc);
    } catch (const Error& err) {
      return fail(i, err.what());
    }
    if (e.seq != i) return fail(i, "expected seq " + std::to_string(i) + ", found " + std::to_string(e.seq));
    if (e.prev_hash != prev) return fail(i, "prev_hash does not link to the previous entry");
    if (compute_entry_hash(e) != e.entry_hash) return fail(i, "entry_hash mismatch");
    if (canonical_json(doc) != lines[k]) return fail(i, "line is not in canonical form");
    prev = e.entry_hash;
    ++verdict.entries;
  }
  verdict.head_hash = prev;
  return verdict;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot read audit log " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

ChainVerdict verify_chain(const std::filesystem::path& file) { return verify_lines(read_lines(file)); }

std::vector<LogEntry> read_log(const std::filesystem::path& file) {
  std::vector<LogEntry> out;
  for (const auto& line : read_lines(file)) {
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::SchemaViolation, "audit line " + std::to_string(out.size()) + " is not JSON");
    out.push_back(entry_from_json(doc));
  }
  return out;
}

void Memory::add(const LogEntry& entry) { entries_.push_back(entry); }

void Memory::push_state(std::string config_digest) { script_states_.push_back(std::move(config_digest)); }

void Memory::offer_best(const std::string& config_digest, double primary_loss) {
  if (!best_ || primary_loss < best_->primary_loss) best_ = BestSoFar{config_digest, primary_loss};
}

std::string render_memory_entry(const LogEntry& e) {
  std::ostringstream os;
  os << "#" << e.seq << " " << to_string(e.action);
  if (e.verdict) os << " " << to_string(*e.verdict);
  if (e.payload.is_object()) {
    auto it = e.payload.find("primary_loss");
    if (it != e.payload.end() && it->is_number()) os << " loss=" << format_double(it->get<double>());
    auto st = e.payload.find("status");
    if (st != e.payload.end() && st->is_string() && *st != "success") os << " status=" << st->get<std::string>();
  }
  if (e.metrics && !e.metrics->empty()) {
    os << " metrics{";
    bool first = true;
    for (const auto& [k, v] : *e.metrics) {
      os << (first ? "" : ",") << k << "=" << format_double(v);
      first = false;
    }
    os << "}";
  }
  os << " | " << first_line(e.rationale) << "\n";
  return os.str();
}

std::string digest_for_context(const Memory& memory, std::size_t char_budget) {
  std::string text = "BEST SO FAR: ";
  if (const auto& best = memory.best_so_far()) {
    text += "config " + short_digest(best->config_digest) + " loss=" + format_double(best->primary_loss) + "\n";
  } else {
    text += "none yet\n";
  }
  if (text.size() > char_budget) {
    throw Error(ErrorCode::BudgetImpossible, "best-so-far block needs " + std::to_string(text.size()) +
                                                 " characters, budget is " + std::to_string(char_budget));
  }
  const auto& entries = memory.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    std::string line = render_memory_entry(*it);
    if (text.size() + line.size() > char_budget) break;
    text += line;
  }
  return text;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "md" || text == "markdown") return ReportFormat::Markdown;
  if (text == "json") return ReportFormat::Json;
  throw Error(ErrorCode::InvalidArgument, "unknown report format '" + std::string(text) + "'");
}

namespace {

struct IterationGroup {
  std::string candidate_id;
  std::int64_t iteration = 0;
  std::vector<const LogEntry*> entries;
};

std::vector<IterationGroup> group_iterations(const std::vector<LogEntry>& entries) {
  std::vector<IterationGroup> groups;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  for (const auto& e : entries) {
    auto key = std::make_pair(e.candidate_id, e.iteration);
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) groups.push_back({e.candidate_id, e.iteration, {}});
    groups[it->second].entries.push_back(&e);
  }
  return groups;
}

std::string payload_string(const LogEntry& e, const char* key) {
  if (!e.payload.is_object()) return {};
  auto it = e.payload.find(key);
  return it != e.payload.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

std::string payload_loss(const LogEntry& e) {
  if (!e.payload.is_object()) return "-";
  auto it = e.payload.find("primary_loss");
  return it != e.payload.end() && it->is_number() ? format_double(it->get<double>()) : "-";
}

std::string markdown_report(const std::vector<LogEntry>& entries, const std::string& head) {
  std::ostringstream os;
  os << "# Audit report\n\n";
  os << "Entries: " << entries.size() << "  \n";
  os << "Chain head: `" << head << "`\n";
  for (const auto& g : group_iterations(entries)) {
    os << "\n## " << g.candidate_id << " / iteration " << g.iteration << "\n\n";
    for (const auto* e : g.entries) {
      os << "- #" << e->seq << " **" << to_string(e->action) << "**";
      if (e->verdict && *e->verdict != Verdict::NotApplicable) {
        os << " verdict: " << to_string(*e->verdict);
        if (*e->verdict == Verdict::Rejected) {
          const std::string reverted = payload_string(*e, "incumbent_after");
          if (!reverted.empty()) os << " (reverted to `" << short_digest(reverted) << "`)";
        }
      }
      if (!e->config_digest.empty()) os << " config `" << short_digest(e->config_digest) << "`";
      os << "\n";
      if (e->metrics && !e->metrics->empty()) {
        os << "  - metrics:";
        for (const auto& [k, v] : *e->metrics) os << " " << k << "=" << format_double(v);
        os << "\n";
      }
      if (!e->rationale.empty()) {
        std::istringstream lines(e->rationale);
        std::string line;
        bool first = true;
        while (std::getline(lines, line)) {
          os << (first ? "  - rationale: " : "    ") << line << "\n";
          first = false;
        }
      }
    }
  }
  os << "\n## Accepted incumbents\n\n";
  os << "| seq | candidate | iteration | config | primary loss |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& e : entries) {
    if (e.action == ActionKind::Logging && e.verdict == Verdict::Accepted) {
      os << "| " << e.seq << " | " << e.candidate_id << " | " << e.iteration << " | `" << short_digest(e.config_digest)
         << "` | " << payload_loss(e) << " |\n";
    }
  }
  return os.str();
}

json json_report(const std::vector<LogEntry>& entries, const std::string& head) {
  json iterations = json::array();
  for (const auto& g : group_iterations(entries)) {
    json items = json::array();
    for (const auto* e : g.entries) {
      json item = {{"seq", e->seq},
                   {"action", to_string(e->action)},
                   {"rationale", e->rationale},
                   {"config_digest", e->config_digest},
                   {"verdict", e->verdict ? json(to_string(*e->verdict)) : json(nullptr)},
                   {"metrics", e->metrics ? json(*e->metrics) : json(nullptr)}};
      if (e->verdict == Verdict::Rejected) {
        const std::string reverted = payload_string(*e, "incumbent_after");
        if (!reverted.empty()) item["reverted_to"] = reverted;
      }
      items.push_back(std::move(item));
    }
    iterations.push_back({{"candidate_id", g.candidate_id}, {"iteration", g.iteration}, {"entries", std::move(items)}});
  }
  json accepted = json::array();
  for (const auto& e : entries) {
    if (e.action == ActionKind::Logging && e.verdict == Verdict::Accepted) {
      json loss = nullptr;
      if (e.payload.is_object() && e.payload.contains("primary_loss")) loss = e.payload["primary_loss"];
      accepted.push_back({{"seq", e.seq},
                          {"candidate_id", e.candidate_id},
                          {"iteration", e.iteration},
                          {"config_digest", e.config_digest},
                          {"primary_loss", loss}});
    }
  }
  return {{"entries", entries.size()}, {"head_hash", head}, {"iterations", iterations}, {"accepted", accepted}};
}

}  // namespace

std::string export_report(const std::vector<LogEntry>& entries, ReportFormat format) {
  std::vector<std::string> lines;
  lines.reserve(entries.size());
  for (const auto& e : entries) lines.push_back(canonical_json(to_json(e)));
  ChainVerdict v = verify_lines(lines);
  if (!v.ok) {
    throw Error(ErrorCode::ChainInvalid, "entry " + std::to_string(*v.first_bad_seq) + ": " + v.reason);
  }
  if (format == ReportFormat::Markdown) return markdown_report(entries, v.head_hash);
  return json_report(entries, v.head_hash).dump(2) + "\n";
}

std::string export_report(const std::filesystem::path& file, ReportFormat format) {
  ChainVerdict v = verify_chain(file);
  if (!v.ok) throw Error(ErrorCode::ChainInvalid, "entry " + std::to_string(*v.first_bad_seq) + ": " + v.reason);
  return export_report(read_log(file), format);
}

}  // namespace tsflow
