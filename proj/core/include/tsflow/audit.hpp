#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

enum class ActionKind { Model, Refinement, FineTune, Logging, DebugAttempt, PhaseMarker };

std::string_view to_string(ActionKind action) noexcept;
ActionKind parse_action_kind(std::string_view text);

enum class Verdict { Accepted, Rejected, NotApplicable };

std::string_view to_string(Verdict verdict) noexcept;
Verdict parse_verdict(std::string_view text);

/// What a producer supplies; the log fills in seq, timestamp and the hashes.
struct EntryFields {
  std::int64_t iteration = 0;
  std::string candidate_id;
  ActionKind action = ActionKind::PhaseMarker;
  nlohmann::json payload = nlohmann::json::object();
  std::string rationale;
  std::string config_digest;
  std::optional<std::map<std::string, double>> metrics;
  std::optional<Verdict> verdict;
};

struct LogEntry : EntryFields {
  std::uint64_t seq = 0;
  std::string timestamp;
  std::string prev_hash;
  std::string entry_hash;
};

/// Every field except entry_hash.
nlohmann::json hashed_body(const LogEntry& entry);
nlohmann::json to_json(const LogEntry& entry);
/// Throws Error(SchemaViolation) on missing or mistyped fields.
LogEntry entry_from_json(const nlohmann::json& doc);

/// SHA-256 over prev_hash followed by the canonical body.
std::string compute_entry_hash(const LogEntry& entry);

/// Append-only, hash-chained log. Appends are serialized under a mutex, so the
/// sequence is a total order even with concurrent producers. With a file
/// attached, each entry is written as one canonical JSON line and flushed
/// before append returns.
class AuditLog {
 public:
  using Clock = std::function<std::string()>;

  /// In-memory only.
  AuditLog();
  /// Creates (truncating) `file`.
  explicit AuditLog(const std::filesystem::path& file);
  ~AuditLog();

  AuditLog(const AuditLog&) = delete;
  AuditLog& operator=(const AuditLog&) = delete;

  struct Appended {
    std::uint64_t seq = 0;
    std::string entry_hash;
  };

  /// Throws LogClosed after close(), IoFailure when the write fails.
  Appended append(EntryFields fields);
  LogEntry append_entry(EntryFields fields);
  void close();
  bool is_open() const;

  std::vector<LogEntry> snapshot() const;
  std::string head_hash() const;
  std::size_t size() const;

  /// Replaces the ISO-8601 timestamp source (tests pin it).
  void set_clock(Clock clock);

 private:
  mutable std::mutex mutex_;
  std::vector<LogEntry> entries_;
  std::FILE* file_ = nullptr;
  bool open_ = true;
  Clock clock_;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SS.mmmZ.
std::string utc_timestamp();

struct ChainVerdict {
  bool ok = true;
  std::optional<std::uint64_t> first_bad_seq;
  std::string reason;
  std::size_t entries = 0;
  std::string head_hash;
};

/// Checks every line: parseable, canonical, gapless seq, linked prev_hash and a
/// matching entry_hash. first_bad_seq is the position (== expected seq) of the
/// first failing line.
ChainVerdict verify_lines(const std::vector<std::string>& lines);
/// Verifies a segment whose first line should carry `first_seq` and link to `prev_hash`.
ChainVerdict verify_lines(const std::vector<std::string>& lines, std::uint64_t first_seq, std::string prev_hash);
ChainVerdict verify_chain(const std::filesystem::path& file);

/// Reads and parses an audit file without verifying it.
std::vector<LogEntry> read_log(const std::filesystem::path& file);

struct BestSoFar {
  std::string config_digest;
  double primary_loss = 0.0;
};

/// One search loop's view of the log: its own entries and script states.
class Memory {
 public:
  explicit Memory(std::string candidate_id = {}) : candidate_id_(std::move(candidate_id)) {}

  const std::string& candidate_id() const noexcept { return candidate_id_; }
  const std::vector<LogEntry>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& script_states() const noexcept { return script_states_; }
  const std::optional<BestSoFar>& best_so_far() const noexcept { return best_; }

  void add(const LogEntry& entry);
  void push_state(std::string config_digest);
  /// Keeps the lower of the current best and (digest, loss).
  void offer_best(const std::string& config_digest, double primary_loss);

 private:
  std::string candidate_id_;
  std::vector<LogEntry> entries_;
  std::vector<std::string> script_states_;
  std::optional<BestSoFar> best_;
};

/// One line per entry: seq, action, verdict, primary loss, metrics, first rationale line.
std::string render_memory_entry(const LogEntry& entry);

/// Best-so-far block, then entries newest-first while they fit in `char_budget`.
/// Throws BudgetImpossible when the best-so-far block alone does not fit.
std::string digest_for_context(const Memory& memory, std::size_t char_budget);

enum class ReportFormat { Markdown, Json };

ReportFormat parse_report_format(std::string_view text);

/// Human-readable chronology of a verified log. Throws ChainInvalid.
std::string export_report(const std::filesystem::path& file, ReportFormat format);
std::string export_report(const std::vector<LogEntry>& entries, ReportFormat format);

}  // namespace tsflow
