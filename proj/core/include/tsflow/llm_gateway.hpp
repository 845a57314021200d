#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatParams {
  double temperature = 0.2;
  int max_tokens = 1024;
  std::string model_name;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  ChatParams params;

  /// SHA-256 over the canonical (messages, params) document.
  std::string digest() const;
  /// Throws InvalidArgument on an empty message list or unknown role.
  void validate() const;
};

nlohmann::json to_json(const ChatRequest& request);

struct TranscriptEntry {
  std::string request_digest;
  std::string response;
  std::int64_t latency_ms = 0;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
};

nlohmann::json to_json(const TranscriptEntry& entry);
TranscriptEntry transcript_entry_from_json(const nlohmann::json& doc);
std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& file);

enum class GatewayMode { Live, Record, Replay, Mock };

std::string_view to_string(GatewayMode mode) noexcept;
GatewayMode parse_gateway_mode(std::string_view text);

/// Token bucket shared by all callers of one gateway.
class RateLimiter {
 public:
  RateLimiter(double tokens_per_second, double burst);
  /// Blocks until a token is available.
  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct GatewayConfig {
  GatewayMode mode = GatewayMode::Mock;
  /// Full chat-completions URL, e.g. https://host/v1/chat/completions.
  std::string endpoint;
  std::string api_key;
  std::string model_name;
  std::filesystem::path transcript;
  /// Replay consumes the transcript strictly in order instead of by digest.
  bool strict_sequence = false;
  /// Waits before each retry of a failed live call.
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(1000), std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(4000)};
  std::chrono::seconds http_timeout{120};
  std::optional<double> rate_per_second;
  double rate_burst = 1.0;
  std::function<void(std::chrono::milliseconds)> sleeper;

  /// Fills endpoint, api_key and model_name from LLM_ENDPOINT, LLM_API_KEY, LLM_MODEL when unset.
  void apply_env();
};

/// Canned responses for mock mode: exact digest matches first, then the queue.
struct MockScript {
  std::map<std::string, std::string> by_digest;
  std::deque<std::string> queue;
};

class LlmGateway {
 public:
  explicit LlmGateway(GatewayConfig config);
  LlmGateway(GatewayConfig config, MockScript mock);
  ~LlmGateway();

  LlmGateway(const LlmGateway&) = delete;
  LlmGateway& operator=(const LlmGateway&) = delete;

  /// Safe for concurrent callers. Errors: TransportExhausted, ReplayMiss, AuthMissing,
  /// BackendUnavailable (non-retryable HTTP status or empty mock).
  std::string complete(const ChatRequest& request);

  GatewayMode mode() const noexcept { return config_.mode; }
  const std::string& model_name() const noexcept { return config_.model_name; }

 private:
  std::string call_live(const ChatRequest& request, TranscriptEntry& meta);
  std::string replay(const std::string& digest);
  void sleep_for(std::chrono::milliseconds d);

  GatewayConfig config_;
  MockScript mock_;
  std::mutex mutex_;
  std::vector<TranscriptEntry> replay_entries_;
  std::map<std::string, std::vector<std::size_t>> replay_index_;
  std::map<std::string, std::size_t> replay_cursor_;
  std::size_t replay_next_ = 0;
  std::unique_ptr<RateLimiter> limiter_;
};

/// Splits an http(s) URL into scheme+host+port and path.
struct ParsedUrl {
  std::string scheme;
  std::string host;
  int port = 0;
  std::string path;
};
ParsedUrl parse_url(std::string_view url);

}  // namespace tsflow
