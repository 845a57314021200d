#include "tsflow/llm_gateway.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <httplib.h>

#include <array>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace tsflow {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kModeNames = {"live", "record", "replay", "mock"};

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string{};
}

}  // namespace

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"messages", messages},
          {"params",
           {{"temperature", request.params.temperature},
            {"max_tokens", request.params.max_tokens},
            {"model_name", request.params.model_name}}}};
}

std::string ChatRequest::digest() const { return json_digest(to_json(*this)); }

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "chat request needs at least one message");
  for (const auto& m : messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw Error(ErrorCode::InvalidArgument, "unknown chat role '" + m.role + "'");
    }
  }
  if (params.temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (params.max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
}

json to_json(const TranscriptEntry& e) {
  json doc = {{"request_digest", e.request_digest}, {"response", e.response}, {"latency_ms", e.latency_ms}};
  if (e.prompt_tokens) doc["prompt_tokens"] = *e.prompt_tokens;
  if (e.completion_tokens) doc["completion_tokens"] = *e.completion_tokens;
  return doc;
}

TranscriptEntry transcript_entry_from_json(const json& doc) {
  TranscriptEntry e;
  try {
    e.request_digest = doc.at("request_digest").get<std::string>();
    e.response = doc.at("response").get<std::string>();
    e.latency_ms = doc.value("latency_ms", std::int64_t{0});
    if (doc.contains("prompt_tokens")) e.prompt_tokens = doc.at("prompt_tokens").get<std::int64_t>();
    if (doc.contains("completion_tokens")) e.completion_tokens = doc.at("completion_tokens").get<std::int64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, std::string("transcript entry: ") + ex.what());
  }
  return e;
}

std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot read transcript " + file.string());
  std::vector<TranscriptEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(ErrorCode::SchemaViolation, file.string() + " line " + std::to_string(line_no) + " is not JSON");
    }
    out.push_back(transcript_entry_from_json(doc));
  }
  return out;
}

std::string_view to_string(GatewayMode mode) noexcept { return kModeNames[static_cast<std::size_t>(mode)]; }

GatewayMode parse_gateway_mode(std::string_view text) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == text) return static_cast<GatewayMode>(i);
  }
  throw Error(ErrorCode::ConfigError, "unknown gateway mode '" + std::string(text) + "'");
}

RateLimiter::RateLimiter(double tokens_per_second, double burst)
    : rate_(tokens_per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_), last_(std::chrono::steady_clock::now()) {
  if (!(rate_ > 0.0)) throw Error(ErrorCode::ConfigError, "rate limit must be positive");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

void GatewayConfig::apply_env() {
  if (endpoint.empty()) endpoint = env_or_empty("LLM_ENDPOINT");
  if (api_key.empty()) api_key = env_or_empty("LLM_API_KEY");
  if (model_name.empty()) model_name = env_or_empty("LLM_MODEL");
}

ParsedUrl parse_url(std::string_view url) {
  ParsedUrl out;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw Error(ErrorCode::ConfigError, "endpoint must start with http:// or https://");
  out.scheme = std::string(url.substr(0, scheme_end));
  if (out.scheme != "http" && out.scheme != "https") throw Error(ErrorCode::ConfigError, "unsupported scheme " + out.scheme);
  std::string_view rest = url.substr(scheme_end + 3);
  const auto slash = rest.find('/');
  std::string_view authority = rest.substr(0, slash);
  out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    out.host = std::string(authority.substr(0, colon));
    out.port = std::stoi(std::string(authority.substr(colon + 1)));
  } else {
    out.host = std::string(authority);
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (out.host.empty()) throw Error(ErrorCode::ConfigError, "endpoint has no host");
  return out;
}

LlmGateway::LlmGateway(GatewayConfig config) : LlmGateway(std::move(config), MockScript{}) {}

LlmGateway::LlmGateway(GatewayConfig config, MockScript mock) : config_(std::move(config)), mock_(std::move(mock)) {
  if (config_.mode == GatewayMode::Live || config_.mode == GatewayMode::Record) {
    if (config_.endpoint.empty()) throw Error(ErrorCode::AuthMissing, "LLM endpoint is not configured (LLM_ENDPOINT)");
    if (config_.api_key.empty()) throw Error(ErrorCode::AuthMissing, "LLM credential is not configured (LLM_API_KEY)");
    parse_url(config_.endpoint);
  }
  if (config_.mode == GatewayMode::Record) {
    if (config_.transcript.empty()) throw Error(ErrorCode::ConfigError, "record mode needs a transcript path");
    std::ofstream touch(config_.transcript, std::ios::trunc);
    if (!touch) throw Error(ErrorCode::IoFailure, "cannot create transcript " + config_.transcript.string());
  }
  if (config_.mode == GatewayMode::Replay) {
    replay_entries_ = load_transcript(config_.transcript);
    for (std::size_t i = 0; i < replay_entries_.size(); ++i) replay_index_[replay_entries_[i].request_digest].push_back(i);
  }
  if (config_.rate_per_second) limiter_ = std::make_unique<RateLimiter>(*config_.rate_per_second, config_.rate_burst);
}

LlmGateway::~LlmGateway() = default;

void LlmGateway::sleep_for(std::chrono::milliseconds d) {
  if (config_.sleeper) {
    config_.sleeper(d);
  } else {
    std::this_thread::sleep_for(d);
  }
}

std::string LlmGateway::call_live(const ChatRequest& request, TranscriptEntry& meta) {
  const ParsedUrl url = parse_url(config_.endpoint);
  json body = {{"model", request.params.model_name.empty() ? config_.model_name : request.params.model_name},
               {"temperature", request.params.temperature},
               {"max_tokens", request.params.max_tokens},
               {"messages", json::array()}};
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string payload = body.dump();

  httplib::Client client(url.scheme + "://" + url.host + ":" + std::to_string(url.port));
  client.set_connection_timeout(config_.http_timeout);
  client.set_read_timeout(config_.http_timeout);
  client.set_write_timeout(config_.http_timeout);
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

  std::string last_error;
  const std::size_t attempts = config_.backoff.size() + 1;
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) sleep_for(config_.backoff[attempt - 1]);
    if (limiter_) limiter_->acquire();
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(url.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::BackendUnavailable, "LLM endpoint returned HTTP " + std::to_string(res->status));
    }
    json doc = json::parse(res->body, nullptr, false);
    try {
      std::string content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      meta.latency_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
      if (doc.contains("usage")) {
        const json& u = doc["usage"];
        if (u.contains("prompt_tokens")) meta.prompt_tokens = u["prompt_tokens"].get<std::int64_t>();
        if (u.contains("completion_tokens")) meta.completion_tokens = u["completion_tokens"].get<std::int64_t>();
      }
      return content;
    } catch (const json::exception&) {
      throw Error(ErrorCode::BackendUnavailable, "LLM endpoint returned an unexpected body");
    }
  }
  throw Error(ErrorCode::TransportExhausted, "LLM call failed after " + std::to_string(attempts) + " attempts: " + last_error);
}

std::string LlmGateway::replay(const std::string& digest) {
  std::lock_guard lock(mutex_);
  if (config_.strict_sequence) {
    if (replay_next_ >= replay_entries_.size() || replay_entries_[replay_next_].request_digest != digest) {
      throw Error(ErrorCode::ReplayMiss, digest);
    }
    return replay_entries_[replay_next_++].response;
  }
  auto it = replay_index_.find(digest);
  if (it == replay_index_.end()) throw Error(ErrorCode::ReplayMiss, digest);
  // Repeated identical requests get the recorded responses in order, then the last one again.
  std::size_t& cursor = replay_cursor_[digest];
  const std::size_t idx = it->second[std::min(cursor, it->second.size() - 1)];
  ++cursor;
  return replay_entries_[idx].response;
}

std::string LlmGateway::complete(const ChatRequest& request) {
  request.validate();
  const std::string digest = request.digest();
  switch (config_.mode) {
    case GatewayMode::Mock: {
      std::lock_guard lock(mutex_);
      auto it = mock_.by_digest.find(digest);
      if (it != mock_.by_digest.end()) return it->second;
      if (mock_.queue.empty()) throw Error(ErrorCode::BackendUnavailable, "mock gateway has no response for " + digest);
      std::string out = std::move(mock_.queue.front());
      mock_.queue.pop_front();
      return out;
    }
    case GatewayMode::Replay:
      return replay(digest);
    case GatewayMode::Live: {
      TranscriptEntry meta;
      return call_live(request, meta);
    }
    case GatewayMode::Record: {
      TranscriptEntry entry;
      entry.request_digest = digest;
      entry.response = call_live(request, entry);
      std::lock_guard lock(mutex_);
      std::ofstream out(config_.transcript, std::ios::app);
      out << to_json(entry).dump() << "\n";
      if (!out) throw Error(ErrorCode::IoFailure, "cannot append to transcript " + config_.transcript.string());
      return entry.response;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable gateway mode");
}

}  // namespace tsflow
