#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>

#include <spdlog/logger.h>

#include "json.hpp"
#include "mctsr/policy.hpp"

namespace mctsr {

struct ClientConfig {
  // Everything before "/chat/completions", e.g. "http://localhost:8000/v1".
  std::string base_url = "http://localhost:8000/v1";
  // Name of the environment variable holding the API key. Empty means the
  // server is unauthenticated and no Authorization header is sent.
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model_name = "llama3-8b-instruct";
  double temperature = 0.8;
  double grade_temperature = 1.0;
  int max_tokens = 2048;
  int timeout_seconds = 120;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_in_flight = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const ClientConfig& config);
void from_json(const nlohmann::json& j, ClientConfig& config);

struct SamplingOverrides {
  std::optional<double> temperature;
  std::optional<int> max_tokens;
};

// Client for the chat-completion wire protocol. Safe for concurrent use; at
// most max_in_flight requests are outstanding at once.
//
// Connection failures, HTTP 5xx and HTTP 429 are retried up to max_retries
// times after a full-jitter delay drawn from [0, backoff_base_ms * 2^attempt];
// exhaustion raises TransportError. Other 4xx statuses raise RequestError on
// the first response. A 2xx body without choices[0].message.content raises
// ProtocolError.
class ChatClient {
 public:
  static constexpr std::ptrdiff_t kMaxInFlightLimit = 1024;

  // Resolves the API key from the environment now. Throws ConfigError for a
  // malformed base_url or a named key variable that is unset.
  explicit ChatClient(ClientConfig config, std::shared_ptr<spdlog::logger> logger = nullptr);

  ChatClient(const ChatClient&) = delete;
  ChatClient& operator=(const ChatClient&) = delete;

  std::string complete(const Conversation& messages, const SamplingOverrides& overrides = {});

  // Body sent for `messages`: exactly model, messages, temperature and
  // max_tokens.
  nlohmann::json request_body(const Conversation& messages,
                              const SamplingOverrides& overrides = {}) const;

  const ClientConfig& config() const { return config_; }
  // Full URL requests are posted to.
  std::string endpoint() const { return origin_ + path_; }

 private:
  std::string redact(std::string text) const;
  int backoff_delay_ms(int attempt);

  ClientConfig config_;
  std::shared_ptr<spdlog::logger> logger_;
  std::string origin_;
  std::string path_;
  std::string api_key_;
  std::counting_semaphore<kMaxInFlightLimit> in_flight_;
  std::mutex jitter_mutex_;
  std::mt19937_64 jitter_rng_;
};

// One-shot convenience over a temporary ChatClient.
std::string complete(const Conversation& messages, const ClientConfig& config,
                     const SamplingOverrides& overrides = {});

// Policy backed by a chat-completion endpoint. grade re-asks up to
// `grade_reasks` times when the reply has no parseable score, then throws
// PolicyError.
class LivePolicy final : public Policy {
 public:
  LivePolicy(std::shared_ptr<ChatClient> client, PromptBundle bundle, int grade_reasks = 2);

  std::string draft(std::string_view problem) override;
  std::string critique(std::string_view problem, std::string_view answer) override;
  std::string rewrite(std::string_view problem, std::string_view answer,
                      std::string_view feedback) override;
  int grade(std::string_view problem, std::string_view answer) override;

 private:
  std::shared_ptr<ChatClient> client_;
  PromptBundle bundle_;
  int grade_reasks_;
};

std::unique_ptr<LivePolicy> live_policy(const ClientConfig& config, PromptBundle bundle);

}  // namespace mctsr
