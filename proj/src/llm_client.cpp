#include "mctsr/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "mctsr/errors.hpp"

namespace mctsr {

namespace {

constexpr std::size_t kLoggedBodyLimit = 200;

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

void ClientConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) throw ConfigError(message);
  };
  require(!base_url.empty(), "base_url must be set");
  require(!model_name.empty(), "model_name must be set");
  require(temperature >= 0.0 && grade_temperature >= 0.0, "temperatures must be non-negative");
  require(max_tokens >= 1, "max_tokens must be positive");
  require(timeout_seconds >= 1, "timeout_seconds must be positive");
  require(max_retries >= 0 && max_retries <= 16, "max_retries must lie in [0, 16]");
  require(backoff_base_ms >= 1, "backoff_base_ms must be positive");
  require(max_in_flight >= 1 && max_in_flight <= ChatClient::kMaxInFlightLimit,
          "max_in_flight must lie in [1, 1024]");
}

void to_json(nlohmann::json& j, const ClientConfig& c) {
  j = nlohmann::json{{"base_url", c.base_url},
                     {"api_key_env", c.api_key_env},
                     {"model_name", c.model_name},
                     {"temperature", c.temperature},
                     {"grade_temperature", c.grade_temperature},
                     {"max_tokens", c.max_tokens},
                     {"timeout_seconds", c.timeout_seconds},
                     {"max_retries", c.max_retries},
                     {"backoff_base_ms", c.backoff_base_ms},
                     {"max_in_flight", c.max_in_flight}};
}

void from_json(const nlohmann::json& j, ClientConfig& c) {
  if (!j.is_object()) throw ConfigError("client config must be a JSON object");
  const nlohmann::json defaults = c;
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown client config key '" + key + "'");
  }
  try {
    c.base_url = j.value("base_url", c.base_url);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.model_name = j.value("model_name", c.model_name);
    c.temperature = j.value("temperature", c.temperature);
    c.grade_temperature = j.value("grade_temperature", c.grade_temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad client config: ") + e.what());
  }
}

ChatClient::ChatClient(ClientConfig config, std::shared_ptr<spdlog::logger> logger)
    : config_(std::move(config)),
      logger_(logger ? std::move(logger) : spdlog::default_logger()),
      in_flight_(1),
      jitter_rng_(std::random_device{}()) {
  config_.validate();
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, url_re)) {
    throw ConfigError("base_url must look like http(s)://host[:port][/prefix]");
  }
  origin_ = m[1].str();
  std::string prefix = m[2].str();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin_.starts_with("https://")) {
    throw ConfigError("this build has no TLS support; use an http:// base_url");
  }
#endif
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr) {
      throw ConfigError("environment variable " + config_.api_key_env +
                        " is not set (set api_key_env to \"\" for unauthenticated servers)");
    }
    api_key_ = key;
  }
  // The semaphore starts at one permit; hand out the rest.
  if (config_.max_in_flight > 1) in_flight_.release(config_.max_in_flight - 1);
}

nlohmann::json ChatClient::request_body(const Conversation& messages,
                                        const SamplingOverrides& overrides) const {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", config_.model_name},
          {"messages", std::move(msgs)},
          {"temperature", overrides.temperature.value_or(config_.temperature)},
          {"max_tokens", overrides.max_tokens.value_or(config_.max_tokens)}};
}

std::string ChatClient::redact(std::string text) const {
  if (api_key_.empty()) return text;
  for (std::size_t pos = text.find(api_key_); pos != std::string::npos;
       pos = text.find(api_key_, pos)) {
    text.replace(pos, api_key_.size(), "***");
  }
  return text;
}

int ChatClient::backoff_delay_ms(int attempt) {
  const long long ceiling = static_cast<long long>(config_.backoff_base_ms) << attempt;
  std::lock_guard lock(jitter_mutex_);
  return static_cast<int>(std::uniform_int_distribution<long long>(0, ceiling)(jitter_rng_));
}

std::string ChatClient::complete(const Conversation& messages, const SamplingOverrides& overrides) {
  const std::string body = request_body(messages, overrides).dump();
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<kMaxInFlightLimit>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};

  for (int attempt = 0;; ++attempt) {
    logger_->debug("POST {} model={} attempt={} auth={}", endpoint(), config_.model_name,
                   attempt + 1, api_key_.empty() ? "none" : "Bearer ***");
    httplib::Client http(origin_);
    http.set_connection_timeout(config_.timeout_seconds, 0);
    http.set_read_timeout(config_.timeout_seconds, 0);
    http.set_write_timeout(config_.timeout_seconds, 0);
    auto res = http.Post(path_, headers, body, "application/json");

    std::string failure;
    int status = 0;
    if (!res) {
      failure = "transport failure: " + httplib::to_string(res.error());
    } else {
      status = res->status;
      if (status >= 200 && status < 300) {
        nlohmann::json reply;
        try {
          reply = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception&) {
          throw ProtocolError("completion response is not JSON");
        }
        const auto* content = [&]() -> const nlohmann::json* {
          if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty()) {
            return nullptr;
          }
          const auto& first = reply["choices"][0];
          if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) return nullptr;
          const auto& message = first["message"];
          if (!message.contains("content") || !message["content"].is_string()) return nullptr;
          return &message["content"];
        }();
        if (content == nullptr) throw ProtocolError("completion response has no choices[0].message.content");
        logger_->debug("completion ok after {} attempt(s)", attempt + 1);
        return content->get<std::string>();
      }
      if (!retryable_status(status)) {
        const std::string snippet = redact(res->body.substr(0, kLoggedBodyLimit));
        logger_->warn("request rejected with HTTP {}: {}", status, snippet);
        throw RequestError("HTTP " + std::to_string(status) + ": " + snippet, status);
      }
      failure = "HTTP " + std::to_string(status);
    }

    if (attempt >= config_.max_retries) {
      logger_->error("giving up after {} attempt(s): {}", attempt + 1, failure);
      throw TransportError(failure + " after " + std::to_string(attempt + 1) + " attempt(s)", status);
    }
    const int delay = backoff_delay_ms(attempt);
    logger_->warn("{}; retrying in {} ms", failure, delay);
    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
  }
}

std::string complete(const Conversation& messages, const ClientConfig& config,
                     const SamplingOverrides& overrides) {
  ChatClient client(config);
  return client.complete(messages, overrides);
}

LivePolicy::LivePolicy(std::shared_ptr<ChatClient> client, PromptBundle bundle, int grade_reasks)
    : client_(std::move(client)), bundle_(std::move(bundle)), grade_reasks_(grade_reasks) {
  bundle_.validate();
}

std::string LivePolicy::draft(std::string_view problem) {
  return client_->complete(render_draft_prompt(problem, bundle_));
}

std::string LivePolicy::critique(std::string_view problem, std::string_view answer) {
  return client_->complete(render_feedback_prompt(problem, answer, bundle_));
}

std::string LivePolicy::rewrite(std::string_view problem, std::string_view answer,
                                std::string_view feedback) {
  return client_->complete(render_refine_prompt(problem, answer, feedback, bundle_));
}

int LivePolicy::grade(std::string_view problem, std::string_view answer) {
  const auto prompt = render_reward_prompt(problem, answer, bundle_);
  const SamplingOverrides grading{client_->config().grade_temperature, std::nullopt};
  std::string last_error;
  for (int attempt = 0; attempt <= grade_reasks_; ++attempt) {
    try {
      return parse_score(client_->complete(prompt, grading));
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw PolicyError("no parseable score after " + std::to_string(grade_reasks_ + 1) +
                    " attempt(s): " + last_error);
}

std::unique_ptr<LivePolicy> live_policy(const ClientConfig& config, PromptBundle bundle) {
  return std::make_unique<LivePolicy>(std::make_shared<ChatClient>(config), std::move(bundle));
}

}  // namespace mctsr
