#pragma once

// Generic JSON-over-HTTP generation backend. One POST per call; the request
// body comes from a configured JSON template and the generated text is pulled
// out of the response with a JSON pointer.

#ifdef LAMPO_WITH_OPENSSL
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#endif

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "lampo/backend.hpp"
#include "lampo/error.hpp"

namespace lampo {

struct HttpConfig {
  std::string url;  // scheme://host[:port]/path
  // Values of the form ${NAME} are read from the environment at call time.
  std::map<std::string, std::string> headers;
  // Any string value containing {prompt} is substituted; a string equal to
  // "{max_tokens}" becomes the number.
  nlohmann::json body_template = {{"prompt", "{prompt}"}};
  std::string response_path = "/text";  // JSON pointer
  double timeout_seconds = 60.0;
  int max_retries = 4;
  double backoff_initial_seconds = 0.5;
  double backoff_max_seconds = 30.0;
  double rate_limit_per_second = 0.0;  // 0 = unlimited
  std::size_t max_parallel = 8;
  std::size_t context_limit_tokens = 0;
  // Greedy decoding: this top-level body key is forced to 0.
  std::string temperature_key = "temperature";
};

namespace detail {

inline std::string expand_env(const std::string& value) {
  if (value.size() > 3 && value.starts_with("${") && value.ends_with("}")) {
    const auto name = value.substr(2, value.size() - 3);
    const char* env = std::getenv(name.c_str());
    if (env == nullptr) throw ConfigError("environment variable " + name + " is not set");
    return env;
  }
  return value;
}

inline void substitute_body(nlohmann::json& node, const std::string& prompt, std::size_t max_tokens) {
  if (node.is_string()) {
    auto s = node.get<std::string>();
    if (s == "{max_tokens}") {
      node = max_tokens;
      return;
    }
    const std::string placeholder = "{prompt}";
    for (auto pos = s.find(placeholder); pos != std::string::npos;
         pos = s.find(placeholder, pos + prompt.size())) {
      s.replace(pos, placeholder.size(), prompt);
    }
    node = s;
  } else if (node.is_structured()) {
    for (auto& child : node) substitute_body(child, prompt, max_tokens);
  }
}

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig cfg) : cfg_(std::move(cfg)), url_(detail::split_url(cfg_.url)) {
    if (cfg_.max_parallel == 0) throw ConfigError("max_parallel must be >= 1");
    if (cfg_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  }

  std::string id() const override { return "http(" + cfg_.url + ")"; }
  std::size_t context_limit_tokens() const override { return cfg_.context_limit_tokens; }
  const HttpConfig& config() const noexcept { return cfg_; }

  nlohmann::json build_body(const GenerationRequest& request) const {
    auto body = cfg_.body_template;
    detail::substitute_body(body, request.prompt, request.max_tokens);
    if (body.is_object() && !cfg_.temperature_key.empty()) body[cfg_.temperature_key] = 0;
    return body;
  }

 protected:
  std::string do_generate(const GenerationRequest& request) override {
    const auto body = build_body(request).dump();
    httplib::Headers headers;
    for (const auto& [name, value] : cfg_.headers) headers.emplace(name, detail::expand_env(value));

    InFlightSlot slot(*this);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(backoff(attempt));
      wait_for_rate_limit();

      httplib::Client client(url_.origin);
      const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

      auto result = client.Post(url_.path, headers, body, "application/json");
      if (!result) {
        last_error = "connection error: " + httplib::to_string(result.error());
        continue;
      }
      if (result->status == 429 || result->status >= 500) {
        last_error = "HTTP " + std::to_string(result->status);
        continue;
      }
      if (result->status < 200 || result->status >= 300) {
        throw TransportError("HTTP " + std::to_string(result->status) + " from " + cfg_.url + ": " +
                             result->body.substr(0, 200));
      }
      return extract(result->body);
    }
    throw TransportError("giving up on " + cfg_.url + " after " +
                         std::to_string(cfg_.max_retries + 1) + " attempts (" + last_error + ")");
  }

 private:
  class InFlightSlot {
   public:
    explicit InFlightSlot(HttpBackend& owner) : owner_(owner) {
      std::unique_lock lock(owner_.slot_mutex_);
      owner_.slot_cv_.wait(lock, [&] { return owner_.in_flight_ < owner_.cfg_.max_parallel; });
      ++owner_.in_flight_;
    }
    ~InFlightSlot() {
      {
        std::lock_guard lock(owner_.slot_mutex_);
        --owner_.in_flight_;
      }
      owner_.slot_cv_.notify_one();
    }
    InFlightSlot(const InFlightSlot&) = delete;
    InFlightSlot& operator=(const InFlightSlot&) = delete;

   private:
    HttpBackend& owner_;
  };

  std::chrono::duration<double> backoff(int attempt) const {
    const double seconds = std::min(cfg_.backoff_max_seconds,
                                    cfg_.backoff_initial_seconds * static_cast<double>(1 << std::min(attempt - 1, 20)));
    return std::chrono::duration<double>(seconds);
  }

  void wait_for_rate_limit() {
    if (cfg_.rate_limit_per_second <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg_.rate_limit_per_second));
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(rate_mutex_);
      slot = std::max(std::chrono::steady_clock::now(), next_slot_);
      next_slot_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

  std::string extract(const std::string& body) const {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("response is not JSON: ") + e.what());
    }
    try {
      const auto& node = doc.at(nlohmann::json::json_pointer(cfg_.response_path));
      if (!node.is_string()) throw TransportError("response path " + cfg_.response_path + " is not a string");
      return node.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError("response path " + cfg_.response_path + " not found: " + e.what());
    }
  }

  HttpConfig cfg_;
  detail::SplitUrl url_;
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

}  // namespace lampo
