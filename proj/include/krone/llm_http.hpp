#pragma once

// Live client for one OpenAI-style chat-completion endpoint.
//
//   KRONE_LLM_BASE_URL  e.g. https://api.openai.com/v1 or http://127.0.0.1:8000/v1
//   KRONE_LLM_MODEL     model name sent in the request body
//   KRONE_LLM_API_KEY   bearer token (optional for local servers)
//   KRONE_LLM_AUDIT     when set, request/response bodies are written to stderr
//                       with the credential redacted

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "krone/llm.hpp"

namespace krone {

struct HttpLlmConfig {
  std::string base_url;
  std::string model;
  std::string api_key;
  bool audit = false;
  std::chrono::seconds timeout{60};

  static HttpLlmConfig from_env() {
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string();
    };
    HttpLlmConfig c;
    c.base_url = get("KRONE_LLM_BASE_URL");
    c.model = get("KRONE_LLM_MODEL");
    c.api_key = get("KRONE_LLM_API_KEY");
    c.audit = !get("KRONE_LLM_AUDIT").empty();
    return c;
  }
};

class HttpLlm final : public LlmClient {
 public:
  explicit HttpLlm(HttpLlmConfig cfg, std::ostream& audit_out = std::cerr)
      : cfg_(std::move(cfg)), audit_out_(audit_out) {
    if (cfg_.base_url.empty()) throw Error(ErrorCode::LlmUnavailable, "KRONE_LLM_BASE_URL is not set");
    if (cfg_.model.empty()) throw Error(ErrorCode::LlmUnavailable, "KRONE_LLM_MODEL is not set");
    // split "scheme://host[:port]/prefix"
    const auto scheme_end = cfg_.base_url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = cfg_.base_url.find('/', host_start);
    origin_ = cfg_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? std::string() : cfg_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

 protected:
  std::string do_complete(const LlmRequest& req) override {
    nlohmann::json body = {
        {"model", cfg_.model},
        {"temperature", 0},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", req.system_prompt}},
                                {{"role", "user"}, {"content", req.user_prompt}}})},
    };
    const std::string payload = body.dump();

    httplib::Client cli(origin_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(cfg_.timeout);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    audit("request", payload);
    auto res = cli.Post(prefix_ + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      throw Error(ErrorCode::LlmUnavailable, origin_ + ": " + httplib::to_string(res.error()));
    }
    audit("response", res->body);
    if (res->status != 200) {
      throw Error(ErrorCode::LlmUnavailable, "HTTP " + std::to_string(res->status));
    }
    try {
      auto doc = nlohmann::json::parse(res->body);
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::LlmUnavailable, std::string("malformed completion body: ") + e.what());
    }
  }

 private:
  void audit(std::string_view what, std::string text) {
    if (!cfg_.audit) return;
    if (!cfg_.api_key.empty()) {
      for (auto pos = text.find(cfg_.api_key); pos != std::string::npos; pos = text.find(cfg_.api_key, pos)) {
        text.replace(pos, cfg_.api_key.size(), "[REDACTED]");
      }
    }
    std::lock_guard lock(audit_mutex_);
    audit_out_ << "[llm " << what << "] " << text << "\n";
  }

  HttpLlmConfig cfg_;
  std::string origin_;
  std::string prefix_;
  std::ostream& audit_out_;
  std::mutex audit_mutex_;
};

}  // namespace krone
