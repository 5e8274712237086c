#include "medrl/model_scorer.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <regex>
#include <thread>

#include "medrl/common.hpp"

namespace medrl {

using nlohmann::json;

ChatHttp::ChatHttp(ChatEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.base_url.empty()) throw std::invalid_argument("chat endpoint needs a base_url");
  if (endpoint_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (!endpoint_.api_key_env.empty()) {
    if (const char* tok = std::getenv(endpoint_.api_key_env.c_str())) auth_token_ = tok;
  }
  in_flight_ = std::make_unique<std::counting_semaphore<>>(endpoint_.max_in_flight);
}

ChatHttp::~ChatHttp() = default;

std::string ChatHttp::post_once(const std::string& body) const {
  httplib::Client cli(endpoint_.base_url);
  const auto ms = std::chrono::milliseconds(endpoint_.timeout_ms);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(ms).count(),
                             static_cast<long>((ms.count() % 1000) * 1000));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(ms).count(),
                       static_cast<long>((ms.count() % 1000) * 1000));
  httplib::Headers headers;
  if (!auth_token_.empty()) headers.emplace("Authorization", "Bearer " + auth_token_);

  auto res = cli.Post(endpoint_.path, headers, body, "application/json");
  if (!res) throw ChatError("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw ChatError("HTTP status " + std::to_string(res->status));

  const json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw ChatError("response is not JSON");
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw ChatError("response lacks choices[0].message.content");
  }
}

std::string ChatHttp::complete(const std::string& user_message, double temperature) const {
  json body = {
      {"model", endpoint_.model},
      {"messages", json::array({{{"role", "user"}, {"content", user_message}}})},
      {"temperature", temperature},
  };
  const std::string payload = body.dump();

  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<>* s;
    ~Release() { s->release(); }
  } release{in_flight_.get()};

  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    try {
      return post_once(payload);
    } catch (const ChatError& e) {
      last_error = e.what();
    }
    if (attempt < endpoint_.max_retries) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << attempt));
    }
  }
  throw ChatError("chat completion failed after " + std::to_string(endpoint_.max_retries + 1) +
                  " attempts: " + last_error);
}

double scale_score(double raw) {
  if (!std::isfinite(raw) || raw < 0.0) throw ScorerError("score out of range");
  if (raw <= 1.0) return raw;
  if (raw <= 100.0) return raw / 100.0;
  throw ScorerError("score out of range");
}

double extract_score(std::string_view text, const std::string& pattern) {
  const std::regex re(pattern);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, re) || m.size() < 2) {
    throw ScorerError("no score found in scorer output");
  }
  return scale_score(std::stod(m[1].str()));
}

std::string fill_scorer_prompt(const std::string& tmpl, std::string_view prompt,
                               std::string_view response, const GoldLabel& gold) {
  std::string out;
  out.reserve(tmpl.size() + prompt.size() + response.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    auto try_slot = [&](std::string_view slot, std::string_view value) {
      if (tmpl.compare(i, slot.size(), slot) != 0) return false;
      out += value;
      i += slot.size();
      return true;
    };
    if (try_slot("{prompt}", prompt) || try_slot("{response}", response) ||
        try_slot("{gold}", describe_gold(gold))) {
      continue;
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

HttpModelScorer::HttpModelScorer(HttpScorerConfig config)
    : config_(std::move(config)), http_(config_.endpoint) {
  std::regex probe(config_.score_regex);  // fail fast on a bad pattern
  (void)probe;
}

double HttpModelScorer::score(std::string_view prompt, std::string_view response,
                              const GoldLabel& gold) {
  std::string reply;
  try {
    reply = http_.complete(fill_scorer_prompt(config_.prompt_template, prompt, response, gold),
                           config_.temperature);
  } catch (const ChatError& e) {
    throw ScorerError(e.what());
  }
  return extract_score(reply, config_.score_regex);
}

}  // namespace medrl
