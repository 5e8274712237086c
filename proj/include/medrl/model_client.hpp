#pragma once

// Completion clients used by the evaluation harness and as judges.

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medrl/http_chat.hpp"

namespace medrl::eval {

class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Transcript {
  std::string item_id;
  std::string prompt;
  std::string response;
  double latency_ms = 0.0;
  std::string error;  // non-empty when the client failed
  bool ok() const { return error.empty(); }
};

nlohmann::json to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);
std::vector<Transcript> read_transcripts(const std::string& path);
void write_transcripts(const std::string& path, const std::vector<Transcript>& ts);

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  // Throws ClientError (or any std::exception) on failure. Must be safe to
  // call concurrently.
  virtual std::string complete(const std::string& prompt, double temperature) = 0;
  virtual std::string name() const = 0;
};

class HttpChatClient : public ModelClient {
 public:
  explicit HttpChatClient(ChatEndpoint endpoint);
  std::string complete(const std::string& prompt, double temperature) override;
  std::string name() const override { return "http"; }

 private:
  ChatHttp http_;
};

// Answers from saved transcripts keyed by prompt. A prompt recorded as failed
// fails again; an unknown prompt throws ClientError.
class ReplayClient : public ModelClient {
 public:
  explicit ReplayClient(const std::vector<Transcript>& transcripts);
  static ReplayClient load(const std::string& path);
  std::string complete(const std::string& prompt, double temperature) override;
  std::string name() const override { return "replay"; }

 private:
  std::map<std::string, Transcript> by_prompt_;
};

// Fixed prompt -> response table; used as the gold-echo mock.
class TableClient : public ModelClient {
 public:
  explicit TableClient(std::map<std::string, std::string> table, std::string label = "mock")
      : table_(std::move(table)), label_(std::move(label)) {}
  std::string complete(const std::string& prompt, double temperature) override;
  std::string name() const override { return label_; }

 private:
  std::map<std::string, std::string> table_;
  std::string label_;
};

// Wraps a callable; handy for judge stubs and failure injection.
class FnClient : public ModelClient {
 public:
  using Fn = std::function<std::string(const std::string&, double)>;
  explicit FnClient(Fn fn, std::string label = "fn") : fn_(std::move(fn)), label_(std::move(label)) {}
  std::string complete(const std::string& prompt, double temperature) override {
    return fn_(prompt, temperature);
  }
  std::string name() const override { return label_; }

 private:
  Fn fn_;
  std::string label_;
};

}  // namespace medrl::eval
