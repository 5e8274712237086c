#include "medrl/model_client.hpp"

#include "medrl/common.hpp"
#include "medrl/json_io.hpp"

namespace medrl::eval {

using nlohmann::json;

json to_json(const Transcript& t) {
  json j = {{"item_id", t.item_id}, {"prompt", t.prompt}, {"response", t.response},
            {"latency_ms", t.latency_ms}};
  if (!t.ok()) j["error"] = t.error;
  return j;
}

Transcript transcript_from_json(const json& j) {
  reject_unknown_keys(j, {"item_id", "prompt", "response", "latency_ms", "error"}, "transcript");
  Transcript t;
  t.item_id = j.at("item_id").get<std::string>();
  t.prompt = j.at("prompt").get<std::string>();
  t.response = j.value("response", std::string());
  t.latency_ms = j.value("latency_ms", 0.0);
  t.error = j.value("error", std::string());
  return t;
}

std::vector<Transcript> read_transcripts(const std::string& path) {
  std::vector<Transcript> out;
  for (const auto& line : read_jsonl(path)) {
    if (!line.error.empty()) {
      throw std::invalid_argument(path + ":" + std::to_string(line.line_no) + ": " + line.error);
    }
    out.push_back(transcript_from_json(line.value));
  }
  return out;
}

void write_transcripts(const std::string& path, const std::vector<Transcript>& ts) {
  std::vector<json> rows;
  rows.reserve(ts.size());
  for (const auto& t : ts) rows.push_back(to_json(t));
  write_file(path, to_jsonl(rows));
}

HttpChatClient::HttpChatClient(ChatEndpoint endpoint) : http_(std::move(endpoint)) {}

std::string HttpChatClient::complete(const std::string& prompt, double temperature) {
  try {
    return http_.complete(prompt, temperature);
  } catch (const ChatError& e) {
    throw ClientError(e.what());
  }
}

ReplayClient::ReplayClient(const std::vector<Transcript>& transcripts) {
  for (const auto& t : transcripts) by_prompt_[t.prompt] = t;
}

ReplayClient ReplayClient::load(const std::string& path) { return ReplayClient(read_transcripts(path)); }

std::string ReplayClient::complete(const std::string& prompt, double) {
  auto it = by_prompt_.find(prompt);
  if (it == by_prompt_.end()) throw ClientError("replay: no transcript for prompt");
  if (!it->second.ok()) throw ClientError("replay: recorded failure: " + it->second.error);
  return it->second.response;
}

std::string TableClient::complete(const std::string& prompt, double) {
  auto it = table_.find(prompt);
  if (it == table_.end()) throw ClientError(label_ + ": unknown prompt");
  return it->second;
}

}  // namespace medrl::eval
