#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <stdexcept>
#include <string>

namespace medrl {

struct ChatEndpoint {
  std::string base_url;  // e.g. "http://127.0.0.1:8000"
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;  // name of the env var holding the bearer token
  int timeout_ms = 30000;
  int max_retries = 2;
  int max_in_flight = 4;
};

class ChatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Chat-completion caller shared by the model scorer and the eval client.
// Sends {model, messages:[{role,content}], temperature} and returns
// choices[0].message.content. Thread-safe; concurrent calls beyond
// max_in_flight block.
class ChatHttp {
 public:
  explicit ChatHttp(ChatEndpoint endpoint);
  ~ChatHttp();

  std::string complete(const std::string& user_message, double temperature) const;

  const ChatEndpoint& endpoint() const { return endpoint_; }

 private:
  std::string post_once(const std::string& body) const;

  ChatEndpoint endpoint_;
  std::string auth_token_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace medrl
