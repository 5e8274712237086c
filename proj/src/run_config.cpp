#include "medrl/run_config.hpp"

#include <set>
#include <stdexcept>

#include "medrl/common.hpp"
#include "medrl/ratio_optimizer.hpp"

namespace medrl {

using nlohmann::json;

namespace {

// Reads optional fields from one JSON object and rejects keys never asked for.
class Fields {
 public:
  Fields(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw std::invalid_argument(ctx_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument(ctx_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return ctx_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw std::invalid_argument(ctx_ + ": unknown key \"" + it.key() + "\"");
    }
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

void read_endpoint(const json& j, const std::string& ctx, ChatEndpoint& e) {
  Fields f(j, ctx);
  f.read("base_url", e.base_url);
  f.read("path", e.path);
  f.read("model", e.model);
  f.read("api_key_env", e.api_key_env);
  f.read("timeout_ms", e.timeout_ms);
  f.read("max_retries", e.max_retries);
  f.read("max_in_flight", e.max_in_flight);
  f.finish();
}

json endpoint_json(const ChatEndpoint& e) {
  return {{"base_url", e.base_url},       {"path", e.path},
          {"model", e.model},             {"api_key_env", e.api_key_env},
          {"timeout_ms", e.timeout_ms},   {"max_retries", e.max_retries},
          {"max_in_flight", e.max_in_flight}};
}

void read_client(const json& j, const std::string& ctx, ClientSettings& c) {
  Fields f(j, ctx);
  f.read("kind", c.kind);
  f.read("transcripts", c.transcripts);
  if (const json* e = f.child("endpoint")) read_endpoint(*e, f.path("endpoint"), c.endpoint);
  f.finish();
}

json client_json(const ClientSettings& c) {
  return {{"kind", c.kind}, {"transcripts", c.transcripts}, {"endpoint", endpoint_json(c.endpoint)}};
}

}  // namespace

int RunConfig::workers() const { return parallelism > 0 ? parallelism : default_parallelism(); }

void RunConfig::validate() const {
  if (parallelism < 0) throw std::invalid_argument("parallelism must be >= 0");
  train.validate();
  if (!(verifier.format_weight >= 0.0 && verifier.format_weight <= 1.0)) {
    throw std::invalid_argument("verifier.format_weight must be in [0,1]");
  }
  if (verifier.scorer_samples < 1) throw std::invalid_argument("verifier.scorer_samples must be >= 1");
  if (scorer.enabled && scorer.http.endpoint.base_url.empty()) {
    throw std::invalid_argument("scorer.endpoint.base_url is required when the scorer is enabled");
  }
  if (reward_model.bt.lr <= 0.0 || reward_model.bt.epochs < 0 || reward_model.bt.l2 < 0.0) {
    throw std::invalid_argument("reward_model: lr > 0, epochs >= 0, l2 >= 0 required");
  }
  if (reward_model.tau < 0.0) throw std::invalid_argument("reward_model.tau must be >= 0");
  if (bo.tasks < 1) throw std::invalid_argument("bo.tasks must be >= 1");
  if (bo.init_n < 2 || bo.budget < bo.init_n) throw std::invalid_argument("bo: need budget >= init_n >= 2");
  if (bo.n_candidates < 1) throw std::invalid_argument("bo.n_candidates must be >= 1");
  if (bo.objective != "synthetic" && bo.objective != "train") {
    throw std::invalid_argument("bo.objective must be synthetic or train");
  }
  if (bo.target.size() != bo.tasks || !bo::on_simplex(bo.target)) {
    throw std::invalid_argument("bo.target must be a point on the simplex with bo.tasks entries");
  }
  if (!bo.weights.empty() && (bo.weights.size() != bo.tasks || !bo::on_simplex(bo.weights))) {
    throw std::invalid_argument("bo.weights must be empty or a simplex point with bo.tasks entries");
  }
  if (bo.objective == "train" && bo.tasks != kAllTaskKinds.size()) {
    throw std::invalid_argument("bo.objective=train mixes the four task kinds; set bo.tasks to 4");
  }
  if (bo.mixture_size < 8 || bo.mixture_epochs < 1) {
    throw std::invalid_argument("bo.mixture_size >= 8 and bo.mixture_epochs >= 1 required");
  }
  if (!(eval.temperature >= 0.0)) throw std::invalid_argument("eval.temperature must be >= 0");
  if (eval.cap < 1) throw std::invalid_argument("eval.cap must be >= 1");
  for (const auto* c : {&eval.client, &eval.judge}) {
    if (c->kind != "http" && c->kind != "replay" && c->kind != "mock") {
      throw std::invalid_argument("eval client kind must be http, replay or mock");
    }
    if (c->kind == "http" && c->endpoint.base_url.empty()) {
      throw std::invalid_argument("http eval client needs endpoint.base_url");
    }
  }
  if (eval.judge.kind == "replay") throw std::invalid_argument("eval.judge cannot be a replay client");
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c = default_run_config();
  Fields top(j, "config");
  top.read("seed", c.seed);
  top.read("parallelism", c.parallelism);

  if (const json* p = top.child("paths")) {
    Fields f(*p, "config.paths");
    f.read("dataset", c.paths.dataset);
    f.read("heldout", c.paths.heldout);
    f.read("templates", c.paths.templates);
    f.read("triples", c.paths.triples);
    f.read("synonyms", c.paths.synonyms);
    f.read("output_dir", c.paths.output_dir);
    f.finish();
  }
  if (const json* t = top.child("train")) {
    Fields f(*t, "config.train");
    auto& tc = c.train;
    f.read("group_size", tc.group_size);
    f.read("kl_coef", tc.kl_coef);
    f.read("clip_eps", tc.clip_eps);
    f.read("lr", tc.lr);
    f.read("epochs", tc.epochs);
    f.read("batch_size", tc.batch_size);
    f.read("inner_steps", tc.inner_steps);
    f.read("backtracking", tc.backtracking);
    f.read("dynamic_resampling", tc.dynamic_resampling);
    f.read("resample_threshold", tc.resample_threshold);
    f.read("max_skip_epochs", tc.max_skip_epochs);
    f.read("dpo_beta", tc.dpo_beta);
    f.read("ref_refresh_epochs", tc.ref_refresh_epochs);
    f.read("temperature", tc.temperature);
    f.finish();
  }
  if (const json* v = top.child("verifier")) {
    Fields f(*v, "config.verifier");
    f.read("format_weight", c.verifier.format_weight);
    f.read("scorer_samples", c.verifier.scorer_samples);
    f.read("multi_response_partial_credit", c.verifier.multi_response_partial_credit);
    f.finish();
  }
  if (const json* s = top.child("scorer")) {
    Fields f(*s, "config.scorer");
    f.read("enabled", c.scorer.enabled);
    f.read("temperature", c.scorer.http.temperature);
    f.read("prompt_template", c.scorer.http.prompt_template);
    f.read("score_regex", c.scorer.http.score_regex);
    if (const json* e = f.child("endpoint")) read_endpoint(*e, "config.scorer.endpoint", c.scorer.http.endpoint);
    f.finish();
  }
  if (const json* r = top.child("reward_model")) {
    Fields f(*r, "config.reward_model");
    f.read("lr", c.reward_model.bt.lr);
    f.read("epochs", c.reward_model.bt.epochs);
    f.read("l2", c.reward_model.bt.l2);
    f.read("tau", c.reward_model.tau);
    f.read("length_warn", c.reward_model.length_warn);
    f.finish();
  }
  if (const json* b = top.child("bo")) {
    Fields f(*b, "config.bo");
    f.read("tasks", c.bo.tasks);
    f.read("budget", c.bo.budget);
    f.read("init_n", c.bo.init_n);
    f.read("n_candidates", c.bo.n_candidates);
    f.read("objective", c.bo.objective);
    f.read("target", c.bo.target);
    f.read("weights", c.bo.weights);
    f.read("mixture_size", c.bo.mixture_size);
    f.read("mixture_epochs", c.bo.mixture_epochs);
    f.finish();
  }
  if (const json* e = top.child("eval")) {
    Fields f(*e, "config.eval");
    f.read("temperature", c.eval.temperature);
    f.read("cap", c.eval.cap);
    f.read("leading_text", c.eval.leading_text);
    f.read("prompt_template", c.eval.prompt_template);
    if (const json* cl = f.child("client")) read_client(*cl, "config.eval.client", c.eval.client);
    if (const json* jd = f.child("judge")) read_client(*jd, "config.eval.judge", c.eval.judge);
    f.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

json to_json(const RunConfig& c) {
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"parallelism", c.parallelism},
      {"paths",
       {{"dataset", c.paths.dataset},
        {"heldout", c.paths.heldout},
        {"templates", c.paths.templates},
        {"triples", c.paths.triples},
        {"synonyms", c.paths.synonyms},
        {"output_dir", c.paths.output_dir}}},
      {"train",
       {{"group_size", t.group_size},
        {"kl_coef", t.kl_coef},
        {"clip_eps", t.clip_eps},
        {"lr", t.lr},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"inner_steps", t.inner_steps},
        {"backtracking", t.backtracking},
        {"dynamic_resampling", t.dynamic_resampling},
        {"resample_threshold", t.resample_threshold},
        {"max_skip_epochs", t.max_skip_epochs},
        {"dpo_beta", t.dpo_beta},
        {"ref_refresh_epochs", t.ref_refresh_epochs},
        {"temperature", t.temperature}}},
      {"verifier",
       {{"format_weight", c.verifier.format_weight},
        {"scorer_samples", c.verifier.scorer_samples},
        {"multi_response_partial_credit", c.verifier.multi_response_partial_credit}}},
      {"scorer",
       {{"enabled", c.scorer.enabled},
        {"temperature", c.scorer.http.temperature},
        {"prompt_template", c.scorer.http.prompt_template},
        {"score_regex", c.scorer.http.score_regex},
        {"endpoint", endpoint_json(c.scorer.http.endpoint)}}},
      {"reward_model",
       {{"lr", c.reward_model.bt.lr},
        {"epochs", c.reward_model.bt.epochs},
        {"l2", c.reward_model.bt.l2},
        {"tau", c.reward_model.tau},
        {"length_warn", c.reward_model.length_warn}}},
      {"bo",
       {{"tasks", c.bo.tasks},
        {"budget", c.bo.budget},
        {"init_n", c.bo.init_n},
        {"n_candidates", c.bo.n_candidates},
        {"objective", c.bo.objective},
        {"target", c.bo.target},
        {"weights", c.bo.weights},
        {"mixture_size", c.bo.mixture_size},
        {"mixture_epochs", c.bo.mixture_epochs}}},
      {"eval",
       {{"temperature", c.eval.temperature},
        {"cap", c.eval.cap},
        {"leading_text", c.eval.leading_text},
        {"prompt_template", c.eval.prompt_template},
        {"client", client_json(c.eval.client)},
        {"judge", client_json(c.eval.judge)}}}};
}

RunConfig default_run_config() {
  RunConfig c;
  c.train = rl::TrainConfig::stage2();
  c.train.seed = c.seed;
  return c;
}

}  // namespace medrl
