// medrl: command-line entry point. Every command writes under the run
// directory (--out, default from the config) and never touches its inputs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "medrl/common.hpp"
#include "medrl/curriculum.hpp"
#include "medrl/data_pipeline.hpp"
#include "medrl/eval_harness.hpp"
#include "medrl/json_io.hpp"
#include "medrl/ratio_optimizer.hpp"
#include "medrl/reward_lab.hpp"
#include "medrl/rl_engine.hpp"
#include "medrl/run_config.hpp"
#include "medrl/workbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medrl;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string out;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? default_run_config() : load_run_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.parallelism) cfg.parallelism = *g.parallelism;
  if (!g.out.empty()) cfg.paths.output_dir = g.out;
  cfg.train.seed = cfg.seed;
  cfg.train.parallelism = cfg.workers();
  cfg.validate();
  return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& rel) {
  return (fs::path(cfg.paths.output_dir) / rel).string();
}

void save_config(const RunConfig& cfg) {
  write_file(out_path(cfg, "config.json"), to_json(cfg).dump(2) + "\n");
}

std::vector<rl::Sample> dataset_or_curriculum(const std::string& path, const RunConfig& cfg, bool heldout) {
  if (!path.empty()) return rl::load_dataset(path);
  return curriculum::planted_curriculum(heldout ? curriculum::heldout_config(cfg.seed)
                                                : curriculum::training_config(cfg.seed));
}

int cmd_verify(const RunConfig& cfg, const std::string& input, std::string output) {
  const Verifier verifier = workbench::make_verifier(cfg);
  const auto lines = read_jsonl(input);
  std::vector<json> rows(lines.size());
  parallel_for(lines.size(), cfg.workers(), [&](std::size_t i) {
    const auto& line = lines[i];
    json row = {{"line", line.line_no}};
    try {
      if (!line.error.empty()) throw std::invalid_argument(line.error);
      const json& v = line.value;
      if (!v.is_object()) throw std::invalid_argument("line is not a JSON object");
      reject_unknown_keys(v, {"id", "kind", "prompt", "response", "gold"}, "verify input");
      if (v.contains("id")) row["id"] = v.at("id");
      const TaskKind kind = task_kind_from_string(v.at("kind").get<std::string>());
      const GoldLabel gold = gold_from_json(kind, v.at("gold"));
      const auto b = verifier.score(v.value("prompt", std::string()), v.at("response").get<std::string>(), gold);
      row["kind"] = std::string(to_string(kind));
      row["reward"] = to_json(b);
    } catch (const std::exception& e) {
      row["error"] = e.what();
    }
    rows[i] = std::move(row);
  });
  if (output.empty()) output = out_path(cfg, "verify/scored.jsonl");
  write_file(output, to_jsonl(rows));
  std::size_t ok = 0, errors = 0, passing = 0;
  double sum = 0.0;
  for (const auto& r : rows) {
    if (r.contains("error")) {
      ++errors;
      continue;
    }
    ++ok;
    const double f = r.at("reward").at("final").get<double>();
    sum += f;
    passing += f >= rl::kPassReward ? 1 : 0;
  }
  std::cout << "scored " << ok << " lines, " << errors << " errors, " << passing << " passing, mean final "
            << fmt_double(ok ? sum / static_cast<double>(ok) : 0.0, 4) << "\n"
            << "wrote " << output << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& algo_name, const std::string& dataset_path,
              const std::string& heldout_path, std::optional<int> epochs, std::optional<int> stage) {
  const rl::Algo algo = rl::algo_from_string(algo_name);
  if (stage) {
    const auto keep_seed = cfg.train.seed;
    const int keep_par = cfg.train.parallelism;
    cfg.train = *stage == 1 ? rl::TrainConfig::stage1() : rl::TrainConfig::stage2();
    cfg.train.seed = keep_seed;
    cfg.train.parallelism = keep_par;
  }
  if (epochs) cfg.train.epochs = *epochs;
  cfg.train.validate();
  const auto train = dataset_or_curriculum(dataset_path.empty() ? cfg.paths.dataset : dataset_path, cfg, false);
  const std::string hp = heldout_path.empty() ? cfg.paths.heldout : heldout_path;
  const bool have_heldout = !hp.empty() || (dataset_path.empty() && cfg.paths.dataset.empty());
  const auto heldout = have_heldout ? dataset_or_curriculum(hp, cfg, true) : std::vector<rl::Sample>{};
  const Verifier verifier = workbench::make_verifier(cfg);
  const auto table = rl::RewardTable::build(train, verifier, cfg.workers());
  const auto res = rl::train(train, cfg.train, table, algo);

  const std::string dir = "train_" + std::string(rl::to_string(algo));
  save_config(cfg);
  write_file(out_path(cfg, dir + "/metrics.csv"), rl::metrics_csv(res));
  write_file(out_path(cfg, dir + "/policy.json"), to_json(res.policy).dump(2) + "\n");
  const auto ev = rl::evaluate_policy(res.policy, train, table);
  json summary = {{"algo", rl::to_string(algo)},
                  {"status", res.status},
                  {"epochs_run", res.epochs.size()},
                  {"total_rollouts", res.total_rollouts},
                  {"train_accuracy", ev.accuracy},
                  {"expected_reward", rl::expected_reward(res.policy, train, table)}};
  std::cout << rl::to_string(algo) << ": " << res.status << " after " << res.epochs.size()
            << " epochs, train accuracy " << fmt_double(ev.accuracy, 4);
  if (!heldout.empty()) {
    const auto held_table = rl::RewardTable::build(heldout, verifier, cfg.workers());
    const auto hev = rl::evaluate_policy(res.policy, heldout, held_table);
    summary["heldout_accuracy"] = hev.accuracy;
    std::cout << ", held-out accuracy " << fmt_double(hev.accuracy, 4);
  }
  std::cout << "\n";
  write_file(out_path(cfg, dir + "/summary.json"), summary.dump(2) + "\n");
  return 0;
}

int cmd_fit_rm(const RunConfig& cfg, const std::string& pairs_path, const std::string& eval_path) {
  auto load_pairs = [](const std::string& path) {
    std::vector<reward::PreferencePair> pairs;
    for (const auto& line : read_jsonl(path)) {
      if (!line.error.empty()) {
        throw std::invalid_argument(path + ":" + std::to_string(line.line_no) + ": " + line.error);
      }
      pairs.push_back(reward::pair_from_json(line.value));
    }
    return pairs;
  };
  const auto pairs = load_pairs(pairs_path);
  const auto fit = reward::fit_bradley_terry(pairs, cfg.reward_model.bt);
  save_config(cfg);
  write_file(out_path(cfg, "reward_model/params.json"), reward::to_json(fit.params).dump(2) + "\n");
  std::string csv = "epoch,log_likelihood,objective\n";
  for (std::size_t e = 0; e < fit.loglik_history.size(); ++e) {
    csv += std::to_string(e + 1) + ',' + fmt_double(fit.loglik_history[e], 9) + ',' +
           fmt_double(fit.objective_history[e], 9) + '\n';
  }
  write_file(out_path(cfg, "reward_model/fit.csv"), csv);
  std::cout << "fitted on " << pairs.size() << " pairs, log-likelihood " << fmt_double(fit.log_likelihood, 6)
            << (fit.degenerate ? " (degenerate: all pairs identical)" : "") << "\n";
  if (!eval_path.empty()) {
    const auto held = load_pairs(eval_path);
    std::size_t agree = 0;
    for (const auto& p : held) agree += reward::score(fit.params, p.chosen) > reward::score(fit.params, p.rejected);
    std::cout << "held-out pair accuracy "
              << fmt_double(held.empty() ? 0.0 : static_cast<double>(agree) / held.size(), 4) << " on "
              << held.size() << " pairs\n";
  }
  return 0;
}

int cmd_resample(const RunConfig& cfg, const std::string& dataset_path, const std::string& policy_path, int k) {
  const auto ds = dataset_or_curriculum(dataset_path.empty() ? cfg.paths.dataset : dataset_path, cfg, false);
  const rl::Policy policy = policy_path.empty()
                                ? rl::Policy::zeros(ds.empty() ? 0 : ds.front().candidates.front().features.size(),
                                                    cfg.train.temperature)
                                : rl::policy_from_json(json::parse(read_file(policy_path)));
  const auto table = rl::RewardTable::build(ds, workbench::make_verifier(cfg), cfg.workers());
  const auto res = rl::dynamic_resample(ds, policy, table, k, cfg.train.resample_threshold, cfg.seed, cfg.workers());
  std::string csv = "sample_id,passes,rollouts,pass_rate,retained\n";
  std::vector<bool> kept(ds.size(), false);
  for (std::size_t i : res.retained) kept[i] = true;
  for (const auto& s : res.stats) {
    csv += ds[s.sample_index].id + ',' + std::to_string(s.passes) + ',' + std::to_string(s.rollouts) + ',' +
           fmt_double(s.pass_rate(), 4) + ',' + (kept[s.sample_index] ? "1" : "0") + '\n';
  }
  std::vector<rl::Sample> retained;
  for (std::size_t i : res.retained) retained.push_back(ds[i]);
  save_config(cfg);
  write_file(out_path(cfg, "resample/pass_rates.csv"), csv);
  rl::save_dataset(out_path(cfg, "resample/retained.jsonl"), retained);
  std::cout << "retained " << res.retained.size() << " of " << ds.size() << " samples (" << res.removed
            << " mastered), " << res.rollouts_used << " rollouts\n";
  return 0;
}

int cmd_optimize(RunConfig cfg, std::optional<std::size_t> tasks, std::optional<std::size_t> budget,
                 const std::string& objective) {
  if (tasks) cfg.bo.tasks = *tasks;
  if (budget) cfg.bo.budget = *budget;
  if (!objective.empty()) cfg.bo.objective = objective;
  if (cfg.bo.objective == "synthetic" && cfg.bo.target.size() != cfg.bo.tasks) {
    cfg.bo.target.assign(cfg.bo.tasks, 1.0 / static_cast<double>(cfg.bo.tasks));
  }
  cfg.validate();
  bo::BoConfig bc;
  bc.tasks = cfg.bo.tasks;
  bc.budget = cfg.bo.budget;
  bc.init_n = cfg.bo.init_n;
  bc.n_candidates = cfg.bo.n_candidates;
  bc.seed = derive_seed(cfg.seed, "bo");
  bc.parallelism = cfg.workers();
  bo::Objective f;
  if (cfg.bo.objective == "train") {
    if (cfg.bo.tasks != kAllTaskKinds.size()) throw std::invalid_argument("train objective needs --tasks 4");
    f = workbench::train_objective(dataset_or_curriculum(cfg.paths.dataset, cfg, false),
                                   dataset_or_curriculum(cfg.paths.heldout, cfg, true), cfg);
  } else {
    f = workbench::synthetic_objective(cfg.bo.target);
  }
  const auto res = bo::optimize(f, bc);
  save_config(cfg);
  write_file(out_path(cfg, "bo/trace.csv"), bo::trace_csv(res));
  std::cout << "best y " << fmt_double(res.best.y, 6) << " at";
  for (double x : res.best.x) std::cout << ' ' << fmt_double(x, 4);
  std::cout << " after " << res.trace.size() << " evaluations (" << res.failures << " failed)\n";
  return 0;
}

data::TemplateSet templates_for(const RunConfig& cfg, const std::string& path) {
  const std::string p = path.empty() ? cfg.paths.templates : path;
  return p.empty() ? data::TemplateSet::builtin() : data::TemplateSet::load(p);
}

std::vector<data::SpoTriple> triples_for(const RunConfig& cfg, const std::string& path) {
  const std::string p = path.empty() ? cfg.paths.triples : path;
  if (p.empty()) return workbench::demo_triples();
  const auto tf = data::read_triples_tsv(p);
  for (const auto& e : tf.errors) std::cerr << p << ":" << e.line_no << ": " << e.message << "\n";
  return tf.triples;
}

int cmd_pipeline(const RunConfig& cfg, const std::string& mode, const std::string& triples_path,
                 const std::string& templates_path, const std::string& text_path) {
  const auto templates = templates_for(cfg, templates_path);
  save_config(cfg);
  if (mode == "translate") {
    const auto triples = triples_for(cfg, triples_path);
    std::string out;
    std::size_t done = 0;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      if (!templates.has(triples[i].predicate)) {
        std::cerr << "skipped [unknown_predicate] " << data::to_tsv(std::span(&triples[i], 1));
        continue;
      }
      const auto n = templates.spec(triples[i].predicate).templates.size();
      out += data::spo_to_text(triples[i], templates, derive_seed(cfg.seed, i) % n) + "\n";
      ++done;
    }
    write_file(out_path(cfg, "pipeline/sentences.txt"), out);
    std::cout << "translated " << done << " of " << triples.size() << " triples\n";
  } else if (mode == "filter") {
    const auto triples = triples_for(cfg, triples_path);
    const auto rt = data::roundtrip_filter(triples, templates);
    std::vector<json> acc, rej;
    for (const auto& a : rt.accepted) acc.push_back(data::to_json(a));
    for (const auto& r : rt.rejected) rej.push_back(data::to_json(r));
    write_file(out_path(cfg, "pipeline/sentences.jsonl"), to_jsonl(acc));
    write_file(out_path(cfg, "pipeline/rejected.jsonl"), to_jsonl(rej));
    std::cout << "accepted " << rt.accepted.size() << " sentences, rejected " << rt.rejected.size() << " triples\n";
    for (const auto& r : rt.rejected) {
      std::cout << "  rejected [" << r.reason << "] " << data::to_string(r.triple) << "\n";
    }
  } else if (mode == "extract") {
    if (text_path.empty()) throw std::invalid_argument("pipeline extract needs --text");
    const auto triples = data::extract_triples(read_file(text_path), templates);
    write_file(out_path(cfg, "pipeline/extracted.tsv"), data::to_tsv(triples));
    std::cout << "extracted " << triples.size() << " triples\n";
  } else {
    throw std::invalid_argument("unknown pipeline mode: " + mode);
  }
  return 0;
}

std::unique_ptr<eval::ModelClient> make_client(const ClientSettings& s, const std::string& kind) {
  if (kind == "http") return std::make_unique<eval::HttpChatClient>(s.endpoint);
  if (kind == "replay") {
    if (s.transcripts.empty()) throw std::invalid_argument("replay client needs a transcripts path");
    return std::make_unique<eval::ReplayClient>(eval::ReplayClient::load(s.transcripts));
  }
  throw std::invalid_argument("unknown client kind: " + kind);
}

int cmd_evaluate(RunConfig cfg, const std::string& adapter, const std::string& data_path, std::string client_kind,
                 std::optional<double> temperature, std::optional<std::size_t> cap, const std::string& subset,
                 const std::string& transcripts) {
  if (temperature) cfg.eval.temperature = *temperature;
  if (cap) cfg.eval.cap = *cap;
  if (client_kind.empty()) client_kind = cfg.eval.client.kind;
  if (!transcripts.empty()) cfg.eval.client.transcripts = transcripts;
  cfg.validate();
  const std::string name = fs::path(data_path).stem().string();
  const auto loaded = eval::load_benchmark(data_path, adapter, subset, name);
  for (const auto& e : loaded.errors) std::cerr << data_path << ":" << e.line_no << ": " << e.message << "\n";
  const auto items = eval::uniform_sample(loaded.items, cfg.eval.cap, cfg.seed);
  eval::PromptSpec ps;
  if (!cfg.eval.prompt_template.empty()) ps.tmpl = cfg.eval.prompt_template;
  ps.leading_text = cfg.eval.leading_text;

  std::unique_ptr<eval::ModelClient> client;
  if (client_kind == "mock") {
    client = std::make_unique<eval::TableClient>(eval::make_gold_echo(items, ps));
  } else {
    client = make_client(cfg.eval.client, client_kind);
  }
  std::unique_ptr<eval::ModelClient> judge;
  if (cfg.eval.judge.kind == "mock") {
    judge = workbench::make_overlap_judge();
  } else {
    judge = make_client(cfg.eval.judge, cfg.eval.judge.kind);
  }
  const auto ts = eval::run_eval(items, *client, ps, {cfg.eval.temperature, cfg.workers()});
  std::vector<eval::ItemScore> scores;
  for (std::size_t i = 0; i < items.size(); ++i) scores.push_back(eval::score_item(items[i], ts[i], judge.get()));
  const auto report = eval::aggregate_report(scores);
  save_config(cfg);
  eval::write_transcripts(out_path(cfg, "eval/transcripts.jsonl"), ts);
  write_file(out_path(cfg, "eval/report.md"), eval::render_markdown(report));
  write_file(out_path(cfg, "eval/report.csv"), eval::render_csv(report));
  write_file(out_path(cfg, "eval/items.csv"), eval::render_items_csv(report));
  std::cout << "evaluated " << report.items << " items (" << loaded.items.size() << " loaded, "
            << loaded.errors.size() << " malformed lines), " << report.unanswered << " unanswered, overall "
            << (report.overall ? fmt_double(*report.overall, 4) : std::string("n/a")) << "\n";
  return 0;
}

int cmd_demo(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = workbench::run_demo(cfg, cfg.paths.output_dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << res.report << "\nreport hash " << res.report_hash << "\nrun directory " << res.run_dir
            << "\nelapsed " << fmt_double(secs, 1) << " s\n";
  return 0;
}

int cmd_report(const std::string& run_dir, bool check) {
  const auto summary = json::parse(read_file((fs::path(run_dir) / "summary.json").string()));
  if (summary.contains("failed_stage")) {
    std::cerr << "run failed at stage " << summary.at("failed_stage").get<std::string>() << ": "
              << summary.value("error", std::string()) << "\n";
    return 1;
  }
  const std::string report = workbench::render_report(summary);
  const std::string hash = workbench::report_hash(report);
  std::cout << report << "\nreport hash " << hash << "\n";
  if (check) {
    const std::string saved = read_file((fs::path(run_dir) / "report.md").string());
    if (saved != report) {
      std::cerr << "report.md differs from the regenerated report\n";
      return 1;
    }
    std::cout << "report.md matches\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Medical RLVR workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON, comments allowed)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--parallelism", g.parallelism, "Worker threads (0: logical cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Run directory");

  std::string input, output;
  auto* verify = app.add_subcommand("verify", "Score {kind, response, gold} JSONL lines");
  verify->add_option("--input", input, "Input JSONL")->required()->check(CLI::ExistingFile);
  verify->add_option("--output", output, "Scored JSONL (default <out>/verify/scored.jsonl)");

  std::string algo = "grpo", dataset, heldout;
  std::optional<int> epochs, stage;
  auto* train = app.add_subcommand("train", "Train a policy with GRPO or DPO");
  train->add_option("--algo", algo)->check(CLI::IsMember({"grpo", "dpo"}));
  train->add_option("--dataset", dataset, "Dataset JSONL (default: planted curriculum)");
  train->add_option("--heldout", heldout, "Held-out dataset JSONL");
  train->add_option("--epochs", epochs);
  train->add_option("--stage", stage, "1: G=32, 2: G=8")->check(CLI::IsMember({1, 2}));

  std::string pairs, eval_pairs;
  auto* fit_rm = app.add_subcommand("fit-rm", "Fit a Bradley-Terry reward model on preference pairs");
  fit_rm->add_option("--pairs", pairs, "Preference pairs JSONL")->required()->check(CLI::ExistingFile);
  fit_rm->add_option("--eval", eval_pairs, "Held-out pairs JSONL")->check(CLI::ExistingFile);

  std::string policy_path;
  int k = 8;
  auto* resample = app.add_subcommand("resample", "Drop samples the policy has mastered");
  resample->add_option("--dataset", dataset);
  resample->add_option("--policy", policy_path, "Policy JSON (default: uniform)");
  resample->add_option("-k,--rollouts", k, "Rollouts per sample")->check(CLI::PositiveNumber);

  std::optional<std::size_t> tasks, budget;
  std::string objective;
  auto* optimize = app.add_subcommand("optimize-ratios", "Bayesian optimization of task sampling ratios");
  optimize->add_option("--tasks", tasks)->check(CLI::Range(2, 64));
  optimize->add_option("--budget", budget)->check(CLI::PositiveNumber);
  optimize->add_option("--objective", objective)->check(CLI::IsMember({"synthetic", "train"}));

  std::string mode, triples, templates, text;
  auto* pipeline = app.add_subcommand("pipeline", "SPO triple translation, round-trip filtering, extraction");
  pipeline->add_option("mode", mode)->required()->check(CLI::IsMember({"translate", "filter", "extract"}));
  pipeline->add_option("--triples", triples, "Triples TSV (subject, predicate, object)");
  pipeline->add_option("--templates", templates, "Template set JSON");
  pipeline->add_option("--text", text, "Text to extract triples from");

  std::string adapter, data_path, client_kind, subset, transcripts;
  std::optional<double> temperature;
  std::optional<std::size_t> cap;
  auto* evaluate = app.add_subcommand("evaluate", "Run a benchmark through a model client");
  evaluate->add_option("--benchmark", adapter)->required()->check(CLI::IsMember({"mcq", "multi_response", "open_ended"}));
  evaluate->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--client", client_kind)->check(CLI::IsMember({"http", "replay", "mock"}));
  evaluate->add_option("--temperature", temperature);
  evaluate->add_option("--cap", cap)->check(CLI::PositiveNumber);
  evaluate->add_option("--subset", subset);
  evaluate->add_option("--transcripts", transcripts, "Replay source")->check(CLI::ExistingFile);

  auto* demo = app.add_subcommand("demo", "End-to-end pipeline on synthetic data");

  std::string run_dir;
  bool check = false;
  auto* report = app.add_subcommand("report", "Regenerate the consolidated report of a run");
  report->add_option("--run-dir", run_dir)->required()->check(CLI::ExistingDirectory);
  report->add_flag("--check", check, "Fail when report.md differs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) return cmd_report(run_dir, check);
    const RunConfig cfg = resolve(g);
    if (verify->parsed()) return cmd_verify(cfg, input, output);
    if (train->parsed()) return cmd_train(cfg, algo, dataset, heldout, epochs, stage);
    if (fit_rm->parsed()) return cmd_fit_rm(cfg, pairs, eval_pairs);
    if (resample->parsed()) return cmd_resample(cfg, dataset, policy_path, k);
    if (optimize->parsed()) return cmd_optimize(cfg, tasks, budget, objective);
    if (pipeline->parsed()) return cmd_pipeline(cfg, mode, triples, templates, text);
    if (evaluate->parsed()) return cmd_evaluate(cfg, adapter, data_path, client_kind, temperature, cap, subset, transcripts);
    if (demo->parsed()) return cmd_demo(cfg);
  } catch (const workbench::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
