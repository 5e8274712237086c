#include "medrl/workbench.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <sstream>

#include "medrl/common.hpp"
#include "medrl/curriculum.hpp"
#include "medrl/eval_harness.hpp"
#include "medrl/json_io.hpp"
#include "medrl/model_scorer.hpp"
#include "medrl/reward_lab.hpp"

namespace medrl::workbench {

namespace fs = std::filesystem;
using nlohmann::json;

Verifier make_verifier(const RunConfig& cfg) {
  std::shared_ptr<ModelScorer> scorer;
  if (cfg.scorer.enabled) scorer = std::make_shared<HttpModelScorer>(cfg.scorer.http);
  SynonymTable syn;
  if (!cfg.paths.synonyms.empty()) syn = SynonymTable::load_tsv(cfg.paths.synonyms);
  return Verifier(cfg.verifier, std::move(scorer), std::move(syn));
}

bo::Objective synthetic_objective(std::vector<double> target) {
  return [target = std::move(target)](const bo::Ratio& r) {
    if (r.size() != target.size()) throw std::invalid_argument("synthetic objective: dimension mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) d += (r[i] - target[i]) * (r[i] - target[i]);
    return -d;
  };
}

bo::Objective train_objective(std::vector<rl::Sample> pool, std::vector<rl::Sample> heldout,
                              const RunConfig& cfg) {
  const Verifier verifier = make_verifier(cfg);
  auto pool_ptr = std::make_shared<std::vector<rl::Sample>>(std::move(pool));
  auto held_ptr = std::make_shared<std::vector<rl::Sample>>(std::move(heldout));
  auto held_table = std::make_shared<rl::RewardTable>(rl::RewardTable::build(*held_ptr, verifier, cfg.workers()));
  auto counter = std::make_shared<std::uint64_t>(0);
  return [=](const bo::Ratio& r) {
    const std::uint64_t call = (*counter)++;
    const auto mixture = curriculum::sample_mixture(*pool_ptr, r, cfg.bo.mixture_size,
                                                    derive_seed(cfg.seed, std::string_view("mixture"), call));
    const auto table = rl::RewardTable::build(mixture, verifier, cfg.workers());
    rl::TrainConfig tc = cfg.train;
    tc.epochs = cfg.bo.mixture_epochs;
    tc.seed = derive_seed(cfg.seed, call);
    tc.parallelism = cfg.workers();
    const auto res = rl::train(mixture, tc, table, rl::Algo::Grpo);
    const auto ev = rl::evaluate_policy(res.policy, *held_ptr, *held_table);
    std::vector<double> scores;
    for (TaskKind k : kAllTaskKinds) scores.push_back(ev.per_kind.count(k) ? ev.per_kind.at(k).accuracy() : 0.0);
    std::vector<double> w = cfg.bo.weights;
    if (w.empty()) w.assign(scores.size(), 1.0 / static_cast<double>(scores.size()));
    return bo::weighted_overall_score(scores, w);
  };
}

std::vector<data::SpoTriple> demo_triples() {
  return {
      {"Metformin", "treats", "type 2 diabetes"},
      {"Insulin glargine", "treats", "type 1 diabetes"},
      {"Amlodipine", "treats", "essential hypertension"},
      {"Salbutamol", "treats", "acute asthma"},
      {"Ceftriaxone", "treats", "bacterial meningitis"},
      {"Polyuria", "indicates", "diabetes mellitus"},
      {"Crushing chest pain", "indicates", "acute coronary syndrome"},
      {"Neck stiffness", "indicates", "meningitis"},
      {"Metformin", "contraindicated_for", "severe renal impairment"},
      {"Warfarin", "contraindicated_for", "pregnancy"},
      {"Beta blockers", "contraindicated_for", "severe asthma"},
      {"Type 2 diabetes", "diagnosed_by", "an HbA1c of 6.5 percent or higher"},
      {"Pulmonary embolism", "diagnosed_by", "CT pulmonary angiography"},
      {"Atrial fibrillation", "diagnosed_by", "electrocardiogram"},
      {"Smoking", "causes", "chronic obstructive pulmonary disease"},
      {"Uncontrolled hypertension", "causes", "hypertensive retinopathy"},
      {"Aspirin", "prevents", "recurrent myocardial infarction"},
      {"Statins", "prevents", "cardiovascular events"},
      {"Influenza vaccination", "prevents", "influenza-related hospitalisation"},
      // adversarial: the object repeats the predicate's own delimiter phrase
      {"Metformin", "treats", "patients whose glucose drug is used to treat obesity"},
      {"Fever", "indicates", "infection that suggests a diagnosis of sepsis"},
      // quality-filter rejects
      {"Ibuprofen", "treats", "pain; see notes"},
      {"Drug X", "cures", "everything"},
  };
}

FixtureBenchmarks fixture_benchmarks(std::uint64_t seed) {
  FixtureBenchmarks fx;
  const std::string letters = "ABCDE";
  std::vector<json> mcq, multi, open;
  for (int i = 0; i < 40; ++i) {
    Rng rng(derive_seed(seed, std::string_view("mcq"), static_cast<std::uint64_t>(i)));
    json opts;
    for (char c : letters) opts[std::string(1, c)] = "Option " + std::string(1, c) + " for item " + std::to_string(i);
    const char* types[] = {"multiple_choice", "multiple_choice", "shared_stem", "case_analysis"};
    mcq.push_back({{"id", "mcq-" + std::to_string(i)},
                   {"question", "Fixture question " + std::to_string(i) + ": which option is correct?"},
                   {"options", opts},
                   {"answer", std::string(1, letters[rng.below(5)])},
                   {"subject", curriculum::kExamLevels[rng.below(4)]},
                   {"question_type", types[rng.below(4)]},
                   {"subset", i % 2 == 0 ? "usmle" : "general"}});
  }
  for (int i = 0; i < 20; ++i) {
    Rng rng(derive_seed(seed, std::string_view("multi"), static_cast<std::uint64_t>(i)));
    json opts;
    for (char c : letters) opts[std::string(1, c)] = "Statement " + std::string(1, c) + " about case " + std::to_string(i);
    std::string ans;
    for (char c : letters) if (rng.uniform() < 0.5) ans += c;
    if (ans.size() < 2) ans = "AC";
    multi.push_back({{"id", "mr-" + std::to_string(i)},
                     {"question", "Fixture case " + std::to_string(i) + ": select every true statement."},
                     {"options", opts},
                     {"answer", ans},
                     {"subject", curriculum::kExamLevels[rng.below(4)]}});
  }
  const char* refs[] = {
      "Start metformin, advise weight loss and recheck HbA1c in three months.",
      "Order an electrocardiogram and troponin, give aspirin, and admit for monitoring.",
      "Obtain blood cultures, start empirical ceftriaxone and perform a lumbar puncture.",
      "Confirm with spirometry, prescribe inhaled budesonide and a salbutamol reliever.",
      "Check thyroid function, ferritin and a complete blood count before treatment."};
  for (int i = 0; i < 10; ++i) {
    open.push_back({{"id", "clin-" + std::to_string(i)},
                    {"question", "Clinical case " + std::to_string(i) + ": outline the management plan."},
                    {"reference", refs[i % 5]},
                    {"max_score", 4},
                    {"subject", "Clinical"}});
  }
  fx.mcq = to_jsonl(mcq);
  fx.multi_response = to_jsonl(multi);
  fx.open_ended = to_jsonl(open);
  return fx;
}

std::unique_ptr<eval::ModelClient> make_overlap_judge() {
  return std::make_unique<eval::FnClient>(
      [](const std::string& prompt, double) -> std::string {
        static const std::regex scale(R"(on a 0-([0-9]+(?:\.[0-9]+)?) scale)");
        const auto ref_at = prompt.find("Reference answer:\n");
        const auto cand_at = prompt.find("\n\nCandidate answer:\n");
        const auto end_at = prompt.rfind("\n\nReply with");
        std::smatch m;
        if (ref_at == std::string::npos || cand_at == std::string::npos || end_at == std::string::npos ||
            cand_at < ref_at || end_at < cand_at || !std::regex_search(prompt, m, scale)) {
          return "unable to grade";
        }
        const double max_score = std::stod(m[1].str());
        const std::size_t ref_begin = ref_at + 18;
        const std::size_t cand_begin = cand_at + 20;
        const auto ref = reward::content_tokens(prompt.substr(ref_begin, cand_at - ref_begin));
        const auto resp = reward::content_tokens(prompt.substr(cand_begin, end_at - cand_begin));
        if (ref.empty()) return "Grade: " + fmt_double(max_score, 1);
        std::size_t hit = 0;
        for (const auto& t : ref) hit += resp.count(t);
        const double g = std::round(2.0 * max_score * static_cast<double>(hit) / static_cast<double>(ref.size())) / 2.0;
        return "Grade: " + fmt_double(g, 1);
      },
      "overlap-judge");
}

std::string report_hash(const std::string& report) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(report)));
  return buf;
}

namespace {

json kind_accuracy(const rl::PolicyEvaluation& ev) {
  json j = json::object();
  for (const auto& [k, s] : ev.per_kind) j[std::string(to_string(k))] = s.accuracy();
  return j;
}

json policy_eval_json(const rl::PolicyEvaluation& ev) {
  return {{"accuracy", ev.accuracy},
          {"per_kind", kind_accuracy(ev)},
          {"diagnosis_top1", ev.diagnosis_top1},
          {"diagnosis_list_score", ev.diagnosis_list_score}};
}

std::string path_in(const std::string& dir, const std::string& rel) { return (fs::path(dir) / rel).string(); }

std::string f4(const json& v) { return v.is_number() ? fmt_double(v.get<double>(), 4) : "n/a"; }

}  // namespace

DemoResult run_demo(const RunConfig& cfg_in, const std::string& run_dir) {
  RunConfig cfg = cfg_in;
  cfg.train.seed = cfg.seed;
  cfg.train.parallelism = cfg.workers();
  cfg.validate();
  fs::create_directories(run_dir);

  DemoResult result;
  result.run_dir = run_dir;
  json& summary = result.summary;
  summary["seed"] = cfg.seed;
  std::string stage;

  auto persist = [&] { write_file(path_in(run_dir, "summary.json"), summary.dump(2) + "\n"); };

  try {
    stage = "config";
    write_file(path_in(run_dir, "config.json"), to_json(cfg).dump(2) + "\n");

    stage = "curriculum";
    std::vector<rl::Sample> train, heldout;
    if (cfg.paths.dataset.empty()) {
      train = curriculum::planted_curriculum(curriculum::training_config(cfg.seed));
      heldout = curriculum::planted_curriculum(curriculum::heldout_config(cfg.seed));
    } else {
      train = rl::load_dataset(cfg.paths.dataset);
      heldout = cfg.paths.heldout.empty() ? train : rl::load_dataset(cfg.paths.heldout);
    }
    rl::save_dataset(path_in(run_dir, "curriculum/train.jsonl"), train);
    rl::save_dataset(path_in(run_dir, "curriculum/heldout.jsonl"), heldout);
    json counts = json::object();
    for (const auto& s : train) counts[std::string(to_string(s.kind))] = counts.value(std::string(to_string(s.kind)), 0) + 1;
    summary["curriculum"] = {{"train", train.size()}, {"heldout", heldout.size()}, {"per_kind", counts}};

    stage = "verifier";
    const Verifier verifier = make_verifier(cfg);
    const auto table = rl::RewardTable::build(train, verifier, cfg.workers());
    const auto held_table = rl::RewardTable::build(heldout, verifier, cfg.workers());
    std::size_t malformed = 0, passes = 0, cells = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      for (const auto& b : table.row(i)) {
        ++cells;
        malformed += b.format_score == 0 ? 1 : 0;
        passes += b.final_score >= rl::kPassReward ? 1 : 0;
      }
    }
    summary["verifier"] = {{"candidates_scored", cells}, {"format_failures", malformed}, {"passing", passes}};

    stage = "data-pipeline";
    {
      std::vector<std::string> labels;
      for (const auto& s : train) labels.push_back(s.strata_label);
      const auto strat = data::stratified_indices(labels, 40, derive_seed(cfg.seed, std::string_view("strata")));
      const auto initial = rl::Policy::zeros(curriculum::kFeatureDim, cfg.train.temperature);
      const auto diff = data::difficulty_filter(train, initial, table, 8, 0.1, 0.8,
                                                derive_seed(cfg.seed, std::string_view("difficulty")), cfg.workers());
      std::string csv = "sample_id,pass_rate,k\n";
      for (const auto& st : diff.stats) csv += st.sample_id + ',' + fmt_double(st.pass_rate, 4) + ',' + std::to_string(st.k) + '\n';
      write_file(path_in(run_dir, "pipeline/difficulty.csv"), csv);

      const auto templates =
          cfg.paths.templates.empty() ? data::TemplateSet::builtin() : data::TemplateSet::load(cfg.paths.templates);
      std::vector<data::SpoTriple> triples;
      if (cfg.paths.triples.empty()) {
        triples = demo_triples();
      } else {
        const auto tf = data::read_triples_tsv(cfg.paths.triples);
        if (!tf.errors.empty()) {
          throw std::invalid_argument(cfg.paths.triples + ":" + std::to_string(tf.errors.front().line_no) + ": " +
                                      tf.errors.front().message);
        }
        triples = tf.triples;
      }
      write_file(path_in(run_dir, "pipeline/triples.tsv"), data::to_tsv(triples));
      const auto rt = data::roundtrip_filter(triples, templates);
      std::vector<json> acc, rej;
      for (const auto& a : rt.accepted) acc.push_back(data::to_json(a));
      for (const auto& r : rt.rejected) rej.push_back(data::to_json(r));
      write_file(path_in(run_dir, "pipeline/sentences.jsonl"), to_jsonl(acc));
      write_file(path_in(run_dir, "pipeline/rejected.jsonl"), to_jsonl(rej));
      json reasons = json::object();
      for (const auto& r : rt.rejected) reasons[r.reason] = reasons.value(r.reason, 0) + 1;
      summary["pipeline"] = {{"stratified_selected", strat.size()},
                             {"difficulty_kept", diff.kept.size()},
                             {"triples", triples.size()},
                             {"sentences_accepted", rt.accepted.size()},
                             {"triples_rejected", rt.rejected.size()},
                             {"rejection_reasons", reasons}};
    }

    stage = "grpo";
    const auto grpo = rl::train(train, cfg.train, table, rl::Algo::Grpo);
    write_file(path_in(run_dir, "rl/grpo_metrics.csv"), rl::metrics_csv(grpo));
    write_file(path_in(run_dir, "rl/grpo_policy.json"), to_json(grpo.policy).dump(2) + "\n");

    stage = "dpo";
    const auto dpo = rl::train(train, cfg.train, table, rl::Algo::Dpo);
    write_file(path_in(run_dir, "rl/dpo_metrics.csv"), rl::metrics_csv(dpo));
    write_file(path_in(run_dir, "rl/dpo_policy.json"), to_json(dpo.policy).dump(2) + "\n");

    stage = "rl-evaluation";
    auto rl_json = [&](const rl::TrainResult& r) {
      return json{{"status", r.status},
                  {"epochs_run", r.epochs.size()},
                  {"update_steps", r.update_steps},
                  {"total_rollouts", r.total_rollouts},
                  {"aborted_steps", r.aborted_steps},
                  {"train", policy_eval_json(rl::evaluate_policy(r.policy, train, table))},
                  {"heldout", policy_eval_json(rl::evaluate_policy(r.policy, heldout, held_table))},
                  {"expected_reward", rl::expected_reward(r.policy, train, table)},
                  {"mean_kl", rl::mean_kl(r.policy, r.reference, train)}};
    };
    summary["grpo"] = rl_json(grpo);
    summary["dpo"] = rl_json(dpo);

    stage = "reward-model";
    {
      // Preference pairs from initial-policy rollouts: best vs worst per prompt.
      const auto initial = rl::Policy::zeros(curriculum::kFeatureDim, cfg.train.temperature);
      auto groups_for = [&](const std::vector<rl::Sample>& ds, const rl::RewardTable& tab, std::string_view tag) {
        std::vector<reward::ScoredGroup> groups(ds.size());
        parallel_for(ds.size(), cfg.workers(), [&](std::size_t i) {
          const auto g = rl::rollout(initial, ds[i], 8, derive_seed(cfg.seed, tag, i));
          groups[i].prompt_id = ds[i].id;
          for (std::size_t j = 0; j < g.actions.size(); ++j) {
            groups[i].rollouts.push_back({static_cast<int>(j), ds[i].candidates[g.actions[j]].features,
                                          tab.reward(i, g.actions[j])});
          }
        });
        return groups;
      };
      const auto train_groups = groups_for(train, table, "rm-train");
      const auto gen = reward::generate_preference_pairs(train_groups);
      std::vector<reward::PreferencePair> pairs;
      std::vector<json> pair_rows;
      for (const auto& p : gen.pairs) {
        if (p.low_margin) continue;
        pairs.push_back(p);
        pair_rows.push_back(reward::to_json(p));
      }
      write_file(path_in(run_dir, "reward_model/pairs.jsonl"), to_jsonl(pair_rows));
      const auto fit = reward::fit_bradley_terry(pairs, cfg.reward_model.bt);
      write_file(path_in(run_dir, "reward_model/params.json"), reward::to_json(fit.params).dump(2) + "\n");

      // Held-out agreement: pair accuracy and rank correlation with verifier reward.
      const auto held_groups = groups_for(heldout, held_table, "rm-heldout");
      const auto held_gen = reward::generate_preference_pairs(held_groups);
      std::size_t agree = 0, n_pairs = 0;
      for (const auto& p : held_gen.pairs) {
        if (p.low_margin) continue;
        ++n_pairs;
        agree += reward::score(fit.params, p.chosen) > reward::score(fit.params, p.rejected) ? 1 : 0;
      }
      std::vector<double> rm_scores, verifier_rewards;
      std::vector<reward::CandidateScores> cand;
      for (std::size_t i = 0; i < heldout.size(); ++i) {
        reward::CandidateScores cs;
        cs.prompt_id = heldout[i].id;
        for (std::size_t a = 0; a < heldout[i].candidates.size(); ++a) {
          const double s = reward::score(fit.params, heldout[i].candidates[a].features);
          cs.scores.push_back(s);
          rm_scores.push_back(s);
          verifier_rewards.push_back(held_table.reward(i, a));
        }
        cand.push_back(std::move(cs));
      }
      const auto flagged = reward::active_learning_select(cand, cfg.reward_model.tau);
      std::vector<json> flag_rows;
      for (const auto& f : flagged) flag_rows.push_back({{"prompt_id", f.prompt_id}, {"gap", f.gap}});
      write_file(path_in(run_dir, "reward_model/flagged.jsonl"), to_jsonl(flag_rows));

      // Length audit over final GRPO rollouts.
      std::vector<reward::LengthRewardPoint> pts;
      for (std::size_t i = 0; i < train.size(); ++i) {
        const auto g = rl::rollout(grpo.policy, train[i], 4, derive_seed(cfg.seed, std::string_view("audit"), i));
        for (std::size_t a : g.actions) {
          pts.push_back({static_cast<double>(train[i].candidates[a].payload.size()), table.reward(i, a)});
        }
      }
      const auto audit = reward::length_hack_audit(pts, cfg.reward_model.length_warn);
      write_file(path_in(run_dir, "reward_model/length_audit.md"), reward::render_markdown(audit));

      summary["reward_model"] = {{"pairs", pairs.size()},
                                 {"low_margin_skipped", gen.low_margin},
                                 {"degenerate", fit.degenerate},
                                 {"log_likelihood", fit.log_likelihood},
                                 {"weights", fit.params.weights},
                                 {"heldout_pair_accuracy", n_pairs ? static_cast<double>(agree) / n_pairs : 0.0},
                                 {"heldout_kendall_tau", reward::kendall_tau(rm_scores, verifier_rewards)},
                                 {"flagged_for_relabel", flagged.size()},
                                 {"length_correlation", audit.correlation},
                                 {"length_warn", audit.warn}};
    }

    stage = "ratio-optimizer";
    {
      bo::BoConfig bc;
      bc.tasks = cfg.bo.tasks;
      bc.budget = cfg.bo.budget;
      bc.init_n = cfg.bo.init_n;
      bc.n_candidates = cfg.bo.n_candidates;
      bc.seed = derive_seed(cfg.seed, std::string_view("bo"));
      bc.parallelism = cfg.workers();
      const auto objective = cfg.bo.objective == "train" ? train_objective(train, heldout, cfg)
                                                          : synthetic_objective(cfg.bo.target);
      const auto res = bo::optimize(objective, bc);
      write_file(path_in(run_dir, "bo/trace.csv"), bo::trace_csv(res));
      summary["bo"] = {{"objective", cfg.bo.objective},
                       {"evaluations", res.trace.size()},
                       {"failures", res.failures},
                       {"best_y", res.best.y},
                       {"best_x", res.best.x}};
    }

    stage = "evaluation";
    {
      const auto fx = fixture_benchmarks(cfg.seed);
      const std::string bdir = path_in(run_dir, "eval/benchmarks");
      write_file(path_in(bdir, "mcq.jsonl"), fx.mcq);
      write_file(path_in(bdir, "multi_response.jsonl"), fx.multi_response);
      write_file(path_in(bdir, "open_ended.jsonl"), fx.open_ended);
      std::vector<eval::BenchmarkItem> items;
      for (const auto& [file, schema] : std::vector<std::pair<std::string, std::string>>{
               {"mcq.jsonl", "mcq"}, {"multi_response.jsonl", "multi_response"}, {"open_ended.jsonl", "open_ended"}}) {
        auto loaded = eval::load_benchmark(path_in(bdir, file), schema);
        auto capped = eval::uniform_sample(loaded.items, cfg.eval.cap, cfg.seed);
        items.insert(items.end(), capped.begin(), capped.end());
      }
      eval::PromptSpec ps;
      if (!cfg.eval.prompt_template.empty()) ps.tmpl = cfg.eval.prompt_template;
      ps.leading_text = cfg.eval.leading_text;
      auto mock = eval::make_gold_echo(items, ps);
      const eval::RunOptions ro{cfg.eval.temperature, cfg.workers()};
      const auto transcripts = eval::run_eval(items, mock, ps, ro);
      eval::write_transcripts(path_in(run_dir, "eval/transcripts.jsonl"), transcripts);
      auto judge = make_overlap_judge();
      auto score_all = [&](const std::vector<eval::Transcript>& ts) {
        std::vector<eval::ItemScore> scores;
        for (std::size_t i = 0; i < items.size(); ++i) scores.push_back(eval::score_item(items[i], ts[i], judge.get()));
        return eval::aggregate_report(scores);
      };
      const auto report = score_all(transcripts);
      const std::string md = eval::render_markdown(report);
      write_file(path_in(run_dir, "eval/report.md"), md);
      write_file(path_in(run_dir, "eval/report.csv"), eval::render_csv(report));
      write_file(path_in(run_dir, "eval/items.csv"), eval::render_items_csv(report));

      auto replay = eval::ReplayClient::load(path_in(run_dir, "eval/transcripts.jsonl"));
      const auto replayed = score_all(eval::run_eval(items, replay, ps, ro));
      json per = json::object();
      for (const auto& [name, b] : report.per_benchmark) per[name] = b.mean();
      summary["evaluation"] = {{"items", report.items},
                               {"unanswered", report.unanswered},
                               {"per_benchmark", per},
                               {"overall", report.overall ? json(*report.overall) : json(nullptr)},
                               {"replay_identical", eval::render_markdown(replayed) == md}};
    }
  } catch (const std::exception& e) {
    summary["failed_stage"] = stage;
    summary["error"] = e.what();
    persist();
    throw StageError(stage, e.what());
  }

  persist();
  result.report = render_report(summary);
  result.report_hash = report_hash(result.report);
  write_file(path_in(run_dir, "report.md"), result.report);
  write_file(path_in(run_dir, "report.sha"), result.report_hash + "\n");
  return result;
}

std::string render_report(const json& s) {
  std::ostringstream md;
  md << "# Workbench run report\n\nSeed: " << s.at("seed").get<std::uint64_t>() << "\n\n";

  const auto& c = s.at("curriculum");
  md << "## Curriculum\n\n| split | samples |\n|---|---|\n| train | " << c.at("train") << " |\n| held-out | "
     << c.at("heldout") << " |\n";
  for (const auto& [k, v] : c.at("per_kind").items()) md << "| train/" << k << " | " << v << " |\n";

  const auto& v = s.at("verifier");
  md << "\n## Verifier\n\nCandidates scored: " << v.at("candidates_scored") << "; format failures: "
     << v.at("format_failures") << "; passing (reward >= 0.99): " << v.at("passing") << ".\n";

  const auto& p = s.at("pipeline");
  md << "\n## Data pipeline\n\n| step | count |\n|---|---|\n"
     << "| stratified sample (40 per label) | " << p.at("stratified_selected") << " |\n"
     << "| difficulty band [0.1, 0.8] kept | " << p.at("difficulty_kept") << " |\n"
     << "| triples in | " << p.at("triples") << " |\n"
     << "| sentences accepted | " << p.at("sentences_accepted") << " |\n"
     << "| triples rejected | " << p.at("triples_rejected") << " |\n";
  for (const auto& [k, n] : p.at("rejection_reasons").items()) md << "| rejected: " << k << " | " << n << " |\n";

  md << "\n## Policy optimization\n\n| metric | GRPO | DPO |\n|---|---|---|\n";
  const auto& g = s.at("grpo");
  const auto& d = s.at("dpo");
  auto cell = [](const json& v) {
    if (v.is_number_float()) return f4(v);
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  auto row = [&](const std::string& name, const json& a, const json& b) {
    md << "| " << name << " | " << cell(a) << " | " << cell(b) << " |\n";
  };
  row("status", g.at("status"), d.at("status"));
  row("epochs run", g.at("epochs_run"), d.at("epochs_run"));
  row("update steps", g.at("update_steps"), d.at("update_steps"));
  row("rollouts", g.at("total_rollouts"), d.at("total_rollouts"));
  row("train accuracy", g.at("train").at("accuracy"), d.at("train").at("accuracy"));
  row("held-out accuracy", g.at("heldout").at("accuracy"), d.at("heldout").at("accuracy"));
  for (const auto& [k, _] : g.at("heldout").at("per_kind").items()) {
    row("held-out " + k, g.at("heldout").at("per_kind").at(k), d.at("heldout").at("per_kind").at(k));
  }
  row("diagnosis Top-1 (held-out)", g.at("heldout").at("diagnosis_top1"), d.at("heldout").at("diagnosis_top1"));
  row("diagnosis List Score (held-out)", g.at("heldout").at("diagnosis_list_score"),
      d.at("heldout").at("diagnosis_list_score"));
  row("expected reward (train)", g.at("expected_reward"), d.at("expected_reward"));
  row("mean KL to reference", g.at("mean_kl"), d.at("mean_kl"));

  const auto& r = s.at("reward_model");
  md << "\n## Reward model (Bradley-Terry)\n\n| metric | value |\n|---|---|\n"
     << "| training pairs | " << r.at("pairs") << " |\n"
     << "| low-margin groups skipped | " << r.at("low_margin_skipped") << " |\n"
     << "| log-likelihood | " << f4(r.at("log_likelihood")) << " |\n"
     << "| held-out pair accuracy | " << f4(r.at("heldout_pair_accuracy")) << " |\n"
     << "| held-out Kendall tau vs verifier reward | " << f4(r.at("heldout_kendall_tau")) << " |\n"
     << "| flagged for re-labeling | " << r.at("flagged_for_relabel") << " |\n"
     << "| length/reward correlation | " << f4(r.at("length_correlation")) << (r.at("length_warn").get<bool>() ? " (WARN)" : "")
     << " |\n";
  md << "\nWeights:";
  for (const auto& w : r.at("weights")) md << ' ' << fmt_double(w.get<double>(), 4);
  md << "\n";

  const auto& b = s.at("bo");
  md << "\n## Sampling-ratio search\n\nObjective: " << b.at("objective").get<std::string>() << "; evaluations: "
     << b.at("evaluations") << "; failures: " << b.at("failures") << "; best y: " << fmt_double(b.at("best_y").get<double>(), 6)
     << "\n\nBest ratios:";
  for (const auto& x : b.at("best_x")) md << ' ' << fmt_double(x.get<double>(), 4);
  md << "\n";

  const auto& e = s.at("evaluation");
  md << "\n## Benchmark evaluation (gold-echo client, overlap judge)\n\n| benchmark | accuracy |\n|---|---|\n";
  for (const auto& [k, val] : e.at("per_benchmark").items()) md << "| " << k << " | " << f4(val) << " |\n";
  md << "| overall | " << f4(e.at("overall")) << " |\n\nItems: " << e.at("items") << "; unanswered: " << e.at("unanswered")
     << "; replay reproduces report: " << (e.at("replay_identical").get<bool>() ? "yes" : "no") << ".\n";
  return md.str();
}

}  // namespace medrl::workbench
