// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <mutex>

#include "divprompt/backends.hpp"
#include "divprompt/config.hpp"
#include "divprompt/runner.hpp"
#include "support.hpp"

using namespace divprompt;
namespace fs = std::filesystem;

namespace {

struct Loaded {
  RunConfigFile file;
  RunConfig cfg;
  std::vector<TaskRecord> data;
};

Loaded load(const std::string& rel) {
  Loaded l;
  l.file = load_config(support::fixture(rel));
  l.cfg = to_run_config(l.file);
  l.data = load_dataset(l.cfg.task, l.file.dataset);
  return l;
}

/// Scripted backend that remembers every request it served.
class Capturing : public Backend {
 public:
  explicit Capturing(std::shared_ptr<ScriptedBackend> inner) : inner_(std::move(inner)) {}
  std::vector<Completion> generate(const GenerationRequest& req) override {
    {
      std::lock_guard lock(mu_);
      requests.push_back(req);
    }
    return inner_->generate(req);
  }
  BackendMode mode() const override { return BackendMode::Scripted; }
  std::vector<GenerationRequest> requests;

 private:
  std::shared_ptr<ScriptedBackend> inner_;
  std::mutex mu_;
};

fs::path write_temp(const std::string& name, const std::string& content) {
  auto p = fs::temp_directory_path() / ("divprompt-runner-" + name);
  support::write_file(p, content);
  return p;
}

TaskRecord choice_item(const std::string& id, const std::string& question) {
  TaskRecord r;
  r.id = id;
  r.question = question;
  r.options = {{'A', "1"}, {'B', "2"}, {'C', "3"}, {'D', "4"}, {'E', "5"}};
  r.gold = "A";
  return r;
}

StrategyPair named_pair(const std::string& name) {
  return {Persona::empty(), Approach{text::slugify(name), name, "", 1}, std::nullopt, false};
}

}  // namespace

// ---------------------------------------------------------------------------
// datasets

TEST(LoadDataset, AquaRecord) {
  auto path = write_temp("aqua.jsonl", R"({"question":"2+2?","options":["A)4","B)5","C)6","D)7","E)8"],"correct":"a"})"
                                       "\n");
  auto d = load_dataset(task_spec(TaskId::Aqua), path);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].gold, "A");
  ASSERT_EQ(d[0].options.size(), 5u);
  EXPECT_EQ(d[0].options[1].label, 'B');
  EXPECT_EQ(d[0].options[1].text, "5");
}

TEST(LoadDataset, Gsm8kGoldFromMarker) {
  auto path = write_temp("gsm.jsonl", R"({"question":"q","answer":"Some steps.\n#### 72"})"
                                      "\n");
  EXPECT_EQ(load_dataset(task_spec(TaskId::Gsm8k), path)[0].gold, "72");
}

TEST(LoadDataset, BlocksworldInstance) {
  auto d = load_dataset(task_spec(TaskId::Blocksworld3), support::fixture("blocksworld/bw3.jsonl"));
  ASSERT_EQ(d.size(), 1u);
  ASSERT_TRUE(d[0].blocks);
  EXPECT_EQ(d[0].blocks->initial, blocks::reference_instance().initial);
}

TEST(LoadDataset, MalformedRecordReportsIndex) {
  auto path = write_temp("bad.jsonl", "{\"question\":\"q\",\"answer\":\"#### 1\"}\n{\"question\":\"q\",\"answer\":\"no marker\"}\n");
  try {
    load_dataset(task_spec(TaskId::Gsm8k), path);
    FAIL() << "accepted a record without a gold marker";
  } catch (const LoadError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
  auto bad_gold = write_temp("badgold.jsonl", R"({"question":"q","options":["A)1","B)2"],"correct":"C"})"
                                              "\n");
  EXPECT_THROW(load_dataset(task_spec(TaskId::Aqua), bad_gold), LoadError);
}

// ---------------------------------------------------------------------------
// end-to-end replay

TEST(Replay, AquaMiniDivSe) {
  auto l = load("aqua-mini/div_se.json");
  auto gw = make_gateway(l.file);
  auto r = run(l.cfg, l.data, gw);
  EXPECT_EQ(r.summary.n_items, 5u);
  EXPECT_EQ(r.summary.n_correct, 4u);
  EXPECT_EQ(r.summary.total_cost.str(), "0.044000");
  EXPECT_EQ(r.summary.mode, "DIV_SE-5");
  EXPECT_FALSE(r.summary.truncated);
  ASSERT_EQ(r.trials.size(), 5u);
  EXPECT_EQ(r.trials[0].calls.size(), 5u);
  EXPECT_FALSE(r.trials[3].correct);
  EXPECT_TRUE(r.trials[2].aggregation.tie);
  EXPECT_EQ(r.trials[4].answers[1].answer, std::nullopt);
  Usd sum;
  for (const auto& t : r.trials) sum += t.cost;
  EXPECT_EQ(sum, r.summary.total_cost);
}

TEST(Replay, AquaMiniIdivSe) {
  auto l = load("aqua-mini/idiv_se.json");
  auto gw = make_gateway(l.file);
  auto r = run(l.cfg, l.data, gw);
  EXPECT_EQ(r.summary.n_correct, 4u);
  EXPECT_EQ(r.summary.total_cost.str(), "0.032500");
  EXPECT_EQ(r.trials[0].calls.size(), 1u);
  EXPECT_EQ(r.trials[0].answers.size(), 5u);
}

TEST(Replay, RerunsAreByteIdentical) {
  auto l = load("aqua-mini/div_se.json");
  auto gw1 = make_gateway(l.file);
  auto gw2 = make_gateway(l.file);
  auto a = run(l.cfg, l.data, gw1), b = run(l.cfg, l.data, gw2);
  EXPECT_EQ(run_log(a.trials), run_log(b.trials));
  EXPECT_EQ(to_json(a.summary).dump(), to_json(b.summary).dump());
}

TEST(Replay, BudgetTruncates) {
  auto l = load("aqua-mini/div_se.json");
  l.cfg.budget = Usd::parse("0.01");
  auto gw = make_gateway(l.file);
  auto r = run(l.cfg, l.data, gw);
  EXPECT_TRUE(r.summary.truncated);
  EXPECT_EQ(r.summary.n_items, 2u);
  EXPECT_EQ(r.summary.total_cost.str(), "0.017600");
}

TEST(Replay, MissingBundleIsActionable) {
  auto l = load("aqua-mini/div_se.json");
  l.cfg.bundle.reset();
  l.cfg.bundle_path = "somewhere/bundle.json";
  auto gw = make_gateway(l.file);
  try {
    run(l.cfg, l.data, gw);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("somewhere/bundle.json"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// modes

TEST(SelfConsistency, SingleSampleMatchesCotPrompt) {
  auto script = std::make_shared<ScriptedBackend>();
  script->on("", "So the answer is (A)");
  auto cap = std::make_shared<Capturing>(script);
  Gateway gw(cap);
  RunConfig cfg;
  cfg.mode = PromptMode::Sc;
  cfg.sc_samples = 1;
  std::vector<TaskRecord> data{choice_item("x", "Which is one?")};
  auto r = run(cfg, data, gw);
  ASSERT_EQ(cap->requests.size(), 1u);
  EXPECT_EQ(cap->requests[0].n_samples, 1);
  EXPECT_DOUBLE_EQ(cap->requests[0].temperature, 0.7);
  EXPECT_EQ(r.trials[0].calls[0].completions.size(), 1u);
  EXPECT_TRUE(r.trials[0].correct);
  EXPECT_EQ(r.summary.mode, "SC-1");

  cfg.mode = PromptMode::CotZs;
  run(cfg, data, gw);
  ASSERT_EQ(cap->requests.size(), 2u);
  EXPECT_EQ(cap->requests[1].messages, cap->requests[0].messages);
  EXPECT_DOUBLE_EQ(cap->requests[1].temperature, 0.0);
}

TEST(SelfConsistency, SampleCountBounds) {
  RunConfig cfg;
  cfg.mode = PromptMode::Sc;
  cfg.sc_samples = 11;
  EXPECT_THROW(cfg.validate(1), ConfigError);
  cfg.sc_samples = 0;
  EXPECT_THROW(cfg.validate(1), ConfigError);
}

TEST(Blocksworld, IdivSeMajorityOfTwoOracleSegments) {
  auto inst = blocks::reference_instance();
  auto oracle = *blocks::oracle_bfs_plan(inst.initial, inst.goal);
  std::string plan_text = render_plan(oracle);
  // the third segment carries the same plan with an inserted no-op pair
  blocks::Plan noisy = oracle;
  noisy.insert(noisy.begin() + 2, {blocks::Action::put_down("orange"), blocks::Action::pick_up("orange")});
  noisy.erase(noisy.begin() + 1);  // drop the original put-down so the pair sits after the unstack
  std::string reply = "Approach 1 <using state tracking>:\nTrack the state.\n[PLAN]\n" + plan_text +
                      "[PLAN END]\nApproach 2 <using goal regression>:\n[PLAN]\n(pick-up red)\n(stack red blue)\n"
                      "[PLAN END]\nApproach 3 <using means-end analysis>:\n[PLAN]\n" + render_plan(noisy) +
                      "[PLAN END]\n";
  auto script = std::make_shared<ScriptedBackend>();
  script->on("", reply);
  Gateway gw(script);
  RunConfig cfg;
  cfg.task = task_spec(TaskId::Blocksworld3);
  cfg.mode = PromptMode::IdivSe;
  cfg.bundle = load_bundle(support::fixture("blocksworld/bundle.json"));
  auto data = load_dataset(cfg.task, support::fixture("blocksworld/bw3.jsonl"));
  auto r = run(cfg, data, gw);
  const auto& t = r.trials.at(0);
  ASSERT_TRUE(t.aggregation.winner);
  EXPECT_EQ(t.aggregation.winner->as_plan(), oracle);
  EXPECT_EQ(t.aggregation.method, AggregationMethod::PlanMajority);
  EXPECT_TRUE(t.correct);
  EXPECT_TRUE(blocks::validate_plan(inst.initial, inst.goal, t.aggregation.winner->as_plan()).goal_satisfied);
}

TEST(Coloring, VerifiedSelectionGradesRun) {
  auto g = coloring::reference_graph();
  auto good = *coloring::oracle_color_exhaustive(g);
  auto bad = good;
  bad[0] = bad[7];
  std::string reply = "Approach 1 <greedy>:\n" + coloring::render_coloring(bad) + "Approach 2 <backtracking>:\n" +
                      coloring::render_coloring(good) + "Approach 3 <dsatur>:\n" + coloring::render_coloring(bad);
  auto script = std::make_shared<ScriptedBackend>();
  script->on("", reply);
  Gateway gw(script);
  RunConfig cfg;
  cfg.task = task_spec(TaskId::GraphColoring);
  cfg.mode = PromptMode::IdivSe;
  cfg.bundle = load_bundle(support::fixture("coloring/bundle.json"));
  auto data = load_dataset(cfg.task, support::fixture("coloring/graphs.jsonl"));
  auto r = run(cfg, data, gw);
  EXPECT_TRUE(r.trials[0].correct);
  EXPECT_EQ(r.trials[0].aggregation.rejected.size(), 2u);
}

TEST(Meta, ReasoningCallIsLoggedAndCharged) {
  auto script = std::make_shared<ScriptedBackend>();
  script->add_rule({{}, "meta", {{"Comparing them, the answer is (A)", TokenUsage{1000, 0}}}});
  script->add_rule({{"using one"}, std::nullopt, {{"The answer is (B)", TokenUsage{0, 0}}}});
  script->add_rule({{}, std::nullopt, {{"The answer is (A)", TokenUsage{0, 0}}}});
  Gateway gw(script);
  RunConfig cfg;
  cfg.mode = PromptMode::DivSe;
  cfg.meta_reasoning = true;
  cfg.ensemble_size = 3;
  cfg.bundle = StrategyBundle{};
  cfg.bundle->pairs = {named_pair("using one"), named_pair("using two"), named_pair("using three")};
  auto r = run(cfg, {choice_item("m", "Pick one.")}, gw);
  const auto& t = r.trials[0];
  EXPECT_EQ(t.aggregation.method, AggregationMethod::Meta);
  EXPECT_EQ(t.calls.back().purpose, "meta");
  EXPECT_EQ(t.cost.str(), "0.030000");
  EXPECT_TRUE(t.correct);
}

// ---------------------------------------------------------------------------
// sweeps

class SweepByHand : public ::testing::TestWithParam<std::tuple<std::vector<bool>, std::vector<std::size_t>>> {};

TEST_P(SweepByHand, PrefixAccuracies) {
  const auto& [pair_right, expected_correct] = GetParam();
  auto script = std::make_shared<ScriptedBackend>();
  const std::vector<std::string> names{"using first", "using second", "using third"};
  for (std::size_t p = 0; p < names.size(); ++p)
    script->add_rule({{"accurately " + names[p] + "."}, std::nullopt,
                      {{pair_right[p] ? "The answer is (A)" : "The answer is (B)", TokenUsage{100, 20}}}});
  auto cap = std::make_shared<Capturing>(script);
  Gateway gw(cap);
  RunConfig cfg;
  cfg.mode = PromptMode::DivSe;
  cfg.bundle = StrategyBundle{};
  for (const auto& n : names) cfg.bundle->pairs.push_back(named_pair(n));
  std::vector<TaskRecord> data;
  for (int i = 0; i < 4; ++i) data.push_back(choice_item("s" + std::to_string(i), "Item " + std::to_string(i) + "?"));

  auto sums = ensemble_size_sweep(cfg, {1, 2, 3}, data, gw);
  ASSERT_EQ(sums.size(), 3u);
  EXPECT_EQ(cap->requests.size(), 12u);  // one pass at the largest size
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(sums[k].n_correct, expected_correct[k]) << "size " << k + 1;
    EXPECT_EQ(sums[k].mode, "DIV_SE-" + std::to_string(k + 1));
    // 100 in + 20 out on gpt-4 is $0.0042 per call
    EXPECT_EQ(sums[k].total_cost.micros(), static_cast<std::int64_t>(4 * (k + 1) * 4200));
  }
}

INSTANTIATE_TEST_SUITE_P(Tables, SweepByHand,
                         ::testing::Values(
                             // [1,0,1]: the leading pair always wins ties
                             std::make_tuple(std::vector<bool>{true, false, true}, std::vector<std::size_t>{4, 4, 4}),
                             // [0,1,1]: a 1-1 tie still goes to the wrong leading pair
                             std::make_tuple(std::vector<bool>{false, true, true}, std::vector<std::size_t>{0, 0, 4})));

TEST(Sweep, FullSizeEqualsFullRun) {
  auto l = load("aqua-mini/div_se.json");
  auto gw = make_gateway(l.file);
  auto full = run(l.cfg, l.data, gw);
  auto sums = ensemble_size_sweep(l.cfg, {3, 5}, l.data, gw);
  ASSERT_EQ(sums.size(), 2u);
  EXPECT_EQ(to_json(sums[1]).dump(), to_json(full.summary).dump());
  EXPECT_THROW(ensemble_size_sweep(l.cfg, {6}, l.data, gw), ConfigError);
  EXPECT_THROW(ensemble_size_sweep(l.cfg, {}, l.data, gw), ConfigError);
}

TEST(Sweep, IdivReplayAtFullSize) {
  auto l = load("aqua-mini/idiv_se.json");
  auto gw = make_gateway(l.file);
  auto full = run(l.cfg, l.data, gw);
  auto sums = ensemble_size_sweep(l.cfg, {5}, l.data, gw);
  EXPECT_EQ(to_json(sums[0]).dump(), to_json(full.summary).dump());
}

// ---------------------------------------------------------------------------
// error propagation

TEST(Propagation, FixtureMatchesHandLabels) {
  auto l = load("propagation/idiv_se.json");
  auto gw = make_gateway(l.file);
  auto r = run(l.cfg, l.data, gw);
  auto rep = error_propagation_study(l.cfg, r.trials, l.data, gw);
  auto expected = nlohmann::json::parse(support::slurp(support::fixture("propagation/expected.json")));
  EXPECT_EQ(rep.items.size(), expected["qualifying"].get<std::size_t>());
  EXPECT_EQ(rep.propagated, expected["propagated"].get<std::size_t>());
  ASSERT_TRUE(rep.rate);
  EXPECT_EQ(format_fraction(*rep.rate), expected["rate"].get<std::string>());
  for (const auto& it : rep.items)
    EXPECT_EQ(it.propagated ? "propagated" : "not_propagated", expected["labels"][it.item_id].get<std::string>())
        << it.item_id;
  auto j = to_json(rep);
  EXPECT_EQ(j["rate"], "0.300000");
}

TEST(Propagation, NoQualifyingItemsLeavesRateUndefined) {
  auto l = load("propagation/idiv_se.json");
  auto gw = make_gateway(l.file);
  auto r = run(l.cfg, l.data, gw);
  std::vector<TrialRecord> correct_only;
  for (const auto& t : r.trials)
    if (t.correct) correct_only.push_back(t);
  auto rep = error_propagation_study(l.cfg, correct_only, l.data, gw);
  EXPECT_FALSE(rep.rate);
  EXPECT_EQ(to_json(rep)["rate"], "undefined");
}

TEST(Propagation, RejectsNonIdivRecords) {
  auto l = load("aqua-mini/div_se.json");
  auto gw = make_gateway(l.file);
  auto r = run(l.cfg, l.data, gw);
  EXPECT_THROW(error_propagation_study(l.cfg, r.trials, l.data, gw), ConfigError);
}

// ---------------------------------------------------------------------------
// pareto and reports

TEST(Pareto, DominanceExamples) {
  auto pts = pareto_frontier({{"a", Usd::parse("1"), 0.5}, {"b", Usd::parse("2"), 0.7}, {"c", Usd::parse("3"), 0.6}});
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_FALSE(pts[0].dominated);
  EXPECT_FALSE(pts[1].dominated);
  EXPECT_TRUE(pts[2].dominated);
  EXPECT_FALSE(pareto_frontier({{"only", Usd::parse("5"), 0.1}})[0].dominated);
  auto same_cost = pareto_frontier({{"lo", Usd::parse("1"), 0.4}, {"hi", Usd::parse("1"), 0.6}});
  EXPECT_EQ(same_cost[0].label, "hi");
  EXPECT_TRUE(same_cost[1].dominated);
  auto equal = pareto_frontier({{"x", Usd::parse("1"), 0.5}, {"y", Usd::parse("1"), 0.5}});
  EXPECT_FALSE(equal[0].dominated);
  EXPECT_FALSE(equal[1].dominated);
}

TEST(Report, RowsSortedByCostWithFrontier) {
  Summary cheap{"aqua", "COT_ZS", "gpt-4", 10, 5, Usd::parse("0.1"), false, {}};
  Summary mid{"aqua", "IDIV_SE-5", "gpt-4", 10, 8, Usd::parse("0.3"), false, {}};
  Summary pricey{"aqua", "SC-5", "gpt-4", 10, 7, Usd::parse("0.9"), false, {}};
  auto r = summarize_report({pricey, cheap, mid});
  EXPECT_EQ(r.csv,
            "mode,task,model,n_items,accuracy,total_cost_usd,on_frontier\n"
            "COT_ZS,aqua,gpt-4,10,0.500000,0.100000,true\n"
            "IDIV_SE-5,aqua,gpt-4,10,0.800000,0.300000,true\n"
            "SC-5,aqua,gpt-4,10,0.700000,0.900000,false\n");
  EXPECT_EQ(r.document["rows"].size(), 3u);
  EXPECT_EQ(summarize_report({cheap}).document["rows"].size(), 1u);
  EXPECT_THROW(summarize_report({}), ConfigError);
}

TEST(Report, SummaryJsonRoundTrip) {
  Summary s{"gsm8k", "DIV_SE-3", "gpt-3.5-turbo-16k", 4, 3, Usd::parse("0.0123"), true, {{"using algebra", 0.75}}};
  auto back = summary_from_json(to_json(s));
  EXPECT_EQ(to_json(back), to_json(s));
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
}

// ---------------------------------------------------------------------------
// configuration

TEST(Config, ResolvesPathsRelativeToFile) {
  auto f = load_config(support::fixture("aqua-mini/div_se.json"));
  EXPECT_EQ(f.dataset, support::fixture("aqua-mini/aqua.jsonl"));
  EXPECT_EQ(f.backend.mode, BackendMode::Replay);
  EXPECT_EQ(f.price_table().input_rate_per_1k.str(), "0.003000");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  auto base = nlohmann::json::parse(R"({"schema_version":1,"task":"aqua","mode":"COT_ZS"})");
  EXPECT_NO_THROW(config_from_json(base));
  auto typo = base;
  typo["temprature"] = 0.5;
  EXPECT_THROW(config_from_json(typo), ConfigError);
  auto nested = base;
  nested["backend"] = {{"mode", "replay"}, {"transcript", "x"}};
  EXPECT_THROW(config_from_json(nested), ConfigError);
  auto unversioned = base;
  unversioned.erase("schema_version");
  EXPECT_THROW(config_from_json(unversioned), ConfigError);
  auto future = base;
  future["schema_version"] = 2;
  EXPECT_THROW(config_from_json(future), ConfigError);
  auto bad_mode = base;
  bad_mode["mode"] = "DIVSE";
  EXPECT_THROW(config_from_json(bad_mode), ConfigError);
  auto bad_price = base;
  bad_price["prices"] = {{"gpt-4", {{"input_per_1k", "-1"}, {"output_per_1k", "0.06"}}}};
  EXPECT_THROW(config_from_json(bad_price), ConfigError);
  auto unknown_model = base;
  unknown_model["model"] = "mystery";
  EXPECT_THROW(config_from_json(unknown_model).price_table(), ConfigError);
}

TEST(Config, ItemLimitBeyondDatasetIsAnError) {
  auto l = load("aqua-mini/div_se.json");
  l.cfg.item_limit = 9;
  EXPECT_THROW(l.cfg.validate(l.data.size()), ConfigError);
}
