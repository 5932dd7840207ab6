#include <deque>
#include <random>
#include <set>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "moira/clock.hpp"
#include "moira/error.hpp"
#include "moira/router.hpp"
#include "moira/router_lm.hpp"
#include "moira/uri.hpp"
#include "test_support.hpp"

namespace moira {
namespace {

using testing::code_of;
using testing::make_profile;

/// Replays canned answers and records prompts.
class ScriptedLm final : public LmClient {
 public:
  explicit ScriptedLm(std::deque<std::string> answers) : answers_(std::move(answers)) {}
  LmResponse complete(const LmRequest& request) override {
    prompts.push_back(request.prompt);
    if (answers_.empty()) throw Error(ErrorCode::kTransport, "script exhausted");
    auto a = answers_.front();
    answers_.pop_front();
    return {a};
  }
  std::vector<std::string> prompts;

 private:
  std::deque<std::string> answers_;
};

Registry& three_experts(Registry& reg) {
  reg.register_expert(make_profile("arms", "pour the liquid into the cup", "bimanual tabletop"));
  reg.register_expert(make_profile("waist", "store the wine in the cabinet", "bends at the waist"));
  reg.register_expert(make_profile("upper", "pick the pepper off the placemat", "whole upper body"));
  return reg;
}

TEST(Prompt, ListsExpertsAndChoices) {
  const Catalog cat{{0, "alpha"}, {1, "beta"}, {2, "gamma"}};
  const auto p = build_prompt("pick up the black bowl", cat, {});
  EXPECT_NE(p.find("ID 0: alpha\nID 1: beta\nID 2: gamma"), std::string::npos);
  EXPECT_NE(p.find("Output: 0, 1, or 2"), std::string::npos);
  EXPECT_NE(p.find("(none)"), std::string::npos);
  EXPECT_NE(p.find("Task: pick up the black bowl\nReasoning:"), std::string::npos);
  EXPECT_EQ(p, build_prompt("pick up the black bowl", cat, {}));
}

TEST(Prompt, RenderChoices) {
  EXPECT_EQ(render_choices(1), "0");
  EXPECT_EQ(render_choices(2), "0 or 1");
  EXPECT_EQ(render_choices(3), "0, 1, or 2");
  EXPECT_EQ(render_choices(5), "0, 1, 2, 3, or 4");
}

TEST(Prompt, FewShotExamplesAreRendered) {
  const Catalog cat{{0, "alpha"}, {1, "beta"}};
  const auto p = build_prompt("t", cat, {{"first task", 1}, {"second task", 0}});
  EXPECT_NE(p.find("Task: first task\nOutput: 1\n\nTask: second task\nOutput: 0"),
            std::string::npos);
  EXPECT_EQ(p.find("(none)"), std::string::npos);
}

TEST(Prompt, FewShotIdOutOfRangeIsRejected) {
  const Catalog cat{{0, "a"}, {1, "b"}, {2, "c"}};
  EXPECT_EQ(code_of([&] { build_prompt("t", cat, {{"x", 7}}); }), ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { build_prompt("t", cat, {{"x", -1}}); }), ErrorCode::kValidation);
  EXPECT_EQ(code_of([&] { build_prompt("t", {}, {}); }), ErrorCode::kEmptyPool);
}

TEST(Prompt, SlotLikeTextIsNotExpanded) {
  const Catalog cat{{0, "uses {{task}} literally"}};
  const auto p = build_prompt("the {{experts}} task", cat, {});
  EXPECT_NE(p.find("ID 0: uses {{task}} literally"), std::string::npos);
  EXPECT_NE(p.find("Task: the {{experts}} task"), std::string::npos);
}

TEST(Prompt, DistinctTasksGiveDistinctPrompts) {
  std::mt19937_64 rng(5);
  const Catalog cat{{0, "alpha"}, {1, "beta"}};
  std::set<std::string> texts;
  std::set<std::string> prompts;
  for (int i = 0; i < 500; ++i) {
    const auto t = testing::random_text(rng);
    if (texts.insert(t).second) prompts.insert(build_prompt(t, cat, {}));
  }
  EXPECT_EQ(prompts.size(), texts.size());
}

TEST(Prompt, TemplateValidation) {
  EXPECT_EQ(code_of([] { PromptTemplate("{{experts}} {{task}}"); }), ErrorCode::kValidation);
  EXPECT_EQ(code_of([] { PromptTemplate("{{task}} {{examples}} {{experts}}"); }),
            ErrorCode::kValidation);
  const PromptTemplate custom("E={{experts}}|X={{examples}}|T={{task}}|C={{choices}}");
  EXPECT_EQ(build_prompt("go", {{0, "a"}, {1, "b"}}, {}, custom),
            "E=ID 0: a\nID 1: b|X=(none)|T=go|C=0 or 1");
}

TEST(Prompt, BundledTemplateFileMatchesBuiltin) {
  const PromptTemplate file(testing::slurp(testing::fixture("prompt_template.txt")));
  const Catalog cat{{0, "a"}, {1, "b"}, {2, "c"}};
  EXPECT_EQ(build_prompt("t", cat, {}, file), build_prompt("t", cat, {}));
}

struct ParseCase {
  std::string text;
  std::size_t k;
  std::optional<ExpertId> expected;
};

TEST(ParseIndex, Matrix) {
  const std::vector<ParseCase> cases = {
      {"Output: 0", 3, 0},
      {"Output: 2", 3, 2},
      {"Output:2", 3, 2},
      {"The pour rule fits.\nOutput: 1", 3, 1},
      {"Output: 1\nOutput: 2", 3, 2},
      {"Output: 1.", 3, 1},
      {"1", 3, 1},
      {"  2 \n", 3, 2},
      {"Output: 7", 10, 7},
      {"Output: 9", 10, 9},
      {"Output: 0", 1, 0},
      {"Output: 3", 3, std::nullopt},
      {"Output: -1", 3, std::nullopt},
      {"Output: two", 3, std::nullopt},
      {"", 3, std::nullopt},
      {"I am not sure which expert fits this task.", 3, std::nullopt},
      {"3", 3, std::nullopt},
      {"expert 1", 3, std::nullopt},
      {"Output: 1", 1, std::nullopt},
  };
  for (const auto& c : cases) {
    if (c.expected) {
      EXPECT_EQ(parse_expert_index(c.text, c.k), *c.expected) << c.text;
    } else {
      EXPECT_EQ(code_of([&] { parse_expert_index(c.text, c.k); }),
                ErrorCode::kUnparsableResponse)
          << c.text;
    }
  }
  EXPECT_EQ(code_of([] { parse_expert_index("0", 0); }), ErrorCode::kValidation);
}

TEST(LmRouting, UsesParsedIndex) {
  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  ScriptedLm lm({"Reasoning...\nOutput: 0"});
  const auto d = route_by_lm("pour water", DescriptionStyle::kSimple, {}, lm, reg, clock);
  EXPECT_EQ(d.expert_id, 0);
  EXPECT_EQ(d.strategy, Strategy::kPromptLm);
  ASSERT_EQ(d.scores.size(), 3u);
  EXPECT_EQ(d.scores[0].score, 1.0);
  EXPECT_EQ(d.scores[1].score, 0.0);
  EXPECT_EQ(lm.prompts.size(), 1u);
}

TEST(LmRouting, RetriesOnceThenFails) {
  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  ScriptedLm twice({"I am not sure", "I am not sure", "Output: 1"});
  EXPECT_EQ(code_of([&] {
              route_by_lm("pour", DescriptionStyle::kSimple, {}, twice, reg, clock);
            }),
            ErrorCode::kRoutingFailed);
  EXPECT_EQ(twice.prompts.size(), 2u);

  ScriptedLm recovers({"hmm", "Output: 1"});
  EXPECT_EQ(route_by_lm("pour", DescriptionStyle::kSimple, {}, recovers, reg, clock).expert_id, 1);
}

TEST(LmRouting, ClientFailureIsRoutingTransport) {
  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  ScriptedLm dead({});
  EXPECT_EQ(code_of([&] { route_by_lm("pour", DescriptionStyle::kSimple, {}, dead, reg, clock); }),
            ErrorCode::kRoutingTransport);
}

TEST(LmRouting, EmptyTextAndPool) {
  Registry reg;
  SimulatedClock clock;
  ScriptedLm lm({"0"});
  EXPECT_EQ(code_of([&] { route_by_lm("x", DescriptionStyle::kSimple, {}, lm, reg, clock); }),
            ErrorCode::kEmptyPool);
  three_experts(reg);
  EXPECT_EQ(code_of([&] { route_by_lm("  ", DescriptionStyle::kSimple, {}, lm, reg, clock); }),
            ErrorCode::kValidation);
  EXPECT_TRUE(lm.prompts.empty());
}

TEST(LmRouting, PromptUsesRequestedStyle) {
  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  ScriptedLm lm({"Output: 2", "Output: 2"});
  route_by_lm("t", DescriptionStyle::kSimple, {}, lm, reg, clock);
  route_by_lm("t", DescriptionStyle::kAbstract, {}, lm, reg, clock);
  EXPECT_NE(lm.prompts[0].find("ID 1: store the wine in the cabinet"), std::string::npos);
  EXPECT_NE(lm.prompts[1].find("ID 1: bends at the waist"), std::string::npos);
}

TEST(MockLm, KeywordRules) {
  RuleBasedMockLm lm({{"bowl", 1}, {"pour", 0}});
  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  EXPECT_EQ(route_by_lm("pick up the black bowl", DescriptionStyle::kSimple, {}, lm, reg, clock)
                .expert_id,
            1);
  // Whole-word match only: "bowls" is not "bowl".
  EXPECT_EQ(lm.complete({"Task: move the bowls"}).text, "I am not sure which expert fits this task.");
  EXPECT_EQ(code_of([&] {
              route_by_lm("wipe the table", DescriptionStyle::kSimple, {}, lm, reg, clock);
            }),
            ErrorCode::kRoutingFailed);
}

TEST(MockLm, ReadsOnlyTheQueryTask) {
  // Few-shot examples mention "pour" but the query task does not.
  RuleBasedMockLm lm({{"pour", 0}, {"wine", 1}});
  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  const std::vector<FewShotExample> shots{{"pour the tea", 0}};
  EXPECT_EQ(route_by_lm("store the wine", DescriptionStyle::kSimple, shots, lm, reg, clock)
                .expert_id,
            1);
}

TEST(MockLm, FromJson) {
  auto lm = RuleBasedMockLm::from_json(testing::slurp(testing::fixture("lm_rules.json")));
  EXPECT_FALSE(lm.rules().empty());
  EXPECT_EQ(code_of([] { RuleBasedMockLm::from_json("{"); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([] { RuleBasedMockLm::from_json("{}"); }), ErrorCode::kSchema);
  EXPECT_EQ(code_of([] { RuleBasedMockLm::from_json(R"({"rules":[{"keyword":"a"}]})"); }),
            ErrorCode::kSchema);
}

TEST(FewShot, ParseJson) {
  const auto shots = parse_few_shot_json(testing::slurp(testing::fixture("few_shot.json")));
  ASSERT_EQ(shots.size(), 3u);
  EXPECT_EQ(shots[1].expert_id, 1);
  EXPECT_EQ(code_of([] { parse_few_shot_json("[{\"task_text\": 1}]"); }), ErrorCode::kSchema);
  EXPECT_EQ(code_of([] { parse_few_shot_json("nope"); }), ErrorCode::kParse);
}

TEST(RemoteLm, RoundTripAndProtocolErrors) {
  httplib::Server server;
  nlohmann::json last_request;
  server.Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
    last_request = nlohmann::json::parse(req.body);
    res.set_content(R"({"text": "Output: 2"})", "application/json");
  });
  server.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"completion": "Output: 2"})", "application/json");
  });
  server.Post("/down", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  RemoteLmClient ok(parse_uri(base + "/ok"));
  EXPECT_EQ(ok.complete({"hello", 64, 0.0}).text, "Output: 2");
  EXPECT_EQ(last_request["prompt"], "hello");
  EXPECT_EQ(last_request["max_tokens"], 64);
  EXPECT_EQ(last_request["temperature"], 0.0);

  RemoteLmClient bad(parse_uri(base + "/bad"));
  EXPECT_EQ(code_of([&] { bad.complete({"x"}); }), ErrorCode::kProtocol);

  Registry reg;
  three_experts(reg);
  SimulatedClock clock;
  RemoteLmClient down(parse_uri(base + "/down"));
  EXPECT_EQ(code_of([&] { route_by_lm("pour", DescriptionStyle::kSimple, {}, down, reg, clock); }),
            ErrorCode::kRoutingTransport);

  server.stop();
  t.join();
}

}  // namespace
}  // namespace moira
