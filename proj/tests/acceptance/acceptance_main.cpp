// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "fixture_manifest.hpp"
#include "moira/adapter_manager.hpp"
#include "moira/clock.hpp"
#include "moira/error.hpp"
#include "moira/eval.hpp"
#include "moira/executor.hpp"
#include "moira/ingest.hpp"
#include "moira/router.hpp"
#include "moira/router_embedding.hpp"
#include "moira/router_lm.hpp"
#include "test_support.hpp"

namespace {

using namespace moira;
using Clock_ = std::chrono::steady_clock;

struct Outcome_ {
  bool ok = true;
  std::ostringstream detail;
  void fail(const std::string& why) {
    if (ok) detail << why;
    ok = false;
  }
};

double seconds_since(Clock_::time_point t0) {
  return std::chrono::duration<double>(Clock_::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------
void routing_oracle(Outcome_& out) {
  const auto t0 = Clock_::now();
  std::mt19937_64 rng(101);
  auto embedder = std::make_shared<HashingEmbedder>();
  SimulatedClock clock;
  int cases = 0, ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Registry reg;
    const int k = 1 + static_cast<int>(rng() % 10);
    std::vector<std::string> metas;
    for (int i = 0; i < k; ++i) {
      // Small vocabulary and short texts, so duplicate descriptions (ties) occur.
      metas.push_back(testing::random_text(rng, 1, 3));
      reg.register_expert(testing::make_profile("e" + std::to_string(i), metas.back(), "x"));
    }
    const auto task = testing::random_text(rng, 1, 6);
    const auto cache = build_cache(reg.catalog(DescriptionStyle::kSimple), DescriptionStyle::kSimple, *embedder);
    const auto got = route_by_similarity(task, DescriptionStyle::kSimple, cache, reg, *embedder, clock);

    std::vector<std::vector<double>> vecs;
    for (const auto& m : metas) vecs.push_back(embedder->embed(m).values);
    const int want = testing::oracle_argmax_cosine(embedder->embed(task).values, vecs);
    for (int i = 0; i < want; ++i) {
      if (metas[static_cast<std::size_t>(i)] == metas[static_cast<std::size_t>(want)]) ++ties;
    }
    if (std::count(metas.begin(), metas.end(), metas[static_cast<std::size_t>(want)]) > 1) ++ties;
    ++cases;
    if (got.expert_id != want) {
      out.fail("case " + std::to_string(trial) + ": router " + std::to_string(got.expert_id) +
               " oracle " + std::to_string(want));
    }
  }
  const double secs = seconds_since(t0);
  if (ties == 0) out.fail("no tie cases were generated");
  if (secs >= 10.0) out.fail("took " + std::to_string(secs) + " s");
  out.detail << cases << " cases, " << ties << " with tied winners, " << secs << " s";
}

// 2 ---------------------------------------------------------------------------
void scale_invariance(Outcome_& out) {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> logc(-6.0, 6.0);
  int cases = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 9, dim = 4 + rng() % 60;
    EmbeddingCache cache, scaled;
    Embedding task;
    for (std::size_t d = 0; d < dim; ++d) task.values.push_back(g(rng));
    for (std::size_t i = 0; i < k; ++i) {
      Embedding e;
      for (std::size_t d = 0; d < dim; ++d) e.values.push_back(g(rng));
      cache.entries.emplace(static_cast<ExpertId>(i), e);
      const double c = std::pow(10.0, logc(rng));
      for (auto& v : e.values) v *= c;
      scaled.entries.emplace(static_cast<ExpertId>(i), e);
    }
    Embedding task_scaled = task;
    const double c = std::pow(10.0, logc(rng));
    for (auto& v : task_scaled.values) v *= c;
    ++cases;
    if (select_by_similarity(task, cache).expert_id !=
        select_by_similarity(task_scaled, scaled).expert_id) {
      out.fail("case " + std::to_string(trial) + " changed its winner");
    }
  }
  out.detail << cases << " cases";
}

// 3 ---------------------------------------------------------------------------
void macro_f1_oracle(Outcome_& out) {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> classes;
    for (int c = 0, k = 1 + static_cast<int>(rng() % 6); c < k; ++c) classes.push_back("k" + std::to_string(c));
    std::vector<Prediction> preds;
    for (int i = 0, n = static_cast<int>(rng() % 50); i < n; ++i) {
      Prediction p{classes[rng() % classes.size()], std::nullopt};
      if (const auto r = rng() % (classes.size() + 1); r < classes.size()) p.predicted = classes[r];
      preds.push_back(p);
    }
    worst = std::max(worst, std::abs(macro_f1(preds, classes).macro_f1 -
                                     testing::oracle_macro_f1(preds, classes)));
  }
  if (worst > 1e-12) out.fail("max deviation " + std::to_string(worst));
  const auto hand = macro_f1({{"A", "A"}, {"A", "B"}, {"B", "B"}, {"B", "B"}}, {"A", "B"}).macro_f1;
  // F1(A) = 2/3 and F1(B) = 0.8, so the mean is 11/15.
  if (std::abs(hand - 11.0 / 15.0) > 1e-9) out.fail("hand case gave " + std::to_string(hand));
  out.detail << "1000 vectors, max |diff| " << worst << "; hand case " << hand;
}

// 4 ---------------------------------------------------------------------------
void suite_f1(Outcome_& out) {
  Registry reg;
  load_registry_json(testing::slurp(testing::fixture("registry.json")), reg);
  SimulatedClock clock;
  RouterOptions opts;
  opts.few_shot = parse_few_shot_json(testing::slurp(testing::fixture("few_shot.json")));
  Router router(reg, std::make_shared<HashingEmbedder>(),
                std::make_shared<RuleBasedMockLm>(
                    RuleBasedMockLm::from_json(testing::slurp(testing::fixture("lm_rules.json")))),
                clock, opts);
  const auto tasks = parse_tasks_jsonl(testing::slurp(testing::fixture("suite.jsonl")));
  const auto classes = reg.categories();
  if (tasks.size() < 30 || classes.size() != 3) out.fail("suite shape");

  const auto emb = run_routing_eval(tasks, Strategy::kEmbeddingSim, DescriptionStyle::kSimple, router);
  const auto lm = run_routing_eval(tasks, Strategy::kPromptLm, DescriptionStyle::kSimple, router);
  if (emb.macro_f1 != 1.0) out.fail("embedding clean F1 " + std::to_string(emb.macro_f1));
  if (lm.macro_f1 != 1.0) out.fail("lm clean F1 " + std::to_string(lm.macro_f1));

  const auto pairs = load_perturbation_pairs(testing::slurp(testing::fixture("perturbations.json")));
  const auto rob = run_robustness_eval(
      pairs, {{Strategy::kEmbeddingSim, DescriptionStyle::kSimple}, {Strategy::kPromptLm, DescriptionStyle::kSimple}},
      router);
  const double emb_p = rob.conditions[0].perturbed.macro_f1;
  const double lm_p = rob.conditions[1].perturbed.macro_f1;
  if (!(emb_p < rob.conditions[0].original.macro_f1)) out.fail("embedding F1 did not drop");
  if (lm_p != 1.0) out.fail("lm perturbed F1 " + std::to_string(lm_p));
  out.detail << tasks.size() << " tasks; clean F1 embedding " << emb.macro_f1 << ", lm "
             << lm.macro_f1 << "; perturbed F1 embedding " << emb_p << ", lm " << lm_p;
}

// 5 ---------------------------------------------------------------------------
struct ServingRun {
  std::size_t swaps = 0;
  std::int64_t swap_ms = 0;
  std::uint64_t peak = 0;
  double amortized = 0;
};

ServingRun serve_alternating(ServingMode mode, bool batching, int n) {
  Registry reg;
  const std::vector<std::uint64_t> sizes{100'000'000, 120'000'000};
  reg.register_expert(testing::make_profile("a", "pour the liquid into the cup", "x", "a", sizes[0]));
  reg.register_expert(testing::make_profile("b", "store the wine in the cabinet", "y", "b", sizes[1]));
  SimulatedClock clock;
  LocalExpertTransport transport;
  for (const auto& p : reg.snapshot()) transport.add(p.endpoint, testing::echo_expert());
  Router router(reg, std::make_shared<HashingEmbedder>(), nullptr, clock);
  AdapterManager adapters({mode, 4'000'000'000ULL, sizes, 5'000'000'000ULL, 9400}, clock);
  adapters.ensure_loaded(0);  // the first task's adapter is already resident
  Executor ex(reg, router, adapters, transport, clock);
  std::vector<TaskInstruction> tasks;
  for (int i = 0; i < n; ++i) {
    tasks.push_back({"t" + std::to_string(i), reg.get_expert(i % 2).meta_simple, std::nullopt});
  }
  const auto report = serving_report(ex.execute_batch(tasks, Strategy::kEmbeddingSim,
                                                      DescriptionStyle::kSimple, batching));
  return {report.swap_count, report.total_swap_ms,
          report.peak_memory_by_mode.empty() ? 0 : report.peak_memory_by_mode.begin()->second,
          report.amortized_ms_per_task};
}

void serving_cost(Outcome_& out) {
  const auto t0 = Clock_::now();
  const std::uint64_t backbone = 4'000'000'000ULL;
  const auto aim = serve_alternating(ServingMode::kAllInMemory, false, 10);
  const auto dyn = serve_alternating(ServingMode::kDynamicLoad, false, 10);
  const auto bat = serve_alternating(ServingMode::kDynamicLoad, true, 10);

  if (aim.swaps != 0 || aim.swap_ms != 0) out.fail("all-in-memory swapped");
  if (aim.peak != backbone + 100'000'000 + 120'000'000) out.fail("all-in-memory memory");
  if (dyn.peak > backbone + 120'000'000) out.fail("dynamic memory above one adapter");
  if (dyn.swaps != 9) out.fail("interleaved swaps " + std::to_string(dyn.swaps));
  if (bat.swaps != 1) out.fail("batched swaps " + std::to_string(bat.swaps));
  if (dyn.swap_ms != 9 * 9400 || bat.swap_ms != 9400) out.fail("swap latency accounting");
  if (dyn.amortized != 8460.0 || bat.amortized != 940.0) out.fail("amortized cost");
  const double secs = seconds_since(t0);
  if (secs >= 1.0) out.fail("took " + std::to_string(secs) + " s");
  out.detail << "swaps " << dyn.swaps << " -> " << bat.swaps << ", amortized "
             << dyn.amortized << " -> " << bat.amortized << " ms/task, memory all-in "
             << aim.peak << " / dynamic peak " << dyn.peak << ", " << secs << " s";
}

// 6 ---------------------------------------------------------------------------
void execution_order(Outcome_& out) {
  std::mt19937_64 rng(606);
  const char* metas[] = {"pour the liquid into the cup", "store the wine in the cabinet",
                         "pick the pepper off the placemat"};
  int executions = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TaskInstruction> tasks;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) tasks.push_back({"t" + std::to_string(i), metas[rng() % 3], std::nullopt});
    const auto mode = rng() % 2 ? ServingMode::kDynamicLoad : ServingMode::kAllInMemory;

    std::multiset<std::tuple<std::string, int, std::string, double>> seen[2];
    for (int batching = 0; batching < 2; ++batching) {
      Registry reg;
      for (int i = 0; i < 3; ++i) {
        reg.register_expert(testing::make_profile("e" + std::to_string(i), metas[i], "x"));
      }
      SimulatedClock clock;
      LocalExpertTransport transport;
      for (int i = 0; i < 3; ++i) {
        transport.add(reg.get_expert(i).endpoint, [i, &clock](const nlohmann::json&) {
          clock.advance(5);
          return nlohmann::json{{"status", i == 2 ? "failure" : "success"},
                                {"metric_name", "mse"},
                                {"metric_value", 0.1 * i}};
        });
      }
      Router router(reg, std::make_shared<HashingEmbedder>(), nullptr, clock);
      AdapterManager adapters({mode, 1000, {10, 20, 30}, 2000, 9400}, clock);
      Executor ex(reg, router, adapters, transport, clock,
                  ExecutorOptions{1 + static_cast<std::size_t>(rng() % 3)});
      std::vector<TraceEvent> events;
      std::mutex m;
      ex.set_trace_observer([&](const TraceEvent& e) {
        std::lock_guard lock(m);
        events.push_back(e);
      });
      const auto results = ex.execute_batch(tasks, Strategy::kEmbeddingSim,
                                            DescriptionStyle::kSimple, batching == 1);
      ++executions;

      std::map<std::string, std::vector<TracePhase>> phases;
      for (const auto& e : events) phases[e.task_id].push_back(e.phase);
      for (const auto& t : tasks) {
        auto p = phases[t.task_id];
        if (!p.empty() && p[0] == TracePhase::kRouted) p.erase(p.begin());
        else { out.fail(t.task_id + " not routed first"); continue; }
        if (!p.empty() && p[0] == TracePhase::kSwapCompleted) p.erase(p.begin());
        if (p != std::vector<TracePhase>{TracePhase::kDispatchStarted, TracePhase::kDispatchCompleted}) {
          out.fail("trial " + std::to_string(trial) + " " + t.task_id + " out of order");
        }
      }
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.task_id != tasks[i].task_id) out.fail("results out of input order");
        if (!r.outcome) { out.fail(r.task_id + " has no outcome"); continue; }
        seen[batching].insert({r.task_id, r.expert_id.value_or(-1),
                               r.outcome->status == OutcomeStatus::kSuccess ? "success" : "failure",
                               r.outcome->metric_value});
      }
    }
    if (seen[0] != seen[1]) out.fail("trial " + std::to_string(trial) + " multisets differ");
  }
  out.detail << executions << " batch executions over 100 randomized workloads";
}

// 7 ---------------------------------------------------------------------------
void parser_fixtures(Outcome_& out) {
  const auto bddl = testing::check_bddl_fixtures(testing::fixture("bddl"));
  const auto jsonl = testing::check_jsonl_fixtures(testing::fixture("jsonl"));
  for (const auto& f : bddl.failures) out.fail(f);
  for (const auto& f : jsonl.failures) out.fail(f);
  if (bddl.checked < 10 || jsonl.checked < 10) out.fail("fewer than 10 fixtures of a kind");
  out.detail << bddl.checked << " bddl (" << bddl.round_trips << " round-trips), " << jsonl.checked
             << " jsonl";
}

// 8 ---------------------------------------------------------------------------
void lm_parse_matrix(Outcome_& out) {
  int cases = 0;
  auto expect = [&](const std::string& text, std::size_t k, std::optional<ExpertId> want) {
    ++cases;
    std::optional<ExpertId> got;
    try {
      got = parse_expert_index(text, k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnparsableResponse) {
        out.fail("wrong error for '" + text + "'");
        return;
      }
    }
    if (got != want) out.fail("K=" + std::to_string(k) + " '" + text + "'");
  };
  for (std::size_t k : {1u, 3u, 10u}) {
    for (std::size_t i = 0; i < k; ++i) {
      const auto id = static_cast<ExpertId>(i);
      const auto s = std::to_string(i);
      expect("Output: " + s, k, id);
      expect("The task involves pouring, which fits expert " + s + ".\nOutput: " + s, k, id);
      expect(s, k, id);
      expect(" " + s + "\n", k, id);
    }
    const auto over = std::to_string(k);
    expect("Output: " + over, k, std::nullopt);
    expect("Reasoning first.\nOutput: " + over, k, std::nullopt);
    expect(over, k, std::nullopt);
    expect("Output: -1", k, std::nullopt);
    expect("I am not sure which expert fits this task.", k, std::nullopt);
    expect("Output: banana", k, std::nullopt);
    expect("", k, std::nullopt);
  }
  out.detail << cases << " cases over K in {1, 3, 10}";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome_&)>>> criteria = {
      {"routing-oracle equivalence", routing_oracle},
      {"argmax scale invariance", scale_invariance},
      {"macro-F1 oracle equivalence", macro_f1_oracle},
      {"suite F1 and perturbation robustness", suite_f1},
      {"serving cost model", serving_cost},
      {"execution ordering and batching equivalence", execution_order},
      {"parser fixtures", parser_fixtures},
      {"LM response parsing matrix", lm_parse_matrix},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome_ out;
    try {
      run(out);
    } catch (const std::exception& e) {
      out.fail(std::string("threw: ") + e.what());
    }
    std::cout << (out.ok ? "PASS" : "FAIL") << "  " << name << ": " << out.detail.str() << '\n';
    if (!out.ok) ++failed;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << '/' << criteria.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
