// moira_cli: command-line front end for the router/orchestrator.
//
// Exit codes: 0 ok, 1 usage, 2 validation/input error, 3 transport/routing
// error, 4 threshold not met (--min-f1).

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "moira/error.hpp"
#include "moira/eval.hpp"
#include "moira/ingest.hpp"
#include "moira/service.hpp"

namespace {

using nlohmann::json;
using namespace moira;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitTransport = 3;
constexpr int kExitThreshold = 4;

struct Globals {
  std::string config_path;
  std::string registry_path;
  std::string format = "json";
  std::uint64_t seed = 0;
};

int exit_code_for(const Error& e) {
  return classify(e.code()) == ErrorClass::kTransport ? kExitTransport : kExitValidation;
}

void print_error(const Error& e, const std::string& source = {}) {
  json err{{"code", to_string(e.code())}, {"message", e.what()}};
  if (!source.empty()) err["source"] = source;
  std::cerr << json{{"error", err}}.dump() << '\n';
}

void emit(const Globals& g, const json& body, const std::string& text = {}) {
  if (g.format == "text" && !text.empty()) {
    std::cout << text;
  } else {
    std::cout << body.dump(2) << '\n';
  }
}

/// --config, then $MOIRA_CONFIG, then ./moira.conf; defaults otherwise.
std::string config_path(const Globals& g) {
  if (!g.config_path.empty()) return g.config_path;
  if (const char* env = std::getenv("MOIRA_CONFIG"); env && *env) return env;
  if (std::filesystem::exists("moira.conf")) return "moira.conf";
  return {};
}

ServiceConfig load_config(const Globals& g) {
  ServiceConfig cfg;
  if (const auto path = config_path(g); !path.empty()) {
    cfg = load_service_config(path);
  } else {
    apply_env_overrides(cfg);
  }
  if (!g.registry_path.empty()) cfg.registry_path = std::filesystem::path(g.registry_path);
  return cfg;
}

/// In-process experts answering every registered endpoint with a success.
std::shared_ptr<LocalExpertTransport> simulated_experts(const ServiceConfig& cfg) {
  auto transport = std::make_shared<LocalExpertTransport>();
  if (!cfg.registry_path) return transport;
  Registry reg;
  load_registry_json(read_file(*cfg.registry_path), reg);
  for (const auto& p : reg.snapshot()) {
    transport->add(p.endpoint, [id = p.expert_id](const json& req) {
      return json{{"status", "success"},
                  {"metric_name", "mse"},
                  {"metric_value", 0.01 * (id + 1)},
                  {"trajectory_b64", base64_encode(req.value("task_id", ""))}};
    });
  }
  return transport;
}

std::vector<TaskInstruction> read_tasks(const std::string& path) {
  return parse_tasks_jsonl(read_file(path));
}

Service* g_running = nullptr;

extern "C" void on_signal(int) {
  if (g_running) g_running->stop();
}

int cmd_serve(const Globals& g, const std::string& listen_override) {
  auto cfg = load_config(g);
  if (!listen_override.empty()) cfg.listen = listen_override;
  const auto colon = cfg.listen.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::kValidation, "listen address must be host:port, got '" + cfg.listen + "'");
  }
  const auto host = cfg.listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(cfg.listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kValidation, "bad port in '" + cfg.listen + "'");
  }
  auto svc = Service::create(cfg);
  const int bound = svc->bind(host, port);
  std::cerr << "moira listening on " << host << ':' << bound << " with "
            << svc->registry().size() << " expert(s)\n";
  g_running = svc.get();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  svc->listen();
  g_running = nullptr;
  return kExitOk;
}

int cmd_route(const Globals& g, const std::string& text, const std::string& strategy,
              const std::string& style) {
  const auto cfg = load_config(g);
  auto svc = Service::create(cfg);
  const auto d = svc->router().route(text, strategy.empty() ? cfg.strategy : parse_strategy(strategy),
                                     style.empty() ? cfg.style : parse_style(style));
  json body = d;
  body["expert_name"] = svc->registry().get_expert(d.expert_id).name;
  emit(g, body);
  return kExitOk;
}

int cmd_execute(const Globals& g, const std::string& text, const std::string& task_id,
                const std::string& strategy, const std::string& style, bool simulate) {
  auto cfg = load_config(g);
  ServiceDeps deps;
  if (simulate) {
    cfg.simulated_clock = true;
    deps.transport = simulated_experts(cfg);
  }
  auto svc = Service::create(cfg, deps);
  const auto results = svc->executor().execute_batch(
      {{task_id, text, std::nullopt}}, strategy.empty() ? cfg.strategy : parse_strategy(strategy),
      style.empty() ? cfg.style : parse_style(style), false);
  const auto& r = results.front();
  emit(g, r);
  if (r.error) return classify(r.error->code) == ErrorClass::kTransport ? kExitTransport : kExitValidation;
  return kExitOk;
}

int cmd_ingest_jsonl(const Globals& g, const std::string& path, const JsonlFieldMap& fields) {
  const auto tasks = parse_tasks_jsonl(read_file(path), fields);
  emit(g, json{{"tasks", tasks}, {"count", tasks.size()}});
  return kExitOk;
}

int cmd_ingest_bddl(const Globals& g, const std::vector<std::string>& paths) {
  json out = json::array();
  for (const auto& p : paths) {
    try {
      out.push_back(parse_bddl(read_file(p), std::filesystem::path(p).stem().string()));
    } catch (const Error& e) {
      print_error(e, p);
      return exit_code_for(e);
    }
  }
  emit(g, json{{"tasks", out}, {"count", out.size()}});
  return kExitOk;
}

int cmd_eval_route(const Globals& g, const std::string& tasks_path, const std::string& strategy,
                   const std::string& style, std::optional<double> min_f1) {
  const auto cfg = load_config(g);
  auto svc = Service::create(cfg);
  const auto tasks = read_tasks(tasks_path);
  const auto report = run_routing_eval(tasks, strategy.empty() ? cfg.strategy : parse_strategy(strategy),
                                       style.empty() ? cfg.style : parse_style(style), svc->router());
  emit(g, report, render_text(report));
  if (min_f1 && report.macro_f1 < *min_f1) {
    std::cerr << "macro_f1 " << report.macro_f1 << " is below --min-f1 " << *min_f1 << '\n';
    return kExitThreshold;
  }
  return kExitOk;
}

int cmd_eval_robustness(const Globals& g, const std::string& pairs_path,
                        const std::vector<std::string>& strategies,
                        const std::vector<std::string>& styles, std::optional<double> min_f1) {
  const auto cfg = load_config(g);
  auto svc = Service::create(cfg);
  const auto pairs = load_perturbation_pairs(read_file(pairs_path));
  std::vector<RoutingCondition> conditions;
  for (const auto& st : strategies) {
    for (const auto& sy : styles) conditions.push_back({parse_strategy(st), parse_style(sy)});
  }
  const auto report = run_robustness_eval(pairs, conditions, svc->router());
  emit(g, report, render_text(report));
  if (min_f1) {
    for (const auto& c : report.conditions) {
      if (c.perturbed.macro_f1 < *min_f1) {
        std::cerr << to_string(c.condition.strategy) << '/' << to_string(c.condition.style)
                  << " perturbed macro_f1 " << c.perturbed.macro_f1 << " is below --min-f1 "
                  << *min_f1 << '\n';
        return kExitThreshold;
      }
    }
  }
  return kExitOk;
}

/// Replays one synthetic workload under both serving modes, with and without
/// batching, on a simulated clock with in-process experts.
int cmd_eval_serving(const Globals& g, int n, const std::string& pattern,
                     std::optional<std::uint64_t> budget) {
  if (n <= 0) throw Error(ErrorCode::kValidation, "--tasks-count must be positive");
  auto cfg = load_config(g);
  cfg.simulated_clock = true;
  if (budget) cfg.memory_budget_bytes = *budget;
  Registry reg;
  if (cfg.registry_path) load_registry_json(read_file(*cfg.registry_path), reg);
  const auto experts = reg.snapshot();
  if (experts.size() < 2) throw Error(ErrorCode::kValidation, "eval serving needs at least two experts");

  std::mt19937_64 rng(g.seed);
  std::vector<TaskInstruction> tasks;
  std::vector<ExpertId> intended;
  for (int i = 0; i < n; ++i) {
    ExpertId id = 0;
    if (pattern == "alternating") {
      id = i % 2;
    } else if (pattern == "random") {
      id = static_cast<ExpertId>(rng() % experts.size());
    } else {
      throw Error(ErrorCode::kValidation, "--pattern must be alternating or random");
    }
    intended.push_back(id);
    tasks.push_back({"task-" + std::to_string(i), experts[static_cast<std::size_t>(id)].meta_simple,
                     std::nullopt});
  }

  json runs = json::array();
  std::string text;
  for (auto mode : {ServingMode::kAllInMemory, ServingMode::kDynamicLoad}) {
    for (bool batching : {false, true}) {
      json run{{"mode", to_string(mode)}, {"batching", batching}};
      auto c = cfg;
      c.mode = mode;
      // The first task's adapter starts resident, so only switches are counted.
      c.initial_active = intended.front();
      c.event_log_path.reset();
      ServiceDeps deps;
      deps.transport = simulated_experts(cfg);
      try {
        auto svc = Service::create(c, deps);
        const auto results = svc->executor().execute_batch(tasks, Strategy::kEmbeddingSim,
                                                           DescriptionStyle::kSimple, batching);
        const auto report = serving_report(results);
        run["report"] = report;
        run["state"] = svc->adapters().state();
        text += std::string(to_string(mode)) + (batching ? ", batched\n" : ", interleaved\n") +
                render_text(report) + '\n';
      } catch (const Error& e) {
        run["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
        text += std::string(to_string(mode)) + ": " + e.what() + "\n\n";
      }
      runs.push_back(std::move(run));
    }
  }
  emit(g, json{{"tasks", n}, {"pattern", pattern}, {"seed", g.seed}, {"runs", runs}}, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoIRA router and orchestrator"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Service config file")->check(CLI::ExistingFile);
  app.add_option("--registry", g.registry_path, "Registry snapshot JSON (overrides config)")
      ->check(CLI::ExistingFile);
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "text"}));
  app.add_option("--seed", g.seed, "Seed for generated workloads");

  std::string listen;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--listen", listen, "host:port (overrides config)");

  std::string text, task_id = "cli-task", strategy, style;
  bool simulate = false;
  auto* route = app.add_subcommand("route", "Route one task without executing it");
  route->add_option("--text", text, "Task instruction")->required();
  route->add_option("--strategy", strategy)->check(CLI::IsMember({"embedding", "lm"}));
  route->add_option("--style", style)->check(CLI::IsMember({"simple", "abstract"}));

  auto* execute = app.add_subcommand("execute", "Route, load and dispatch one task");
  execute->add_option("--text", text, "Task instruction")->required();
  execute->add_option("--task-id", task_id);
  execute->add_option("--strategy", strategy)->check(CLI::IsMember({"embedding", "lm"}));
  execute->add_option("--style", style)->check(CLI::IsMember({"simple", "abstract"}));
  execute->add_flag("--simulate", simulate, "Use in-process experts and a simulated clock");

  auto* ingest = app.add_subcommand("ingest", "Parse task sources");
  ingest->require_subcommand(1);
  std::string jsonl_path;
  JsonlFieldMap fields;
  auto* ingest_jsonl = ingest->add_subcommand("jsonl", "tasks.jsonl metadata");
  ingest_jsonl->add_option("file", jsonl_path)->required()->check(CLI::ExistingFile);
  ingest_jsonl->add_option("--id-field", fields.task_id);
  ingest_jsonl->add_option("--text-field", fields.text);
  ingest_jsonl->add_option("--label-field", fields.label);
  std::vector<std::string> bddl_paths;
  auto* ingest_bddl = ingest->add_subcommand("bddl", ".bddl task definitions");
  ingest_bddl->add_option("files", bddl_paths)->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluation runs");
  eval->require_subcommand(1);
  std::string tasks_path, pairs_path;
  std::optional<double> min_f1;
  auto* eval_route = eval->add_subcommand("route", "Routing macro-F1 on labeled tasks");
  eval_route->add_option("--tasks", tasks_path)->required()->check(CLI::ExistingFile);
  eval_route->add_option("--strategy", strategy)->check(CLI::IsMember({"embedding", "lm"}));
  eval_route->add_option("--style", style)->check(CLI::IsMember({"simple", "abstract"}));
  eval_route->add_option("--min-f1", min_f1, "Exit 4 when macro-F1 is lower");

  std::vector<std::string> strategies{"embedding", "lm"}, styles{"simple", "abstract"};
  auto* eval_robust = eval->add_subcommand("robustness", "Original vs. rephrased routing F1");
  eval_robust->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  eval_robust->add_option("--strategies", strategies)->check(CLI::IsMember({"embedding", "lm"}));
  eval_robust->add_option("--styles", styles)->check(CLI::IsMember({"simple", "abstract"}));
  eval_robust->add_option("--min-f1", min_f1, "Exit 4 when any perturbed macro-F1 is lower");

  int n_tasks = 10;
  std::string pattern = "alternating";
  std::optional<std::uint64_t> budget;
  auto* eval_serving = eval->add_subcommand("serving", "Swap and memory cost per serving mode");
  eval_serving->add_option("--tasks-count", n_tasks, "Workload size");
  eval_serving->add_option("--pattern", pattern, "alternating | random");
  eval_serving->add_option("--memory-budget", budget, "Override serving.memory_budget_bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve) return cmd_serve(g, listen);
    if (*route) return cmd_route(g, text, strategy, style);
    if (*execute) return cmd_execute(g, text, task_id, strategy, style, simulate);
    if (*ingest_jsonl) return cmd_ingest_jsonl(g, jsonl_path, fields);
    if (*ingest_bddl) return cmd_ingest_bddl(g, bddl_paths);
    if (*eval_route) return cmd_eval_route(g, tasks_path, strategy, style, min_f1);
    if (*eval_robust) return cmd_eval_robustness(g, pairs_path, strategies, styles, min_f1);
    if (*eval_serving) return cmd_eval_serving(g, n_tasks, pattern, budget);
  } catch (const Error& e) {
    print_error(e);
    return exit_code_for(e);
  }
  return kExitUsage;
}
