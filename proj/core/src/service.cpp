#include "moira/service.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "moira/error.hpp"
#include "moira/eval.hpp"

namespace moira {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || end != value.data() + value.size()) {
    throw Error(ErrorCode::kValidation,
                "config key '" + std::string(key) + "' expects a number, got '" +
                    std::string(value) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string s(value);
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kValidation,
              "config key '" + std::string(key) + "' expects a real number");
}

HttpReply error_reply(const Error& e) {
  return {http_status(e.code()),
          json{{"schema_version", kSchemaVersion},
               {"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}};
}

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("request body is not JSON: ") + e.what());
  }
}

void require_object(const json& body) {
  if (!body.is_object()) throw Error(ErrorCode::kValidation, "request body must be a JSON object");
}

std::string string_field(const json& body, const char* key, std::string fallback) {
  const auto it = body.find(key);
  if (it == body.end() || it->is_null()) return fallback;
  if (!it->is_string()) {
    throw Error(ErrorCode::kValidation, std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

HttpReply with_schema(json body, int status = 200) {
  body["schema_version"] = kSchemaVersion;
  return {status, std::move(body)};
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kDuplicateName: return 409;
    case ErrorCode::kBudgetExceeded: return 409;
    case ErrorCode::kDispatchTransport:
    case ErrorCode::kRoutingTransport:
    case ErrorCode::kTransport: return 504;
    default: break;
  }
  return classify(code) == ErrorClass::kTransport ? 502 : 400;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kValidation, "cannot read file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ServiceConfig parse_service_config(std::string_view text, const std::filesystem::path& base_dir) {
  ServiceConfig cfg;
  auto resolve = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kValidation,
                  "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));

    if (key == "listen") cfg.listen = value;
    else if (key == "registry") cfg.registry_path = resolve(value);
    else if (key == "strategy") cfg.strategy = parse_strategy(value);
    else if (key == "style") cfg.style = parse_style(value);
    else if (key == "serving.mode") cfg.mode = parse_serving_mode(value);
    else if (key == "serving.backbone_bytes") cfg.backbone_bytes = parse_number<std::uint64_t>(key, value);
    else if (key == "serving.memory_budget_bytes") cfg.memory_budget_bytes = parse_number<std::uint64_t>(key, value);
    else if (key == "serving.swap_latency_ms") cfg.swap_latency_ms = parse_number<std::int64_t>(key, value);
    else if (key == "serving.clock") {
      if (value != "wall" && value != "simulated") {
        throw Error(ErrorCode::kValidation, "serving.clock must be 'wall' or 'simulated'");
      }
      cfg.simulated_clock = value == "simulated";
    } else if (key == "serving.initial_active") cfg.initial_active = parse_number<ExpertId>(key, value);
    else if (key == "prompt_template") cfg.prompt_template_path = resolve(value);
    else if (key == "few_shot") cfg.few_shot_path = resolve(value);
    else if (key == "embedding.backend") cfg.embedding_backend = value;
    else if (key == "embedding.dim") cfg.embedding_dim = parse_number<std::size_t>(key, value);
    else if (key == "lm.backend") {
      std::string v(value);
      if (v.rfind("rules:", 0) == 0) v = "rules:" + resolve(v.substr(6)).string();
      cfg.lm_backend = v;
    } else if (key == "lm.max_tokens") cfg.lm_max_tokens = parse_number<int>(key, value);
    else if (key == "routing.abstain_margin") cfg.abstain_margin = parse_real(key, value);
    else if (key == "dispatch.timeout_ms") cfg.dispatch_timeout_ms = parse_number<std::int64_t>(key, value);
    else if (key == "event_log") cfg.event_log_path = resolve(value);
    else {
      throw Error(ErrorCode::kValidation, "config line " + std::to_string(line_no) +
                                              ": unknown key '" + std::string(key) + "'");
    }
  }
  return cfg;
}

void apply_env_overrides(ServiceConfig& config) {
  if (const char* v = std::getenv("MOIRA_LISTEN"); v && *v) config.listen = v;
  if (const char* v = std::getenv("MOIRA_EMBEDDING_BACKEND"); v && *v) config.embedding_backend = v;
  if (const char* v = std::getenv("MOIRA_LM_BACKEND"); v && *v) config.lm_backend = v;
}

void check_config_files(const ServiceConfig& config) {
  auto must_exist = [](const std::optional<std::filesystem::path>& p, const char* what) {
    if (p && !std::filesystem::exists(*p)) {
      throw Error(ErrorCode::kValidation, std::string(what) + " file not found: " + p->string());
    }
  };
  must_exist(config.registry_path, "registry");
  must_exist(config.prompt_template_path, "prompt_template");
  must_exist(config.few_shot_path, "few_shot");
  if (config.lm_backend.rfind("rules:", 0) == 0) {
    must_exist(std::filesystem::path(config.lm_backend.substr(6)), "lm.backend rules");
  } else if (config.lm_backend != "none") {
    parse_uri(config.lm_backend);
  }
  if (config.embedding_backend != "builtin") parse_uri(config.embedding_backend);
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  auto cfg = parse_service_config(read_file(path), path.parent_path());
  apply_env_overrides(cfg);
  check_config_files(cfg);
  return cfg;
}

Service::Service(ServiceConfig config, ServiceDeps deps)
    : config_(std::move(config)), deps_(std::move(deps)) {}

Service::~Service() { stop(); }

std::unique_ptr<Service> Service::create(const ServiceConfig& config, ServiceDeps deps) {
  check_config_files(config);
  if (!deps.clock) {
    deps.clock = config.simulated_clock ? std::shared_ptr<Clock>(std::make_shared<SimulatedClock>())
                                        : std::shared_ptr<Clock>(std::make_shared<WallClock>());
  }
  if (!deps.embedder) {
    if (config.embedding_backend == "builtin") {
      deps.embedder = std::make_shared<HashingEmbedder>(config.embedding_dim);
    } else {
      deps.embedder =
          std::make_shared<RemoteEmbedder>(parse_uri(config.embedding_backend), config.embedding_dim);
    }
  }
  if (!deps.lm && config.lm_backend != "none") {
    if (config.lm_backend.rfind("rules:", 0) == 0) {
      deps.lm = std::make_shared<RuleBasedMockLm>(
          RuleBasedMockLm::from_json(read_file(config.lm_backend.substr(6))));
    } else {
      deps.lm = std::make_shared<RemoteLmClient>(parse_uri(config.lm_backend));
    }
  }
  if (!deps.transport) {
    deps.transport = std::make_shared<HttpExpertTransport>(
        std::chrono::milliseconds(config.dispatch_timeout_ms));
  }

  std::unique_ptr<Service> svc(new Service(config, std::move(deps)));
  if (config.registry_path) load_registry_json(read_file(*config.registry_path), svc->registry_);

  ServingConfig serving;
  serving.mode = config.mode;
  serving.backbone_bytes = config.backbone_bytes;
  serving.memory_budget_bytes = config.memory_budget_bytes;
  serving.swap_latency_ms = config.swap_latency_ms;
  for (const auto& p : svc->registry_.snapshot()) serving.adapter_sizes.push_back(p.adapter_size_bytes);
  svc->adapters_ = std::make_unique<AdapterManager>(serving, *svc->deps_.clock);
  if (config.event_log_path) {
    svc->event_log_ = std::make_unique<std::ofstream>(*config.event_log_path, std::ios::app);
    if (!*svc->event_log_) {
      throw Error(ErrorCode::kValidation, "cannot open event log " + config.event_log_path->string());
    }
    svc->adapters_->set_event_sink(svc->event_log_.get());
  }
  if (config.initial_active) svc->adapters_->ensure_loaded(*config.initial_active);

  RouterOptions options;
  options.similarity.abstain_margin = config.abstain_margin;
  options.lm_max_tokens = config.lm_max_tokens;
  if (config.prompt_template_path) {
    options.prompt_template.emplace(read_file(*config.prompt_template_path));
  }
  if (config.few_shot_path) options.few_shot = parse_few_shot_json(read_file(*config.few_shot_path));
  svc->router_ = std::make_unique<Router>(svc->registry_, svc->deps_.embedder, svc->deps_.lm,
                                          *svc->deps_.clock, std::move(options));
  svc->executor_ = std::make_unique<Executor>(svc->registry_, *svc->router_, *svc->adapters_,
                                              *svc->deps_.transport, *svc->deps_.clock);
  return svc;
}

ExpertId Service::register_expert(ExpertProfile profile) {
  std::lock_guard lock(registration_mutex_);
  validate_profile(profile);
  if (!adapters_->can_add_adapter(profile.adapter_size_bytes)) {
    throw Error(ErrorCode::kBudgetExceeded,
                "adapter of " + std::to_string(profile.adapter_size_bytes) +
                    " bytes does not fit the memory budget");
  }
  const auto id = registry_.register_expert(std::move(profile));
  adapters_->add_adapter(registry_.get_expert(id).adapter_size_bytes);
  return id;
}

HttpReply Service::handle(std::string_view method, std::string_view path, std::string_view body) {
  try {
    if (method == "GET" && path == "/experts") return get_experts();
    if (method == "GET" && path == "/state") return get_state();
    if (method == "POST") {
      if (path == "/experts") return post_experts(parse_body(body));
      if (path == "/route") return post_route(parse_body(body));
      if (path == "/execute") return post_execute(parse_body(body));
      if (path == "/execute_batch") return post_execute_batch(parse_body(body));
    }
    throw Error(ErrorCode::kNotFound,
                "no endpoint " + std::string(method) + " " + std::string(path));
  } catch (const Error& e) {
    return error_reply(e);
  } catch (const json::exception& e) {
    return error_reply(Error(ErrorCode::kValidation, e.what()));
  }
}

HttpReply Service::post_experts(const json& body) {
  require_object(body);
  const auto id = register_expert(body.get<ExpertProfile>());
  return with_schema({{"expert_id", id}});
}

HttpReply Service::get_experts() {
  return with_schema({{"experts", registry_.snapshot()}});
}

HttpReply Service::post_route(const json& body) {
  require_object(body);
  const auto text = string_field(body, "text", "");
  const auto strategy =
      parse_strategy(string_field(body, "strategy", std::string(to_string(config_.strategy))));
  const auto style = parse_style(string_field(body, "style", std::string(to_string(config_.style))));
  return with_schema(router_->route(text, strategy, style));
}

HttpReply Service::post_execute(const json& body) {
  require_object(body);
  TaskInstruction task;
  task.task_id = string_field(body, "task_id", "task-" + std::to_string(++task_counter_));
  task.text = string_field(body, "text", "");
  if (normalize_text(task.text).empty()) {
    throw Error(ErrorCode::kValidation, "field 'text' must be non-empty");
  }
  const auto strategy =
      parse_strategy(string_field(body, "strategy", std::string(to_string(config_.strategy))));
  const auto style = parse_style(string_field(body, "style", std::string(to_string(config_.style))));
  auto result = executor_->execute_batch({task}, strategy, style, false).front();
  const int status = result.error ? http_status(result.error->code) : 200;
  return with_schema(result, status);
}

HttpReply Service::post_execute_batch(const json& body) {
  require_object(body);
  const auto tasks_it = body.find("tasks");
  if (tasks_it == body.end() || !tasks_it->is_array()) {
    throw Error(ErrorCode::kValidation, "field 'tasks' must be an array");
  }
  bool batching = false;
  if (const auto b = body.find("batching"); b != body.end()) {
    if (!b->is_boolean()) throw Error(ErrorCode::kValidation, "field 'batching' must be a boolean");
    batching = b->get<bool>();
  }
  const auto strategy =
      parse_strategy(string_field(body, "strategy", std::string(to_string(config_.strategy))));
  const auto style = parse_style(string_field(body, "style", std::string(to_string(config_.style))));

  std::vector<TaskInstruction> tasks;
  for (const auto& t : *tasks_it) {
    require_object(t);
    TaskInstruction task;
    task.task_id = string_field(t, "task_id", "task-" + std::to_string(++task_counter_));
    task.text = string_field(t, "text", "");
    tasks.push_back(std::move(task));
  }
  const auto results = executor_->execute_batch(tasks, strategy, style, batching);
  return with_schema({{"results", results}, {"serving", serving_report(results)}});
}

HttpReply Service::get_state() { return with_schema(adapters_->state()); }

int Service::bind(const std::string& host, int port) {
  if (!server_) {
    server_ = std::make_unique<httplib::Server>();
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
      const auto reply = handle(req.method, req.path, req.body);
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    };
    for (const char* path : {"/experts", "/state"}) server_->Get(path, forward);
    for (const char* path : {"/experts", "/route", "/execute", "/execute_batch"}) {
      server_->Post(path, forward);
    }
    auto not_found = [this](const httplib::Request& req, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) {
        const auto reply = handle(req.method, req.path, req.body);
        res.set_content(reply.body.dump(), "application/json");
      }
    };
    server_->set_error_handler(not_found);
  }
  const int bound = port == 0 ? server_->bind_to_any_port(host) : server_->bind_to_port(host, port) ? port : -1;
  if (bound < 0) {
    throw Error(ErrorCode::kTransport, "cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void Service::listen() {
  if (!server_) throw Error(ErrorCode::kValidation, "bind() must be called before listen()");
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace moira
