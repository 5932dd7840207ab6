#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "moira/adapter_manager.hpp"
#include "moira/clock.hpp"
#include "moira/embedder.hpp"
#include "moira/executor.hpp"
#include "moira/registry.hpp"
#include "moira/router.hpp"
#include "moira/router_lm.hpp"

namespace httplib {
class Server;
}

namespace moira {

inline constexpr int kSchemaVersion = 1;

/// Settings for a Service. Loaded from a `key = value` text file; `#` starts a
/// comment. Relative paths resolve against the file's directory.
///
///   listen                      host:port                (127.0.0.1:8080)
///   registry                    registry snapshot JSON    (none)
///   strategy                    embedding | lm            (embedding)
///   style                       simple | abstract         (simple)
///   serving.mode                all_in_memory | dynamic_load (dynamic_load)
///   serving.backbone_bytes      integer                   (4000000000)
///   serving.memory_budget_bytes integer                   (8000000000)
///   serving.swap_latency_ms     integer                   (9400)
///   serving.clock               wall | simulated          (wall)
///   serving.initial_active      expert id                 (none)
///   prompt_template             template file             (built-in)
///   few_shot                    few-shot JSON             (none)
///   embedding.backend           builtin | http URI        (builtin)
///   embedding.dim               integer                   (256)
///   lm.backend                  none | rules:<file> | http URI (none)
///   lm.max_tokens               integer                   (256)
///   routing.abstain_margin      real                      (0)
///   dispatch.timeout_ms         integer                   (60000)
///   event_log                   swap log JSON-lines file  (none)
///
/// Environment overrides: MOIRA_LISTEN, MOIRA_EMBEDDING_BACKEND,
/// MOIRA_LM_BACKEND.
struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::optional<std::filesystem::path> registry_path;
  Strategy strategy = Strategy::kEmbeddingSim;
  DescriptionStyle style = DescriptionStyle::kSimple;
  ServingMode mode = ServingMode::kDynamicLoad;
  std::uint64_t backbone_bytes = 4'000'000'000ULL;
  std::uint64_t memory_budget_bytes = 8'000'000'000ULL;
  std::int64_t swap_latency_ms = kDefaultSwapLatencyMs;
  bool simulated_clock = false;
  std::optional<ExpertId> initial_active;
  std::optional<std::filesystem::path> prompt_template_path;
  std::optional<std::filesystem::path> few_shot_path;
  std::string embedding_backend = "builtin";
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  std::string lm_backend = "none";
  int lm_max_tokens = 256;
  double abstain_margin = 0.0;
  std::int64_t dispatch_timeout_ms = 60'000;
  std::optional<std::filesystem::path> event_log_path;
};

/// Parses config text. Throws kValidation on unknown keys or bad values.
ServiceConfig parse_service_config(std::string_view text,
                                   const std::filesystem::path& base_dir = {});
/// Reads, parses, applies environment overrides and checks referenced files.
ServiceConfig load_service_config(const std::filesystem::path& path);
void apply_env_overrides(ServiceConfig& config);
/// Throws kValidation if a referenced file is missing.
void check_config_files(const ServiceConfig& config);

std::string read_file(const std::filesystem::path& path);

/// Pluggable parts; Service::create fills any that are null from the config.
struct ServiceDeps {
  std::shared_ptr<Clock> clock;
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<LmClient> lm;
  std::shared_ptr<ExpertTransport> transport;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// Registry, routers, adapter manager and executor behind one HTTP API.
class Service {
 public:
  static std::unique_ptr<Service> create(const ServiceConfig& config, ServiceDeps deps = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Dispatches one API call without any network involvement.
  HttpReply handle(std::string_view method, std::string_view path, std::string_view body);

  /// Binds the HTTP server; returns the bound port (useful with port 0).
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  void stop();

  Registry& registry() noexcept { return registry_; }
  Router& router() noexcept { return *router_; }
  AdapterManager& adapters() noexcept { return *adapters_; }
  Executor& executor() noexcept { return *executor_; }
  Clock& clock() noexcept { return *deps_.clock; }
  const ServiceConfig& config() const noexcept { return config_; }

  /// Registers an expert and accounts its adapter. Serialized.
  ExpertId register_expert(ExpertProfile profile);

 private:
  Service(ServiceConfig config, ServiceDeps deps);

  HttpReply post_experts(const nlohmann::json& body);
  HttpReply get_experts();
  HttpReply post_route(const nlohmann::json& body);
  HttpReply post_execute(const nlohmann::json& body);
  HttpReply post_execute_batch(const nlohmann::json& body);
  HttpReply get_state();

  ServiceConfig config_;
  ServiceDeps deps_;
  Registry registry_;
  std::unique_ptr<Router> router_;
  std::unique_ptr<AdapterManager> adapters_;
  std::unique_ptr<Executor> executor_;
  std::unique_ptr<std::ofstream> event_log_;
  std::mutex registration_mutex_;
  std::atomic<std::uint64_t> task_counter_{0};
  std::unique_ptr<httplib::Server> server_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

}  // namespace moira
