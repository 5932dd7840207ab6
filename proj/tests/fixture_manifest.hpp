#pragma once

// Checks the parser fixtures in fixtures/bddl and fixtures/jsonl against their
// expected.json manifests. Shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "moira/error.hpp"
#include "moira/ingest.hpp"
#include "moira/sexpr.hpp"
#include "test_support.hpp"

namespace moira::testing {

struct ManifestResult {
  std::size_t checked = 0;
  std::size_t round_trips = 0;  // well-formed bddl files whose tree re-parses identically
  std::vector<std::string> failures;
};

inline std::string opt_text(const std::optional<std::string>& s) { return s ? *s : "<none>"; }

/// Every file in `dir` except the manifest must have an entry, and vice versa.
inline void check_coverage(const std::filesystem::path& dir, const nlohmann::json& manifest,
                           ManifestResult& out) {
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name != "expected.json" && !manifest.contains(name)) {
      out.failures.push_back(name + ": no manifest entry");
    }
  }
}

inline ManifestResult check_bddl_fixtures(const std::filesystem::path& dir) {
  ManifestResult out;
  const auto manifest = nlohmann::json::parse(slurp((dir / "expected.json").string()));
  check_coverage(dir, manifest, out);
  for (const auto& [name, want] : manifest.items()) {
    ++out.checked;
    const auto bytes = slurp((dir / name).string());
    const auto stem = std::filesystem::path(name).stem().string();
    try {
      const auto task = parse_bddl(bytes, stem);
      if (want.contains("error")) {
        out.failures.push_back(name + ": parsed but expected " + want["error"].get<std::string>());
        continue;
      }
      if (task.task_id != want["task_id"] || task.text != want["text"] || task.truth_label) {
        out.failures.push_back(name + ": got '" + task.text + "' id '" + task.task_id + "'");
      }
      const auto tree = sexpr::parse(bytes);
      if (sexpr::parse(sexpr::serialize(tree)) == tree) {
        ++out.round_trips;
      } else {
        out.failures.push_back(name + ": s-expression round-trip changed the tree");
      }
    } catch (const Error& e) {
      if (!want.contains("error")) {
        out.failures.push_back(name + ": unexpected " + std::string(to_string(e.code())) + ": " +
                               e.what());
        continue;
      }
      if (to_string(e.code()) != want["error"].get<std::string>()) {
        out.failures.push_back(name + ": got " + std::string(to_string(e.code())) + " want " +
                               want["error"].get<std::string>());
      }
      if (want.contains("offset")) {
        const auto needle = "at offset " + std::to_string(want["offset"].get<std::size_t>());
        const std::string msg = e.what();
        // Must end with the offset, so "offset 2" does not match "offset 21".
        if (msg.size() < needle.size() || msg.compare(msg.size() - needle.size(), needle.size(), needle) != 0) {
          out.failures.push_back(name + ": message '" + msg + "' lacks '" + needle + "'");
        }
      }
    }
  }
  return out;
}

inline ManifestResult check_jsonl_fixtures(const std::filesystem::path& dir) {
  ManifestResult out;
  const auto manifest = nlohmann::json::parse(slurp((dir / "expected.json").string()));
  check_coverage(dir, manifest, out);
  for (const auto& [name, want] : manifest.items()) {
    ++out.checked;
    try {
      const auto tasks = parse_tasks_jsonl(slurp((dir / name).string()));
      if (want.contains("error")) {
        out.failures.push_back(name + ": parsed but expected " + want["error"].get<std::string>());
        continue;
      }
      const auto& expected = want["tasks"];
      if (tasks.size() != expected.size()) {
        out.failures.push_back(name + ": " + std::to_string(tasks.size()) + " tasks, want " +
                               std::to_string(expected.size()));
        continue;
      }
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& e = expected[i];
        const std::optional<std::string> label =
            e["truth_label"].is_null() ? std::nullopt
                                       : std::optional<std::string>(e["truth_label"].get<std::string>());
        if (tasks[i].task_id != e["task_id"] || tasks[i].text != e["text"] ||
            tasks[i].truth_label != label) {
          out.failures.push_back(name + "[" + std::to_string(i) + "]: got id '" +
                                 tasks[i].task_id + "' text '" + tasks[i].text + "' label " +
                                 opt_text(tasks[i].truth_label));
        }
      }
    } catch (const Error& e) {
      if (!want.contains("error")) {
        out.failures.push_back(name + ": unexpected " + std::string(to_string(e.code())) + ": " +
                               e.what());
        continue;
      }
      if (to_string(e.code()) != want["error"].get<std::string>()) {
        out.failures.push_back(name + ": got " + std::string(to_string(e.code())) + " want " +
                               want["error"].get<std::string>());
      }
      const auto needle = "line " + std::to_string(want["line"].get<int>()) + ":";
      if (std::string(e.what()).find(needle) != 0) {
        out.failures.push_back(name + ": message '" + e.what() + "' does not start with '" +
                               needle + "'");
      }
    }
  }
  return out;
}

}  // namespace moira::testing
