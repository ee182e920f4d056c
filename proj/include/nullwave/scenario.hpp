#pragma once

// JSON scenarios: schema validation, task dispatch, manifests.
//
//   {"task": "mode", "system": "example2", "profile": {...}, "params": {...},
//    "seed": 7, "output_dir": "runs/mode"}
//
// "system" is a fixture name, an inline system object, or "scalar" (N = 1 with
// B_y = f', no renormalization; only for classify, mode, geoptics and blowup).

#include "nullwave/nullform.hpp"
#include "nullwave/profiles.hpp"
#include "nullwave/renormalize.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace nullwave {

inline constexpr const char* kVersion = "0.4.0";

enum class Task { Classify, Mode, Fdtd, Geoptics, Geometry, Blowup };

Task task_from_string(const std::string& s);
std::string to_string(Task t);

struct Scenario {
  Task task = Task::Classify;
  nlohmann::json config;   // the document as given
  nlohmann::json params;   // with defaults filled in
  std::uint64_t seed = 7;
  std::string output_dir;  // may be empty
  bool scalar = false;
  std::optional<SemilinearSystem> system;  // empty for "scalar"
  WaveProfile profile;
};

/// Validates the whole document and throws one ValidationError listing every problem.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

/// Every problem in `doc`, empty if it is valid.
std::vector<std::string> scenario_errors(const nlohmann::json& doc);

/// FNV-1a 64 of the canonical (sorted-key, compact) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

struct RunManifest {
  std::string version = kVersion;
  std::string task;
  std::string config_hash;
  std::string started;  // UTC, ISO 8601 with microseconds
  double wall_seconds = 0.0;
  std::string output_dir;
  std::vector<std::string> outputs;  // file names relative to output_dir
  bool ok = true;

  nlohmann::json to_json() const;
};

/// {condition1, condition2, K, witnesses, predicted, ...}.
nlohmann::json classify(const Scenario& sc);

/// Final directory: `out_override`, else the config's output_dir, else
/// "nullwave-<task>-<hash>"; relative paths sit under NULLWAVE_OUTPUT_ROOT when set.
std::string resolve_output_dir(const Scenario& sc, const std::string& out_override = "");

/// Runs the task into a temporary sibling directory, writes manifest.json and
/// renames it into place. An existing target is replaced only if it holds a
/// manifest.json from an earlier run. On NumericalError the target receives
/// failure.json and manifest.json only, then the error is rethrown.
RunManifest run_scenario(const Scenario& sc, const std::string& out_override = "");

}  // namespace nullwave
