#pragma once

// Experiment configuration, orchestration and run manifests.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noisyot/decisions.hpp"
#include "noisyot/inference.hpp"
#include "noisyot/io.hpp"

namespace noisyot {

struct ExperimentConfig {
  std::string name = "experiment";
  Channel channel;
  ProbMeasure p_true{};
  DecisionProblem problem{};
  double radius = 0.0;
  /// OTDRO is run once per delta; the other formulations ignore delta.
  std::vector<double> deltas{};
  PriorFamily family = PriorFamily::FullSimplex;
  std::vector<ProbMeasure> priors{};
  std::vector<std::size_t> n_grid{};
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<Formulation> formulations{};
  /// Any of "disappoint", "budgets", "httest".
  std::vector<std::string> stages{};
  /// Needed by the httest stage.
  std::optional<TestSpec> test{};
  /// Effective configuration as JSON, hashed into the manifest.
  Json effective{};
};

/// Parses and validates a configuration. Every problem is reported as a
/// ValidationError before any computation starts.
ExperimentConfig parse_experiment_config(const Json& j);

/// Decision problem from {"loss": [[...]]} or a newsvendor description
/// {"type": "newsvendor", "grid": [...], "underage": u, "overage": o}.
DecisionProblem decision_problem_from_json(const Json& loss, const Json* labels, double epsilon);

/// loss(z, xi) = underage * max(xi - z, 0) + overage * max(z - xi, 0), z over the grid.
DecisionProblem newsvendor_problem(std::span<const double> grid, double underage,
                                   double overage, double epsilon);

struct StageRecord {
  std::string name;
  double seconds = 0.0;
  std::string status;
};

struct ArtifactRecord {
  std::string path;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunManifest {
  std::string name;
  std::string config_sha256;
  std::string tool_version;
  std::uint64_t seed = 0;
  std::vector<ArtifactRecord> files;
  std::vector<StageRecord> stages;
  bool complete = false;
};

Json to_json(const RunManifest& m);

struct RunOptions {
  std::filesystem::path out_dir = ".";
  unsigned threads = 1;
  /// Receives one line per finished cell; may be empty.
  std::function<void(std::string_view)> progress{};
};

/// Label of a disappointment row: the formulation name, with "@delta" for OTDRO.
std::string formulation_label(Formulation f, double delta);

/// Runs every requested stage, writing CSV files and manifest.json into
/// options.out_dir. CSV contents depend only on the configuration, never on
/// options.threads; the manifest also carries wall-clock timings. If a stage
/// throws, the manifest is written with complete = false before rethrowing.
RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Gaussian-noise newsvendor on {0..8}: sigma 1, triangular truth peaked at 4,
/// r = 0.05, delta in {0.02, 0.05, 0.1}, N in {25, 50, 100, 200}, 20000 reps.
ExperimentConfig flagship_config(std::uint64_t seed);

RunManifest flagship_newsvendor(std::uint64_t seed, const RunOptions& options);

std::string_view tool_version();

}  // namespace noisyot
