#include "noisyot/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "noisyot/errors.hpp"

#ifndef NOISYOT_VERSION
#define NOISYOT_VERSION "0.0.0"
#endif

namespace noisyot {

namespace {

const Json& require(const Json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("config: missing \"") + key + "\"");
  return j.at(key);
}

template <class T>
T get_as(const Json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string("config: \"") + what + "\" has the wrong type");
  }
}

std::vector<std::size_t> size_list(const Json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string("config: \"") + what + "\" must be an array");
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      throw ValidationError(std::string("config: \"") + what + "\" must hold positive integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

class StageTimer {
public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

AmbiguitySpec ambiguity_for(const ExperimentConfig& c, double delta) {
  return AmbiguitySpec{c.radius, delta, c.family, c.priors, c.channel};
}

struct Cell {
  Formulation formulation;
  double delta;
};

std::vector<Cell> cells_of(const ExperimentConfig& c) {
  std::vector<Cell> cells;
  for (auto f : c.formulations) {
    if (f == Formulation::OtDro) {
      for (double d : c.deltas) cells.push_back({f, d});
    } else {
      cells.push_back({f, c.deltas.front()});
    }
  }
  return cells;
}

}  // namespace

std::string_view tool_version() { return NOISYOT_VERSION; }

std::string formulation_label(Formulation f, double delta) {
  std::string label(formulation_name(f));
  if (f == Formulation::OtDro) label += "@" + format_double(delta);
  return label;
}

DecisionProblem newsvendor_problem(std::span<const double> grid, double underage,
                                   double overage, double epsilon) {
  DecisionProblem prob;
  prob.loss = Matrix(grid.size(), grid.size());
  for (std::size_t z = 0; z < grid.size(); ++z) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      prob.loss(z, i) = underage * std::max(grid[i] - grid[z], 0.0) +
                        overage * std::max(grid[z] - grid[i], 0.0);
    }
    prob.decision_labels.push_back("order=" + format_double(grid[z]));
  }
  prob.epsilon = epsilon;
  return prob;
}

DecisionProblem decision_problem_from_json(const Json& loss, const Json* labels, double epsilon) {
  DecisionProblem prob;
  if (loss.is_object()) {
    const auto type = get_as<std::string>(require(loss, "type"), "loss.type");
    if (type != "newsvendor") throw ValidationError("config: unknown loss type '" + type + "'");
    const auto grid = reals_from_json(require(loss, "grid"), "loss.grid");
    prob = newsvendor_problem(grid, number_from_json(loss.value("underage", Json(1.0))),
                              number_from_json(loss.value("overage", Json(1.0))), epsilon);
  } else {
    prob.loss = matrix_from_json(loss, "loss");
    prob.epsilon = epsilon;
  }
  if (labels) {
    prob.decision_labels.clear();
    for (const auto& l : *labels) prob.decision_labels.push_back(get_as<std::string>(l, "decision_labels"));
  }
  validate(prob);
  return prob;
}

ExperimentConfig parse_experiment_config(const Json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  ExperimentConfig c{.name = j.value("name", std::string("experiment")),
                     .channel = channel_from_json(require(j, "channel"))};
  c.effective = j;
  c.p_true = prob_measure_from_json(require(j, "p_true"), "p_true");
  if (c.p_true.size() != c.channel.sources()) {
    throw ValidationError("config: p_true does not fit the channel's latent alphabet");
  }
  const double epsilon = j.contains("epsilon") ? number_from_json(j.at("epsilon")) : 1e-6;
  c.problem = decision_problem_from_json(require(j, "loss"),
                                         j.contains("decision_labels") ? &j.at("decision_labels") : nullptr,
                                         epsilon);
  if (c.problem.loss.cols() != c.channel.sources()) {
    throw ValidationError("config: loss columns do not match the latent alphabet");
  }
  c.radius = number_from_json(require(j, "r"));
  if (!(c.radius > 0.0) || !std::isfinite(c.radius)) throw ValidationError("config: r must be positive");

  const Json& delta = j.contains("delta") ? j.at("delta") : Json(0.0);
  c.deltas = delta.is_array() ? reals_from_json(delta, "delta") : std::vector<double>{number_from_json(delta)};
  if (c.deltas.empty()) throw ValidationError("config: delta list is empty");
  for (double d : c.deltas) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("config: delta must be nonnegative");
  }

  if (j.contains("prior_family")) {
    const auto& pf = j.at("prior_family");
    if (pf.is_string() && pf.get<std::string>() == "full_simplex") {
      c.family = PriorFamily::FullSimplex;
    } else if (pf.is_object() && pf.contains("explicit")) {
      c.family = PriorFamily::ExplicitList;
      for (const auto& p : pf.at("explicit")) c.priors.push_back(prob_measure_from_json(p, "prior_family.explicit"));
      if (c.priors.empty()) throw ValidationError("config: explicit prior list is empty");
      for (const auto& p : c.priors) {
        if (p.size() != c.channel.sources()) throw ValidationError("config: a listed prior does not fit the channel");
      }
    } else {
      throw ValidationError("config: prior_family must be \"full_simplex\" or {\"explicit\": [...]}");
    }
  }

  c.n_grid = size_list(require(j, "n_grid"), "n_grid");
  if (c.n_grid.empty()) throw ValidationError("config: n_grid is empty");
  for (std::size_t k = 1; k < c.n_grid.size(); ++k) {
    if (c.n_grid[k] <= c.n_grid[k - 1]) throw ValidationError("config: n_grid must be strictly increasing");
  }
  const auto& reps = require(j, "reps");
  if (!reps.is_number_integer() || reps.get<long long>() < 1) {
    throw ValidationError("config: reps must be a positive integer");
  }
  c.reps = reps.get<std::size_t>();
  const auto& seed = require(j, "seed");
  if (!seed.is_number_integer() || (seed.is_number_integer() && !seed.is_number_unsigned() && seed.get<long long>() < 0)) {
    throw ValidationError("config: seed must be a nonnegative integer");
  }
  c.seed = seed.get<std::uint64_t>();

  for (const auto& f : j.value("formulations", Json::array({"SAA_plugin", "MLE_plugin", "EntropicDRO", "OTDRO"}))) {
    const auto form = parse_formulation(get_as<std::string>(f, "formulations"));
    if (form == Formulation::KernelDeconvolution) {
      throw ValidationError("config: formulation KernelDeconvolution is reserved but not implemented");
    }
    const bool plugs = form == Formulation::SaaPlugin || form == Formulation::EntropicDro;
    if (plugs && c.channel.sources() != c.channel.observations()) {
      throw ValidationError("config: " + std::string(formulation_name(form)) +
                            " needs equal latent and observed alphabets");
    }
    c.formulations.push_back(form);
  }

  static const std::set<std::string> known{"disappoint", "budgets", "httest"};
  for (const auto& s : j.value("stages", Json::array({"disappoint", "budgets"}))) {
    const auto name = get_as<std::string>(s, "stages");
    if (!known.contains(name)) throw ValidationError("config: unknown stage '" + name + "'");
    c.stages.push_back(name);
  }

  if (j.contains("test")) {
    const auto& t = j.at("test");
    TestSpec spec{.null_measure = prob_measure_from_json(require(t, "null"), "test.null"),
                  .channel = c.channel};
    if (t.contains("alt")) spec.alt_measure = prob_measure_from_json(t.at("alt"), "test.alt");
    spec.radius = t.contains("radius") ? number_from_json(t.at("radius")) : c.radius;
    spec.delta = t.contains("delta") ? number_from_json(t.at("delta")) : c.deltas.front();
    try {
      validate(spec);
    } catch (const Error& e) {
      throw ValidationError(std::string("config.test: ") + e.what());
    }
    c.test = std::move(spec);
  }
  if (std::find(c.stages.begin(), c.stages.end(), "httest") != c.stages.end() && !c.test) {
    throw ValidationError("config: the httest stage needs a \"test\" section");
  }
  return c;
}

Json to_json(const RunManifest& m) {
  Json files = Json::array();
  for (const auto& f : m.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  Json stages = Json::array();
  for (const auto& s : m.stages) stages.push_back({{"name", s.name}, {"seconds", s.seconds}, {"status", s.status}});
  return Json{{"name", m.name},
              {"tool", "noisy-ot"},
              {"tool_version", m.tool_version},
              {"config_sha256", m.config_sha256},
              {"seed", m.seed},
              {"files", files},
              {"stages", stages},
              {"complete", m.complete}};
}

RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunManifest manifest;
  manifest.name = config.name;
  manifest.tool_version = std::string(tool_version());
  manifest.config_sha256 = sha256_hex(config.effective.dump());
  manifest.seed = config.seed;

  const auto emit = [&](const std::string& file, const std::string& contents) {
    write_file_atomic(options.out_dir / file, contents);
    manifest.files.push_back({file, sha256_hex(contents), contents.size()});
  };
  const auto note = [&](const std::string& line) {
    if (options.progress) options.progress(line);
  };
  const auto write_manifest = [&]() {
    write_file_atomic(options.out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  };

  MonteCarloOptions mc;
  mc.threads = options.threads;

  const auto run_stage = [&](const std::string& name, const std::function<void()>& body) {
    StageTimer timer;
    try {
      body();
    } catch (const std::exception& e) {
      manifest.stages.push_back({name, timer.seconds(), std::string("failed: ") + e.what()});
      write_manifest();
      throw;
    }
    manifest.stages.push_back({name, timer.seconds(), "ok"});
  };

  for (const auto& stage : config.stages) {
    if (stage == "disappoint") {
      run_stage(stage, [&] {
        CsvTable table({"formulation", "N", "disappointments", "reps", "log_freq", "budget_mean"});
        CsvTable slopes({"formulation", "slope", "slope_stderr", "slope_defined", "target_rate", "method"});
        for (const auto& cell : cells_of(config)) {
          const auto label = formulation_label(cell.formulation, cell.delta);
          const auto report = disappointment_rate(cell.formulation, config.p_true,
                                                  ambiguity_for(config, cell.delta), config.problem,
                                                  config.n_grid, config.reps, config.seed, mc);
          const auto& r = report.rates;
          for (std::size_t k = 0; k < r.n_grid.size(); ++k) {
            table.add_row({label, std::to_string(r.n_grid[k]), format_double(r.errors[k]),
                           std::to_string(r.reps[k]), format_double(r.log_prob[k]),
                           format_double(r.mean_value[k])});
          }
          slopes.add_row({label, format_double(r.slope), format_double(r.slope_stderr),
                          r.slope_defined ? "1" : "0", format_double(report.target_rate),
                          r.method == EstimationMethod::MonteCarlo ? "monte_carlo" : "exact_binomial"});
          note(label + " done");
        }
        emit("disappointment.csv", table.str());
        emit("slopes.csv", slopes.str());
      });
    } else if (stage == "budgets") {
      run_stage(stage, [&] {
        // Long-run budgets: each formulation evaluated at the population O*P.
        const auto push = convolve(config.channel, config.p_true);
        CsvTable table({"formulation", "decision_index", "decision_label", "budget", "true_cost"});
        for (const auto& cell : cells_of(config)) {
          Prescription rx;
          switch (cell.formulation) {
            case Formulation::SaaPlugin:
              rx = solve_saa(push, config.problem);
              break;
            case Formulation::MlePlugin:
              rx = solve_saa(mle_em(push, config.channel).estimate, config.problem);
              break;
            case Formulation::EntropicDro:
              rx = entropic_dro_prescribe(push, config.radius, config.problem);
              break;
            case Formulation::OtDro:
              rx = ot_dro_prescribe(push, ambiguity_for(config, cell.delta), config.problem);
              break;
            case Formulation::KernelDeconvolution:
              throw Error("KernelDeconvolution is not implemented");
          }
          const auto& labels = config.problem.decision_labels;
          table.add_row({formulation_label(cell.formulation, cell.delta),
                         std::to_string(rx.decision_index),
                         rx.decision_index < labels.size() ? labels[rx.decision_index] : "",
                         format_double(rx.budget),
                         format_double(expected_cost(rx.decision_index, config.p_true, config.problem))});
        }
        emit("budgets.csv", table.str());
      });
    } else if (stage == "httest") {
      run_stage(stage, [&] {
        const auto& spec = *config.test;
        const auto t1 = type1_rate(spec, config.n_grid, config.reps, config.seed, mc);
        emit("httest_type1.csv", error_rate_csv(t1).str());
        Json rates{{"type1", to_json(t1)}};
        if (spec.alt_measure) {
          const auto t2 = type2_rate(spec, config.n_grid, config.reps, config.seed, mc);
          emit("httest_type2.csv", error_rate_csv(t2).str());
          rates["type2"] = to_json(t2);
        }
        emit("htrates.json", rates.dump(2) + "\n");
      });
    }
  }
  manifest.complete = true;
  write_manifest();
  return manifest;
}

ExperimentConfig flagship_config(std::uint64_t seed) {
  Json grid = Json::array();
  Json p_true = Json::array();
  const std::array<double, 9> tri{1, 2, 3, 4, 5, 4, 3, 2, 1};
  for (std::size_t k = 0; k < tri.size(); ++k) {
    grid.push_back(static_cast<double>(k));
    p_true.push_back(tri[k] / 25.0);
  }
  const Json j{
      {"name", "flagship_newsvendor"},
      {"channel", {{"type", "gaussian"}, {"source_grid", grid}, {"obs_grid", grid}, {"sigma", 1.0}}},
      {"p_true", p_true},
      {"loss", {{"type", "newsvendor"}, {"grid", grid}, {"underage", 2.0}, {"overage", 1.0}}},
      {"r", 0.05},
      {"delta", {0.02, 0.05, 0.1}},
      {"epsilon", 1e-6},
      {"prior_family", "full_simplex"},
      {"n_grid", {25, 50, 100, 200}},
      {"reps", 20000},
      {"seed", seed},
      {"formulations", {"SAA_plugin", "MLE_plugin", "EntropicDRO", "OTDRO"}},
      {"stages", {"disappoint", "budgets"}},
  };
  return parse_experiment_config(j);
}

RunManifest flagship_newsvendor(std::uint64_t seed, const RunOptions& options) {
  return run_experiment(flagship_config(seed), options);
}

}  // namespace noisyot
