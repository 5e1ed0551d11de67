// noisy-ot: command line front end to the noisyot library.
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid input,
// 3 a solver stopped before reaching its tolerance (output is still written).

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "noisyot/decisions.hpp"
#include "noisyot/errors.hpp"
#include "noisyot/experiment.hpp"
#include "noisyot/inference.hpp"
#include "noisyot/io.hpp"
#include "noisyot/rate.hpp"
#include "noisyot/transport.hpp"

namespace {

using noisyot::Json;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInvalid = 2;
constexpr int kNotConverged = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

void add_globals(CLI::App* cmd, Globals& g) {
  cmd->add_option("--config", g.config, "Input JSON file");
  cmd->add_option("--seed", g.seed, "Master seed; overrides the config");
  cmd->add_option("--out", g.out, "Output directory");
  cmd->add_option("--threads", g.threads, "Worker threads for Monte Carlo stages")
      ->check(CLI::Range(1u, 1024u));
}

/// An argument is either inline JSON or the path of a JSON file.
Json load_json_arg(const std::string& arg, const char* what) {
  if (arg.empty()) throw noisyot::ValidationError(std::string(what) + " is required");
  const char first = arg.front();
  if (first == '{' || first == '[' || first == '-' || std::isdigit(static_cast<unsigned char>(first))) {
    try {
      return Json::parse(arg);
    } catch (const Json::parse_error& e) {
      throw noisyot::ValidationError(std::string(what) + ": " + e.what());
    }
  }
  return noisyot::read_json_file(arg);
}

Json load_config(const Globals& g) {
  auto j = load_json_arg(g.config, "--config");
  if (!j.is_object()) throw noisyot::ValidationError("--config: expected a JSON object");
  if (g.seed) j["seed"] = *g.seed;
  return j;
}

/// Writes a JSON document to <out>/<name> when --out is given, stdout otherwise.
void emit_json(const Globals& g, const std::string& name, const Json& doc) {
  const auto text = doc.dump(2) + "\n";
  if (g.out.empty()) {
    std::cout << text;
  } else {
    noisyot::write_file_atomic(std::filesystem::path(g.out) / name, text);
  }
}

std::filesystem::path out_dir(const Globals& g) { return g.out.empty() ? "." : g.out; }

const Json& field(const Json& j, const char* key) {
  if (!j.contains(key)) throw noisyot::ValidationError(std::string("missing \"") + key + "\"");
  return j.at(key);
}

int cmd_eot(const Globals& g) {
  const auto j = load_config(g);
  const auto mu = noisyot::prob_measure_from_json(field(j, "mu"), "mu");
  const auto nu = noisyot::prob_measure_from_json(field(j, "nu"), "nu");
  const auto cost = noisyot::matrix_from_json(field(j, "cost"), "cost");
  noisyot::SinkhornOptions opts;
  if (j.contains("tol")) opts.tol = noisyot::number_from_json(j.at("tol"));
  if (j.contains("max_iter")) opts.max_iter = j.at("max_iter").get<int>();
  const auto report = noisyot::eot_distance(mu, nu, cost, opts);
  emit_json(g, "eot.json", noisyot::to_json(report));
  return report.converged ? kOk : kNotConverged;
}

struct RateArgs {
  std::string obs, prior, channel, method = "closed";
  double delta = 0.0;
};

int cmd_rate(const Globals& g, RateArgs a) {
  if (!g.config.empty()) {
    const auto j = load_config(g);
    if (a.obs.empty() && j.contains("obs")) a.obs = j.at("obs").dump();
    if (a.prior.empty() && j.contains("prior")) a.prior = j.at("prior").dump();
    if (a.channel.empty() && j.contains("channel")) a.channel = j.at("channel").dump();
    if (j.contains("delta")) a.delta = noisyot::number_from_json(j.at("delta"));
    if (j.contains("method")) a.method = j.at("method").get<std::string>();
  }
  const auto obs = noisyot::prob_measure_from_json(load_json_arg(a.obs, "--obs"), "--obs");
  const auto prior = noisyot::prob_measure_from_json(load_json_arg(a.prior, "--prior"), "--prior");
  const auto ch = noisyot::channel_from_json(load_json_arg(a.channel, "--channel"));
  if (!(a.delta >= 0.0)) throw noisyot::ValidationError("--delta must be nonnegative");

  if (a.delta > 0.0) {
    const auto eval = noisyot::smoothed_rate(obs, prior, ch, a.delta);
    emit_json(g, "rate.json", noisyot::to_json(eval));
    return eval.converged ? kOk : kNotConverged;
  }
  if (a.method == "closed") {
    emit_json(g, "rate.json", noisyot::to_json(noisyot::rate_closed_form(obs, prior, ch)));
    return kOk;
  }
  if (a.method == "variational") {
    const auto eval = noisyot::rate_variational(obs, prior, ch);
    emit_json(g, "rate.json", noisyot::to_json(eval));
    return eval.converged ? kOk : kNotConverged;
  }
  throw noisyot::ValidationError("--method must be closed or variational");
}

struct TestRun {
  noisyot::TestSpec spec;
  std::vector<std::size_t> n_grid{};
  std::size_t reps = 0;
  std::uint64_t seed = 0;
};

TestRun parse_test_run(const Json& j) {
  TestRun run{.spec = {.null_measure = noisyot::prob_measure_from_json(field(j, "null"), "null"),
                       .channel = noisyot::channel_from_json(field(j, "channel"))}};
  if (j.contains("alt")) run.spec.alt_measure = noisyot::prob_measure_from_json(j.at("alt"), "alt");
  run.spec.radius = noisyot::number_from_json(field(j, "r"));
  run.spec.delta = j.contains("delta") ? noisyot::number_from_json(j.at("delta")) : 0.0;
  try {
    noisyot::validate(run.spec);
  } catch (const noisyot::Error& e) {
    throw noisyot::ValidationError(e.what());
  }
  const auto& grid = field(j, "n_grid");
  if (!grid.is_array() || grid.empty()) throw noisyot::ValidationError("n_grid must be a nonempty array");
  for (const auto& n : grid) {
    if (!n.is_number_integer() || n.get<long long>() <= 0) {
      throw noisyot::ValidationError("n_grid must hold positive integers");
    }
    run.n_grid.push_back(n.get<std::size_t>());
  }
  const auto& reps = field(j, "reps");
  if (!reps.is_number_integer() || reps.get<long long>() < 1) {
    throw noisyot::ValidationError("reps must be a positive integer");
  }
  run.reps = reps.get<std::size_t>();
  run.seed = field(j, "seed").get<std::uint64_t>();
  return run;
}

int cmd_httest(const Globals& g, bool fitted_only) {
  const auto run = parse_test_run(load_config(g));
  noisyot::MonteCarloOptions mc;
  mc.threads = g.threads;
  const auto t1 = noisyot::type1_rate(run.spec, run.n_grid, run.reps, run.seed, mc);
  std::optional<noisyot::ErrorRateReport> t2;
  if (run.spec.alt_measure) t2 = noisyot::type2_rate(run.spec, run.n_grid, run.reps, run.seed, mc);

  if (fitted_only) {
    Json doc{{"type1", noisyot::to_json(t1)}, {"target_rate", -run.spec.radius}};
    if (t2) doc["type2"] = noisyot::to_json(*t2);
    emit_json(g, "htrates.json", doc);
    return kOk;
  }
  const auto dir = out_dir(g);
  noisyot::write_file_atomic(dir / "httest_type1.csv", noisyot::error_rate_csv(t1).str());
  if (t2) noisyot::write_file_atomic(dir / "httest_type2.csv", noisyot::error_rate_csv(*t2).str());
  return kOk;
}

int cmd_prescribe(const Globals& g) {
  const auto j = load_config(g);
  const double epsilon = j.contains("epsilon") ? noisyot::number_from_json(j.at("epsilon")) : 1e-6;
  const auto prob = noisyot::decision_problem_from_json(
      field(j, "loss"), j.contains("decision_labels") ? &j.at("decision_labels") : nullptr, epsilon);
  const auto ch = noisyot::channel_from_json(field(j, "channel"));
  const auto p_obs = noisyot::prob_measure_from_json(field(j, "p_obs"), "p_obs");
  const auto form = noisyot::parse_formulation(j.value("formulation", std::string("OTDRO")));
  const double r = noisyot::number_from_json(field(j, "r"));

  noisyot::Prescription rx;
  switch (form) {
    case noisyot::Formulation::SaaPlugin:
      rx = noisyot::solve_saa(p_obs, prob);
      break;
    case noisyot::Formulation::MlePlugin:
      rx = noisyot::solve_saa(noisyot::mle_em(p_obs, ch).estimate, prob);
      break;
    case noisyot::Formulation::EntropicDro:
      rx = noisyot::entropic_dro_prescribe(p_obs, r, prob);
      break;
    case noisyot::Formulation::OtDro: {
      noisyot::AmbiguitySpec spec{r, j.contains("delta") ? noisyot::number_from_json(j.at("delta")) : 0.0,
                                  noisyot::PriorFamily::FullSimplex, {}, ch};
      if (j.contains("prior_family") && j.at("prior_family").is_object()) {
        spec.family = noisyot::PriorFamily::ExplicitList;
        for (const auto& p : field(j.at("prior_family"), "explicit")) {
          spec.priors.push_back(noisyot::prob_measure_from_json(p, "prior_family.explicit"));
        }
      }
      rx = noisyot::ot_dro_prescribe(p_obs, spec, prob);
      break;
    }
    case noisyot::Formulation::KernelDeconvolution:
      throw noisyot::ValidationError("formulation KernelDeconvolution is not implemented");
  }
  emit_json(g, "prescription.json", noisyot::to_json(rx, prob));
  return kOk;
}

void report_manifest(const noisyot::RunManifest& m, const std::filesystem::path& dir) {
  for (const auto& f : m.files) std::cerr << (dir / f.path).string() << "  " << f.sha256 << "\n";
}

int cmd_run(const Globals& g, bool disappoint_only) {
  auto j = load_config(g);
  if (disappoint_only) j["stages"] = Json::array({"disappoint"});
  const auto config = noisyot::parse_experiment_config(j);
  noisyot::RunOptions opts{.out_dir = out_dir(g), .threads = g.threads,
                           .progress = [](std::string_view line) { std::cerr << line << "\n"; }};
  report_manifest(noisyot::run_experiment(config, opts), opts.out_dir);
  return kOk;
}

/// --config, when given, is merged over the built-in configuration (e.g. {"reps": 500}).
int cmd_flagship(const Globals& g) {
  noisyot::RunOptions opts{.out_dir = out_dir(g), .threads = g.threads,
                           .progress = [](std::string_view line) { std::cerr << line << "\n"; }};
  const std::uint64_t seed = g.seed.value_or(1);
  if (g.config.empty()) {
    report_manifest(noisyot::flagship_newsvendor(seed, opts), opts.out_dir);
    return kOk;
  }
  auto j = noisyot::flagship_config(seed).effective;
  j.merge_patch(load_config(g));
  report_manifest(noisyot::run_experiment(noisyot::parse_experiment_config(j), opts), opts.out_dir);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic optimal-transport rates, tests and robust decisions for noisy data"};
  app.set_version_flag("--version", std::string(noisyot::tool_version()));
  app.require_subcommand(1);

  Globals g;
  RateArgs rate_args;
  auto* eot = app.add_subcommand("eot", "Entropic OT distance between two measures");
  auto* rate = app.add_subcommand("rate", "Rate function I or its smoothed version I^delta");
  auto* httest = app.add_subcommand("httest", "Error frequencies of the smoothed test (CSV)");
  auto* htrates = app.add_subcommand("htrates", "Fitted error-rate reports of the smoothed test");
  auto* prescribe = app.add_subcommand("prescribe", "Decision and budget from one data set");
  auto* disappoint = app.add_subcommand("disappoint", "Disappointment frequencies (CSV)");
  auto* run = app.add_subcommand("run", "Run every stage of an experiment config");
  auto* flagship = app.add_subcommand("flagship", "Gaussian-noise newsvendor comparison");
  for (auto* cmd : {eot, rate, httest, htrates, prescribe, disappoint, run, flagship}) add_globals(cmd, g);
  rate->add_option("--obs", rate_args.obs, "Observed measure (JSON or file)");
  rate->add_option("--prior", rate_args.prior, "Latent measure (JSON or file)");
  rate->add_option("--channel", rate_args.channel, "Channel (JSON or file)");
  rate->add_option("--delta", rate_args.delta, "Smoothing radius");
  rate->add_option("--method", rate_args.method, "closed or variational")
      ->check(CLI::IsMember({"closed", "variational"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*eot) return cmd_eot(g);
    if (*rate) return cmd_rate(g, rate_args);
    if (*httest) return cmd_httest(g, false);
    if (*htrates) return cmd_httest(g, true);
    if (*prescribe) return cmd_prescribe(g);
    if (*disappoint) return cmd_run(g, true);
    if (*run) return cmd_run(g, false);
    if (*flagship) return cmd_flagship(g);
  } catch (const noisyot::InvalidChannelError& e) {
    std::cerr << "noisy-ot: invalid channel (row " << e.row() << "): " << e.what() << "\n";
    return kInvalid;
  } catch (const noisyot::ValidationError& e) {
    std::cerr << "noisy-ot: " << e.what() << "\n";
    return kInvalid;
  } catch (const noisyot::DomainError& e) {
    std::cerr << "noisy-ot: " << e.what() << "\n";
    return kInvalid;
  } catch (const noisyot::DimensionError& e) {
    std::cerr << "noisy-ot: " << e.what() << "\n";
    return kInvalid;
  } catch (const noisyot::InfeasibleError& e) {
    std::cerr << "noisy-ot: " << e.what() << "\n";
    return kInvalid;
  } catch (const Json::exception& e) {
    std::cerr << "noisy-ot: malformed input: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "noisy-ot: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
