#include "noisyot/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "noisyot/errors.hpp"

namespace noisyot {

namespace {

std::string_view method_name(RateMethod m) {
  return m == RateMethod::ClosedForm ? "closed_form" : "variational";
}

std::string_view method_name(EstimationMethod m) {
  return m == EstimationMethod::MonteCarlo ? "monte_carlo" : "exact_binomial";
}

Json reals_to_json(std::span<const double> v) {
  Json out = Json::array();
  for (double x : v) out.push_back(number_to_json(x));
  return out;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

}  // namespace

Json number_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

double number_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "Infinity") return kInfinity;
    if (s == "-inf" || s == "-Infinity") return -kInfinity;
  }
  throw ValidationError("expected a number or \"inf\", got " + j.dump());
}

std::vector<double> reals_from_json(const Json& j, std::string_view what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(number_from_json(v));
  return out;
}

ProbMeasure prob_measure_from_json(const Json& j, std::string_view what) {
  try {
    return ProbMeasure(reals_from_json(j, what));
  } catch (const DomainError& e) {
    throw ValidationError(std::string(what) + ": " + e.what());
  }
}

Matrix matrix_from_json(const Json& j, std::string_view what) {
  if (!j.is_array() || j.empty()) {
    throw ValidationError(std::string(what) + ": expected a nonempty array of rows");
  }
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) rows.push_back(reals_from_json(r, what));
  for (const auto& r : rows) {
    if (r.size() != rows.front().size() || r.empty()) {
      throw ValidationError(std::string(what) + ": rows must be nonempty and of equal length");
    }
  }
  return Matrix::from_rows(rows);
}

Json to_json(const ProbMeasure& p) { return reals_to_json(p.weights()); }

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) out.push_back(reals_to_json(m.row(i)));
  return out;
}

Json to_json(const Channel& ch) {
  return Json{{"cost", to_json(ch.cost())},
              {"base", reals_to_json(ch.base().weights())},
              {"inf_token", "inf"}};
}

Json to_json(const SampleRecord& s) {
  return Json{{"seed", s.seed}, {"indices", s.indices}};
}

Json to_json(const TransportPlan& plan) {
  return Json{{"matrix", to_json(plan.matrix)},
              {"row_marginal", to_json(plan.row_marginal)},
              {"col_marginal", to_json(plan.col_marginal)}};
}

Json to_json(const SinkhornReport& r) {
  return Json{{"value", number_to_json(r.value)},
              {"plan", to_json(r.plan)},
              {"iterations", r.iterations},
              {"final_marginal_error", number_to_json(r.final_marginal_error)},
              {"converged", r.converged}};
}

Json to_json(const RateEvaluation& r) {
  Json out{{"value", number_to_json(r.value)}, {"method", method_name(r.method)}};
  if (r.witness_q) out["witness_q"] = to_json(*r.witness_q);
  if (r.witness_plan) out["witness_plan"] = to_json(*r.witness_plan);
  if (r.method == RateMethod::Variational) {
    out["iterations"] = r.iterations;
    out["converged"] = r.converged;
    out["gap"] = number_to_json(r.gap);
    if (r.closed_form_terms) {
      const auto& t = *r.closed_form_terms;
      out["closed_form_terms"] = Json{{"transport", number_to_json(t.transport)},
                                      {"latent_kl", number_to_json(t.latent_kl)},
                                      {"base_kl", number_to_json(t.base_kl)},
                                      {"total", number_to_json(t.total)}};
    }
  }
  return out;
}

Json to_json(const SmoothedRateEvaluation& r) {
  return Json{{"value", number_to_json(r.value)},
              {"witness_p2", to_json(r.witness_p2)},
              {"delta", r.delta},
              {"iterations", r.iterations},
              {"gap", number_to_json(r.gap)},
              {"converged", r.converged}};
}

Json to_json(const Prescription& p, const DecisionProblem& prob) {
  Json out{{"decision_index", p.decision_index},
           {"budget", number_to_json(p.budget)},
           {"per_decision_values", reals_to_json(p.per_decision_values)}};
  if (p.decision_index < prob.decision_labels.size()) {
    out["decision_label"] = prob.decision_labels[p.decision_index];
  }
  if (p.worst_case_witness) out["worst_case_witness"] = to_json(*p.worst_case_witness);
  return out;
}

Json to_json(const ErrorRateReport& r) {
  Json sentinel = Json::array();
  for (char s : r.sentinel) sentinel.push_back(s != 0);
  return Json{{"n_grid", r.n_grid},
              {"errors", reals_to_json(r.errors)},
              {"reps", r.reps},
              {"log_prob", reals_to_json(r.log_prob)},
              {"log_upper_bound", reals_to_json(r.log_upper_bound)},
              {"sentinel", sentinel},
              {"slope", r.slope_defined ? number_to_json(r.slope) : Json(nullptr)},
              {"slope_stderr", r.slope_defined ? number_to_json(r.slope_stderr) : Json(nullptr)},
              {"method", method_name(r.method)}};
}

Channel channel_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("channel: expected an object");
  try {
    if (j.contains("type")) {
      const auto type = j.at("type").get<std::string>();
      if (type == "noiseless") return channel_noiseless(j.at("n").get<std::size_t>());
      if (type == "irrelevant") {
        return channel_irrelevant(prob_measure_from_json(j.at("target"), "channel.target"),
                                  j.at("n").get<std::size_t>());
      }
      if (type == "gaussian") {
        const auto src = reals_from_json(j.at("source_grid"), "channel.source_grid");
        const auto obs = j.contains("obs_grid")
                             ? reals_from_json(j.at("obs_grid"), "channel.obs_grid")
                             : src;
        return channel_gaussian_grid(src, obs, number_from_json(j.at("sigma")));
      }
      throw ValidationError("channel: unknown type '" + type + "'");
    }
    if (j.contains("kernel")) return channel_from_kernel(matrix_from_json(j.at("kernel"), "channel.kernel"));
    if (j.contains("cost")) {
      if (j.contains("inf_token") && j.at("inf_token") != "inf") {
        throw ValidationError("channel: only \"inf\" is supported as inf_token");
      }
      auto cost = matrix_from_json(j.at("cost"), "channel.cost");
      auto base = j.contains("base")
                      ? BaseWeights(reals_from_json(j.at("base"), "channel.base"))
                      : BaseWeights::counting(cost.cols());
      return Channel::from_canonical_cost(std::move(cost), std::move(base));
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("channel: ") + e.what());
  } catch (const InvalidChannelError& e) {
    throw;
  } catch (const DomainError& e) {
    throw ValidationError(std::string("channel: ") + e.what());
  } catch (const DimensionError& e) {
    throw ValidationError(std::string("channel: ") + e.what());
  }
  throw ValidationError("channel: expected \"cost\", \"kernel\" or \"type\"");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) throw DimensionError("CsvTable: row width differs from header");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  std::string out;
  const auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k > 0) out += ',';
      out += csv_escape(cells[k]);
    }
    out += '\n';
  };
  emit(header_);
  for (const auto& r : rows_) emit(r);
  return out;
}

CsvTable error_rate_csv(const ErrorRateReport& r) {
  CsvTable t({"N", "errors", "reps", "log_freq", "sentinel_flag"});
  for (std::size_t k = 0; k < r.n_grid.size(); ++k) {
    t.add_row({std::to_string(r.n_grid[k]), format_double(r.errors[k]),
               std::to_string(r.reps[k]),
               format_double(r.sentinel[k] ? r.log_upper_bound[k] : r.log_prob[k]),
               r.sentinel[k] ? "1" : "0"});
  }
  return t;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out += kHex[digest[k] >> 4];
    out += kHex[digest[k] & 0xf];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Json read_json_file(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace noisyot
