#pragma once

// JSON and CSV encodings. Infinite values are written as the strings "inf"
// and "-inf" since JSON has no literal for them.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "noisyot/channels.hpp"
#include "noisyot/decisions.hpp"
#include "noisyot/matrix.hpp"
#include "noisyot/measures.hpp"
#include "noisyot/montecarlo.hpp"
#include "noisyot/rate.hpp"
#include "noisyot/transport.hpp"

namespace noisyot {

using Json = nlohmann::json;

Json number_to_json(double v);
/// Accepts a JSON number or one of "inf", "+inf", "-inf". Throws ValidationError.
double number_from_json(const Json& j);

Json to_json(const ProbMeasure& p);
Json to_json(const Matrix& m);
Json to_json(const Channel& ch);
Json to_json(const SampleRecord& s);
Json to_json(const TransportPlan& plan);
Json to_json(const SinkhornReport& r);
Json to_json(const RateEvaluation& r);
Json to_json(const SmoothedRateEvaluation& r);
Json to_json(const Prescription& p, const DecisionProblem& prob);
Json to_json(const ErrorRateReport& r);

/// The probability-vector parsers throw ValidationError with `what` in the message.
ProbMeasure prob_measure_from_json(const Json& j, std::string_view what);
Matrix matrix_from_json(const Json& j, std::string_view what);
std::vector<double> reals_from_json(const Json& j, std::string_view what);

/// Parses {"cost", "base", "inf_token"} exactly as written by to_json, so a
/// saved channel reloads bit for bit. Also accepts {"kernel": [[...]]} and
/// {"type": "noiseless" | "irrelevant" | "gaussian", ...}.
Channel channel_from_json(const Json& j);

/// Shortest decimal that round-trips; "inf", "-inf" and "nan" otherwise.
std::string format_double(double v);

/// RFC 4180 style table with "\n" line ends.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> cells);
  std::string str() const;

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Columns N, errors, reps, log_freq, sentinel_flag. Zero-count cells carry
/// log(3 / reps) with sentinel_flag = 1.
CsvTable error_rate_csv(const ErrorRateReport& r);

std::string sha256_hex(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
/// Reads a JSON file; parse errors become ValidationError.
Json read_json_file(const std::filesystem::path& path);

}  // namespace noisyot
