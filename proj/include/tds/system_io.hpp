#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tds/feedback.hpp"
#include "tds/types.hpp"

namespace tds {

/// Structure problems in an otherwise well-formed JSON document.
class SchemaError : public Error {
 public:
  using Error::Error;
};

using Json = nlohmann::ordered_json;

/// On-disk system description: analysis terms and/or a feedback plant block.
struct SystemFile {
  std::optional<TimeDelaySystem> system;
  std::optional<Plant> plant;
};

Json matrix_to_json(const Matrix& M);
Matrix matrix_from_json(const Json& j, const std::string& field);

Json system_file_to_json(const SystemFile& f);
SystemFile system_file_from_json(const Json& j);

/// Reads and validates a system file. Throws ParseError (missing file or bad
/// JSON), SchemaError (wrong structure), or ValidationError (invariants).
SystemFile load_system(const std::string& path);
void save_system(const SystemFile& f, const std::string& path);

/// Analysis report: command and configuration echo plus the result payload.
/// Byte-identical output for identical inputs.
struct Report {
  std::string command;
  Json config;
  Json result;
  std::vector<std::string> warnings;
  // optional tabular rendering for CSV output
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;

  Json to_json() const;
};

std::string format_double(double v);

/// Serializes the report; format is "json" or "csv" (the latter only for
/// commands with a tabular payload). Writes atomically via a temp file.
std::string render_report(const Report& report, const std::string& format);
void emit(const Report& report, const std::string& format, const std::string& out_path);

}  // namespace tds
