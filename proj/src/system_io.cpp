#include "tds/system_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace tds {

Json matrix_to_json(const Matrix& M) {
  Json rows = Json::array();
  for (int i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw SchemaError(field + ": expected an array of arrays");
  }
  const size_t rows = j.size();
  const size_t cols = j[0].size();
  Matrix M(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw SchemaError(field + ": ragged rows (row " + std::to_string(r) + ")");
    }
    for (size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) {
        throw SchemaError(field + ": non-numeric entry at row " + std::to_string(r) + ", col " +
                          std::to_string(c));
      }
      const double v = j[r][c].get<double>();
      if (!std::isfinite(v)) {
        throw ValidationError(field + ": non-finite entry at row " + std::to_string(r) +
                              ", col " + std::to_string(c));
      }
      M(r, c) = v;
    }
  }
  return M;
}

namespace {

Vector column_from_json(const Json& j, const std::string& field) {
  if (j.is_array() && !j.empty() && j[0].is_number()) {
    Vector v(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw SchemaError(field + ": non-numeric entry");
      v(i) = j[i].get<double>();
      if (!std::isfinite(v(i))) throw ValidationError(field + ": non-finite entry");
    }
    return v;
  }
  const Matrix M = matrix_from_json(j, field);
  if (M.cols() != 1) throw SchemaError(field + ": expected a single column");
  return M.col(0);
}

}  // namespace

Json system_file_to_json(const SystemFile& f) {
  Json j;
  j["schema"] = 1;
  if (f.system) {
    j["n"] = f.system->dim();
    Json terms = Json::array();
    for (const auto& t : f.system->terms) {
      Json term;
      term["delay"] = t.offset;
      term["variable"] = t.tau_multiplicity > 0;
      term["matrix"] = matrix_to_json(t.A);
      terms.push_back(std::move(term));
    }
    j["terms"] = std::move(terms);
    if (f.system->B) j["input"] = Json{{"B", matrix_to_json(*f.system->B)}};
  }
  if (f.plant) {
    Json p;
    p["A0"] = matrix_to_json(f.plant->A0);
    p["A1"] = matrix_to_json(f.plant->A1);
    p["h"] = f.plant->h;
    Json b = Json::array();
    for (int i = 0; i < f.plant->B.size(); ++i) b.push_back(f.plant->B(i));
    p["B"] = std::move(b);
    j["plant"] = std::move(p);
  }
  return j;
}

SystemFile system_file_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("top level: expected an object");
  if (!j.contains("terms") && !j.contains("plant")) {
    throw SchemaError("top level: need at least one of \"terms\" or \"plant\"");
  }
  SystemFile f;
  if (j.contains("terms")) {
    if (!j["terms"].is_array() || j["terms"].empty()) {
      throw SchemaError("terms: expected a nonempty array");
    }
    TimeDelaySystem sys;
    size_t i = 0;
    for (const auto& term : j["terms"]) {
      const std::string field = "terms[" + std::to_string(i++) + "]";
      if (!term.is_object() || !term.contains("matrix")) {
        throw SchemaError(field + ": expected an object with a \"matrix\" key");
      }
      DelayTerm t;
      t.A = matrix_from_json(term["matrix"], field + ".matrix");
      if (term.contains("delay")) {
        if (!term["delay"].is_number()) throw SchemaError(field + ".delay: expected a number");
        t.offset = term["delay"].get<double>();
      }
      if (term.contains("variable")) {
        if (!term["variable"].is_boolean()) {
          throw SchemaError(field + ".variable: expected a boolean");
        }
        t.tau_multiplicity = term["variable"].get<bool>() ? 1 : 0;
      }
      sys.terms.push_back(std::move(t));
    }
    if (j.contains("input")) {
      if (!j["input"].is_object() || !j["input"].contains("B")) {
        throw SchemaError("input: expected an object with a \"B\" key");
      }
      sys.B = matrix_from_json(j["input"]["B"], "input.B");
    }
    sys.validate();
    if (j.contains("n")) {
      if (!j["n"].is_number_integer() || j["n"].get<int>() != sys.dim()) {
        throw SchemaError("n: does not match the matrix dimension");
      }
    }
    f.system = std::move(sys);
  }
  if (j.contains("plant")) {
    const Json& p = j["plant"];
    for (const char* key : {"A0", "A1", "h", "B"}) {
      if (!p.contains(key)) throw SchemaError(std::string("plant.") + key + ": missing");
    }
    Plant plant;
    plant.A0 = matrix_from_json(p["A0"], "plant.A0");
    plant.A1 = matrix_from_json(p["A1"], "plant.A1");
    if (!p["h"].is_number()) throw SchemaError("plant.h: expected a number");
    plant.h = p["h"].get<double>();
    plant.B = column_from_json(p["B"], "plant.B");
    plant.validate();
    f.plant = std::move(plant);
  }
  return f;
}

SystemFile load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open system file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid JSON in " + path + ": " + e.what());
  }
  return system_file_from_json(j);
}

void save_system(const SystemFile& f, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp);
    out << system_file_to_json(f).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Json Report::to_json() const {
  Json j;
  j["schema"] = 1;
  j["command"] = command;
  j["config"] = config;
  j["warnings"] = warnings;
  j["result"] = result;
  return j;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string render_report(const Report& report, const std::string& format) {
  if (format == "json") {
    return report.to_json().dump(2) + "\n";
  }
  if (format == "csv") {
    if (report.csv_header.empty()) {
      throw ValidationError("csv output is not available for command '" + report.command + "'");
    }
    std::ostringstream out;
    for (size_t i = 0; i < report.csv_header.size(); ++i) {
      if (i) out << ",";
      out << report.csv_header[i];
    }
    out << "\n";
    for (const auto& row : report.csv_rows) {
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) out << ",";
        out << row[i];
      }
      out << "\n";
    }
    return out.str();
  }
  throw ValidationError("unknown output format '" + format + "' (use json or csv)");
}

void emit(const Report& report, const std::string& format, const std::string& out_path) {
  const std::string body = render_report(report, format);
  if (out_path.empty() || out_path == "-") {
    std::fwrite(body.data(), 1, body.size(), stdout);
    return;
  }
  const std::string tmp = out_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << body;
  }
  std::filesystem::rename(tmp, out_path);
}

}  // namespace tds
