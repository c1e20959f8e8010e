// Small I/O layer shared by every module: round-trip-exact number formatting,
// JSON file helpers and a no-frills CSV reader/writer. CSV fields never contain
// commas or quotes in this project, so no escaping is implemented.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace merl {

using json = nlohmann::json;

// Raised on malformed configs / files; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest decimal string that parses back to exactly the same double.
std::string fmt_double(double v);
double parse_double(const std::string& s);

std::string fnv1a64_hex(const std::string& data);
std::string now_iso8601();

void ensure_dir(const std::filesystem::path& dir);
json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const json& j);

json to_json(const Eigen::VectorXd& v);
json to_json(const Eigen::MatrixXd& m);  // array of rows
Eigen::VectorXd vector_from_json(const json& j);
Eigen::MatrixXd matrix_from_json(const json& j);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int col(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace merl
