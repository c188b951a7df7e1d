#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "stochadj/problems/ovm.hpp"
#include "stochadj/problems/problem.hpp"

namespace stochadj::cli {

using Json = nlohmann::json;

/// Read access to one JSON object that remembers which fields were used, so
/// finish() can reject anything unknown. Error messages carry the dotted
/// path of the field.
class Section {
 public:
  Section(const Json& object, std::string path);

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const;

  double number(const std::string& key, std::optional<double> fallback = {});
  int integer(const std::string& key, std::optional<int> fallback = {});
  std::uint64_t u64(const std::string& key, std::optional<std::uint64_t> fallback = {});
  bool boolean(const std::string& key, std::optional<bool> fallback = {});
  std::string string(const std::string& key, std::optional<std::string> fallback = {});
  Eigen::VectorXd vector(const std::string& key, std::optional<Eigen::VectorXd> fallback = {});
  Eigen::MatrixXd matrix(const std::string& key, std::optional<Eigen::MatrixXd> fallback = {});
  std::vector<std::string> strings(const std::string& key, std::optional<std::vector<std::string>> fallback = {});
  std::vector<int> integers(const std::string& key, std::optional<std::vector<int>> fallback = {});

  Section section(const std::string& key);
  std::optional<Section> optional_section(const std::string& key);

  void finish() const;

 private:
  const Json& get(const std::string& key);
  std::string field(const std::string& key) const { return path_ + "." + key; }

  const Json* object_;
  std::string path_;
  std::set<std::string> used_;
};

Json load_json(const std::filesystem::path& file);

struct Paths {
  std::filesystem::path config_dir;  // relative input files resolve here
  std::filesystem::path out_dir;     // outputs land here
};

struct BuiltProblem {
  std::string id;
  Problem problem;
  // OVM only.
  std::optional<OvmData> ovm_data;
  Eigen::VectorXd ovm_true;  // empty when the data came from a file
  Eigen::VectorXd ovm_lower;
  Eigen::VectorXd ovm_upper;
};

// Consumes and checks the whole "problem" section.
BuiltProblem build_problem(Section section, const Paths& paths);

struct OvmSettings {
  Eigen::VectorXd true_params;  // per vehicle block or full chain
  int vehicles = 1;
  int horizon = 600;
  double dt = 0.1;
  double lead_length = 5.0;
  LeadProfile lead;
  std::uint64_t data_seed = 1;
  std::optional<std::filesystem::path> data_csv;
  std::optional<std::filesystem::path> export_csv;
  Eigen::VectorXd theta0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Reads the OVM-specific fields of a problem section (id already consumed).
OvmSettings read_ovm_settings(Section& s, const Paths& paths);
// Data and problem for a chain of `vehicles` followers under `settings`.
BuiltProblem build_ovm_problem(const OvmSettings& settings, int vehicles, const Paths& paths);

}  // namespace stochadj::cli
