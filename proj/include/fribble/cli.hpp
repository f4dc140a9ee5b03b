#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"

namespace fribble::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Effective configuration of one command; written as run.json next to the
// command's outputs and accepted back through --config.
struct RunConfig {
  std::string command;
  std::string grammar;
  std::string parts;
  std::string hand;
  std::uint64_t seed = 1;
  int iterations = 10000;
  int burn_in = 1000;
  std::string modality = "both";
  std::string mode = "full";
  std::string out = "out";
  int jobs = 1;
  double sharpness = 1.0;
  std::string rule = "max-posterior";
  int max_depth = 12;
  int count = 8;             // sample
  std::string likelihoods;   // oracle-check: JSON object yield -> likelihood

  nlohmann::json to_json() const;
  // Fields missing from `j` keep their current values.
  void merge_json(const nlohmann::json& j);
  // Throws std::invalid_argument on a bad value or a missing input file.
  void validate() const;

  std::filesystem::path dataset_dir() const;
  std::filesystem::path command_dir() const;
};

std::filesystem::path default_data_path(const std::string& file);

// Entry point behind the fribble executable. Returns the process exit code:
// 0 on success, 1 on a usage error, 2 on a runtime error (including a
// failed oracle check).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fribble::cli
