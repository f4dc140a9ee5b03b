#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "fribble/binary_io.hpp"

namespace fribble::test {

inline std::filesystem::path test_dir() { return FRIBBLE_TEST_DIR; }
inline std::filesystem::path data_dir() { return FRIBBLE_DATA_DIR; }
inline std::filesystem::path test_data(const std::string& f) { return test_dir() / "data" / f; }
inline std::filesystem::path golden(const std::string& f) { return test_dir() / "golden" / f; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  return nlohmann::json::parse(io::read_text(p));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fribble_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fribble::test
