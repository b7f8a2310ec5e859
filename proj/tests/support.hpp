#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <random>
#include <string>

namespace testing {

// Scratch directory removed on scope exit.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mmroute_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

// Every numeric leaf of a JSON document keyed by its JSON pointer.
inline void numeric_leaves(const nlohmann::json& j, const std::string& at,
                           std::map<std::string, double>& out) {
  if (j.is_number()) {
    out[at] = j.get<double>();
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) numeric_leaves(*it, at + "/" + it.key(), out);
  } else if (j.is_array()) {
    for (std::size_t k = 0; k < j.size(); ++k) numeric_leaves(j[k], at + "/" + std::to_string(k), out);
  }
}

inline std::map<std::string, double> numeric_leaves(const nlohmann::json& j) {
  std::map<std::string, double> out;
  numeric_leaves(j, "", out);
  return out;
}

}  // namespace testing
