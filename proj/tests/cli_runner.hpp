#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cli {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string err;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Scratch directory unique to this process, removed on destruction.
class Scratch {
 public:
  explicit Scratch(const std::string& tag)
      : root_(fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  fs::path operator/(const std::string& s) const { return root_ / s; }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
};

/// Runs `env exe args`, discarding stdout and capturing stderr.
inline Run run(const Scratch& s, const std::string& exe, const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path err = s / ("stderr_" + std::to_string(counter++));
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + exe + "' " + args + " >/dev/null 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

inline nlohmann::ordered_json without_timing(const fs::path& p) {
  auto j = nlohmann::ordered_json::parse(slurp(p));
  j.erase("timing");
  return j;
}

/// Lists files that differ between two output directories. JSON files are
/// compared with their "timing" object removed, everything else byte for byte.
inline std::vector<std::string> diff_dirs(const fs::path& a, const fs::path& b) {
  std::vector<std::string> names, bad;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b))
    if (std::find(names.begin(), names.end(), e.path().filename().string()) == names.end())
      bad.push_back(e.path().filename().string());
  for (const auto& n : names) {
    if (!fs::exists(b / n)) {
      bad.push_back(n);
    } else if (fs::path(n).extension() == ".json") {
      if (without_timing(a / n) != without_timing(b / n)) bad.push_back(n);
    } else if (slurp(a / n) != slurp(b / n)) {
      bad.push_back(n);
    }
  }
  return bad;
}

}  // namespace cli
