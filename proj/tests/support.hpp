#pragma once

#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "docgraph/autodiff.hpp"
#include "docgraph/rng.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("docgraph-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string data_file(const std::string& name) { return std::string(DOCGRAPH_TEST_DATA) + "/" + name; }

inline docgraph::ad::Matrix random_matrix(docgraph::SplitMix64& rng, std::size_t r, std::size_t c,
                                          double lo = -1.0, double hi = 1.0) {
  docgraph::ad::Matrix m(r, c);
  for (auto& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

inline void check_close(const docgraph::ad::Matrix& a, const docgraph::ad::Matrix& b, double tol) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::size_t i = 0; i < a.size(); ++i) {
    INFO("entry " << i << ": " << a.data[i] << " vs " << b.data[i]);
    CHECK(std::fabs(a.data[i] - b.data[i]) <= tol);
  }
}

}  // namespace testing
