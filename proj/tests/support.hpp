#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "evitransfer/random.hpp"
#include "evitransfer/tensor.hpp"
#include "oracles.hpp"

namespace testing_support {

inline oracle::Mat to_rows(const evt::Matrix& m) {
  oracle::Mat out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

inline evt::Matrix from_rows(const oracle::Mat& rows) {
  evt::Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

inline evt::Matrix random_matrix(std::size_t rows, std::size_t cols, evt::Rng& rng,
                                 double lo = -1.0, double hi = 1.0) {
  evt::Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("evt_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
