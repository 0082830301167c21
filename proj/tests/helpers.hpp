#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "splitdiag/dataset.hpp"

namespace testing_support {

inline splitdiag::Dataset csv(const std::string& text, splitdiag::CsvOptions opts = {}) {
  std::istringstream in(text);
  return splitdiag::parse_csv(in, "inline", opts);
}

inline std::filesystem::path data_file(const char* name) { return std::filesystem::path(SPLITDIAG_DATA_DIR) / name; }

inline const splitdiag::Dataset& abalone() {
  static const splitdiag::Dataset ds = splitdiag::load_csv(data_file("abalone.csv"));
  return ds;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string tag = info ? std::string(info->test_suite_name()) + "_" + info->name() : "splitdiag";
    path_ = std::filesystem::temp_directory_path() / ("splitdiag_" + tag + "_" + std::to_string(std::random_device{}()));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Dataset with numeric columns c0..c{d-1} built from a matrix.
inline splitdiag::Dataset from_matrix(const Eigen::MatrixXd& m, const std::string& prefix = "c") {
  std::ostringstream out;
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << prefix << j;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt::format("{}", m(i, j));
    out << '\n';
  }
  return csv(out.str());
}

}  // namespace testing_support
