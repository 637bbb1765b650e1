// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>

#include "protomm/common.hpp"
#include "protomm/signal.hpp"

namespace protomm::test {

inline Mat<double> gaussian(int rows, int cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Mat<double> unit_rows(int rows, int cols, Rng& rng) { return gaussian(rows, cols, rng).rowwise().normalized(); }

inline Mat<double> random_probs(int rows, int cols, Rng& rng) {
  Mat<double> m = gaussian(rows, cols, rng).array().exp().matrix();
  for (int i = 0; i < rows; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

inline TimeSeriesWindow random_window(Modality m, int t_len, Rng& rng, double rate = 50.0) {
  TimeSeriesWindow w;
  w.modality = m;
  w.sample_rate_hz = rate;
  w.samples = gaussian(t_len, channels_for(m), rng).cast<float>();
  return w;
}

template <typename F>
Mat<double> central_difference(Mat<double>& x, F&& f, double h = 1e-6) {
  Mat<double> g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Mat<double>& a, const Mat<double>& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("protomm_" + tag + "_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace protomm::test
