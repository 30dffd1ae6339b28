#ifndef ALCA_TESTUTIL_HPP
#define ALCA_TESTUTIL_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "model.hpp"
#include "tensor.hpp"

namespace alca::testutil {

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  const auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < ad.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(ad[i]) -
                                     static_cast<double>(bd[i])));
  }
  return worst;
}

template <class S>
Tensor<S> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                        double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<S> t = Tensor<S>::zeros(std::move(shape));
  for (auto& v : t.raw()) v = static_cast<S>(dist(rng));
  return t;
}

// 5-joint chain rig used by small pipeline tests and the gradient probes.
inline SkeletonGraph chain5_graph() {
  SkeletonGraph g;
  g.joints = 5;
  g.center = 2;
  g.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  g.parts = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  g.pool_parts = {{0, 1}, {2}, {3}, {4}};
  g.validate();
  return g;
}

// Scratch directory for files a test writes; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("alca_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace alca::testutil

#endif
