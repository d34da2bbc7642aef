#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

// Shared containers and utilities: planar image buffers, a deterministic
// RNG with derived per-index streams, and a bounded parallel_for whose
// thread count is capped by the UVFORGE_THREADS environment variable.
namespace uvforge {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::VectorXd;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// RGB image, double channels, row-major, index (y * width + x) * 3 + c.
struct Image3 {
  int width = 0;
  int height = 0;
  std::vector<double> pix;

  Image3() = default;
  Image3(int w, int h, double fill = 0.0) : width(w), height(h), pix(static_cast<size_t>(w) * h * 3, fill) {
    require(w >= 1 && h >= 1, "Image3: dimensions must be >= 1");
  }
  Image3(int w, int h, const Vector3d& fill) : Image3(w, h) {
    for (int i = 0; i < w * h; ++i)
      for (int c = 0; c < 3; ++c) pix[static_cast<size_t>(i) * 3 + c] = fill[c];
  }

  double& at(int y, int x, int c) { return pix[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pix[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  Vector3d rgb(int y, int x) const {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return {pix[i], pix[i + 1], pix[i + 2]};
  }
  void set_rgb(int y, int x, const Vector3d& v) {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    pix[i] = v[0];
    pix[i + 1] = v[1];
    pix[i + 2] = v[2];
  }

  int pixel_count() const { return width * height; }
  bool same_shape(const Image3& o) const { return width == o.width && height == o.height; }
};

/// Single-channel image, double values, row-major.
struct Image1 {
  int width = 0;
  int height = 0;
  std::vector<double> pix;

  Image1() = default;
  Image1(int w, int h, double fill = 0.0) : width(w), height(h), pix(static_cast<size_t>(w) * h, fill) {
    require(w >= 1 && h >= 1, "Image1: dimensions must be >= 1");
  }

  double& at(int y, int x) { return pix[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return pix[static_cast<size_t>(y) * width + x]; }

  int pixel_count() const { return width * height; }
};

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. Streams derived from (seed, index) via splitmix64 so
// per-sample generation is order-independent. Gaussian via Box-Muller on
// explicit uniforms to stay independent of libstdc++ distribution internals.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x5bf03635ea5c133fULL)) {}

  /// Derived stream for (seed, index); independent of draw order elsewhere.
  static Rng stream(uint64_t seed, uint64_t index) { return Rng(splitmix64(seed) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1)); }

  uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi_inclusive - lo + 1));
  }

  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  VectorXd gaussian_vector(int n, double sigma = 1.0) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = sigma * gaussian();
    return v;
  }

  Vector3d unit_vector() {
    // Rejection-free: z uniform in [-1,1], azimuth uniform.
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * M_PI);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

 private:
  uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// ---------------------------------------------------------------------------
// Parallelism. Loops passed here must write disjoint outputs and not throw;
// results are then identical for any thread count.
// ---------------------------------------------------------------------------

inline int max_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("UVFORGE_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return n;
}

template <class Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int count = end - begin;
  if (count <= 0) return;
  const int threads = std::min(max_threads(), count);
  if (threads <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = begin + t * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace uvforge
