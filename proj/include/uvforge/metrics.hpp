#pragma once

#include <Eigen/Eigenvalues>

#include <functional>
#include <memory>

#include "uvforge/core.hpp"

// Evaluation: Frechet distance between Gaussian feature statistics, masked
// variants, the L2,1 reconstruction error, and cosine similarity. Feature
// extractors are injected, never hard-wired.
namespace uvforge::metrics {

struct GaussianStats {
  VectorXd mean;
  MatrixXd cov;  // symmetric PSD
};

struct FeatureExtractor {
  std::string name;
  int dim = 0;
  std::function<VectorXd(const Image3&)> extract;
};

/// Flattened k x k average-pooled grayscale (channel mean), d = k^2.
inline FeatureExtractor make_downsample_extractor(int k = 8) {
  FeatureExtractor fx;
  fx.name = "downsample" + std::to_string(k);
  fx.dim = k * k;
  fx.extract = [k](const Image3& img) {
    VectorXd sum = VectorXd::Zero(k * k);
    VectorXd count = VectorXd::Zero(k * k);
    for (int y = 0; y < img.height; ++y) {
      const int cy = std::min(k - 1, y * k / img.height);
      for (int x = 0; x < img.width; ++x) {
        const int cx = std::min(k - 1, x * k / img.width);
        const double gray = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0;
        sum[cy * k + cx] += gray;
        count[cy * k + cx] += 1.0;
      }
    }
    for (int i = 0; i < k * k; ++i) sum[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
    return sum;
  };
  return fx;
}

/// Fixed-seed Gaussian random projection of all pixel channels to d dims.
/// The projection matrix is tied to the expected image resolution.
inline FeatureExtractor make_random_projection_extractor(int width, int height, int d = 128,
                                                         uint64_t seed = 7) {
  FeatureExtractor fx;
  fx.name = "randproj" + std::to_string(d);
  fx.dim = d;
  const int in_dim = width * height * 3;
  auto proj = std::make_shared<MatrixXd>(d, in_dim);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < in_dim; ++j) (*proj)(i, j) = scale * rng.gaussian();
  fx.extract = [proj, width, height](const Image3& img) {
    require(img.width == width && img.height == height,
            "random projection extractor: image resolution mismatch");
    return VectorXd((*proj) * Eigen::Map<const VectorXd>(img.pix.data(), img.pix.size()));
  };
  return fx;
}

/// Sample mean and unbiased (N-1) covariance, symmetrized.
inline GaussianStats gaussian_stats(const MatrixXd& features) {
  require(features.rows() >= 2, "gaussian_stats: need at least 2 samples");
  GaussianStats s;
  s.mean = features.colwise().mean();
  const MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

namespace detail {

inline MatrixXd psd_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  require(es.info() == Eigen::Success, "psd_sqrt: eigendecomposition failed");
  VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// |mu_r - mu_g|^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}), with the cross term
/// evaluated through the symmetric sandwich (S_r^{1/2} S_g S_r^{1/2})^{1/2}.
inline double fid(const GaussianStats& r, const GaussianStats& g) {
  require(r.mean.size() == g.mean.size(), "fid: dimension mismatch");
  const MatrixXd sr = detail::psd_sqrt(r.cov);
  const MatrixXd inner = sr * g.cov * sr;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (inner + inner.transpose()));
  require(es.info() == Eigen::Success, "fid: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value =
      (r.mean - g.mean).squaredNorm() + r.cov.trace() + g.cov.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

/// Extractor applied to sil * image + (1 - sil) * background.
inline VectorXd masked_features(const FeatureExtractor& extractor, const Image3& image,
                                const Image1& silhouette, const Vector3d& background = {0.5, 0.5, 0.5}) {
  require(image.width == silhouette.width && image.height == silhouette.height,
          "masked_features: dimension mismatch");
  Image3 blended(image.width, image.height, 0.0);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double s = silhouette.at(y, x);
      for (int c = 0; c < 3; ++c)
        blended.at(y, x, c) = s * image.at(y, x, c) + (1.0 - s) * background[c];
    }
  return extractor.extract(blended);
}

/// Mean over foreground pixels of the per-pixel RGB Euclidean difference.
inline double l21_error(const Image3& target, const Image3& rendered, const Image1& mask) {
  require(target.same_shape(rendered) && target.width == mask.width && target.height == mask.height,
          "l21_error: dimension mismatch");
  double sum = 0.0;
  int fg = 0;
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      if (mask.at(y, x) == 0.0) continue;
      ++fg;
      sum += (target.rgb(y, x) - rendered.rgb(y, x)).norm();
    }
  require(fg > 0, "l21_error: empty mask");
  return sum / fg;
}

inline double cosine_similarity(const VectorXd& f1, const VectorXd& f2) {
  require(f1.size() == f2.size(), "cosine_similarity: dimension mismatch");
  const double n1 = f1.norm();
  const double n2 = f2.norm();
  require(n1 > 0.0 && n2 > 0.0, "cosine_similarity: zero vector");
  return f1.dot(f2) / (n1 * n2);
}

/// Stacks extractor outputs for an image set into an N x d matrix.
inline MatrixXd extract_all(const FeatureExtractor& extractor, const std::vector<Image3>& images) {
  MatrixXd features(static_cast<int>(images.size()), extractor.dim);
  for (size_t i = 0; i < images.size(); ++i) features.row(static_cast<int>(i)) = extractor.extract(images[i]).transpose();
  return features;
}

}  // namespace uvforge::metrics
