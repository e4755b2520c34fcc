#pragma once

// Central finite differences for verifying analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fnc/batch.hpp"
#include "fnc/core_math.hpp"

namespace fnc {

using VectorListLoss = std::function<double(const std::vector<Vec>&)>;
using BatchLoss = std::function<double(const EmbeddingBatch&)>;

inline void check_step(double h) {
  require(h >= 1e-7 && h <= 1e-4, ErrorKind::config, "finite-difference step must lie in [1e-7, 1e-4]");
}

/// Gradient of loss(points) with respect to each raw coordinate. The
/// perturbed vector is re-normalized before evaluation, which yields the
/// tangent-space gradient the analytic losses report.
inline std::vector<Vec> finite_diff_gradient(const VectorListLoss& loss, std::vector<Vec> points,
                                             double h) {
  check_step(h);
  std::vector<Vec> grad(points.size());
  for (std::size_t r = 0; r < points.size(); ++r) {
    const Vec original = points[r];
    grad[r].assign(original.size(), 0.0);
    for (std::size_t c = 0; c < original.size(); ++c) {
      Vec bumped = original;
      bumped[c] += h;
      points[r] = l2_normalize(bumped);
      const double up = loss(points);
      bumped[c] = original[c] - h;
      points[r] = l2_normalize(bumped);
      const double down = loss(points);
      grad[r][c] = (up - down) / (2.0 * h);
    }
    points[r] = original;
  }
  return grad;
}

/// Same, over the main views of a batch. Pool entries stay fixed.
inline std::vector<Vec> finite_diff_gradient(const BatchLoss& loss, const EmbeddingBatch& batch,
                                             double h) {
  EmbeddingBatch work = batch;
  return finite_diff_gradient(
      [&](const std::vector<Vec>& views) {
        work.views = views;
        return loss(work);
      },
      batch.views, h);
}

/// max |a - n| / max |n| over all coordinates; absolute when the reference
/// gradient is identically zero.
inline double max_relative_error(const std::vector<Vec>& analytic, const std::vector<Vec>& numeric) {
  require(analytic.size() == numeric.size(), ErrorKind::shape, "gradient shape mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t r = 0; r < analytic.size(); ++r) {
    require(analytic[r].size() == numeric[r].size(), ErrorKind::shape, "gradient shape mismatch");
    for (std::size_t c = 0; c < analytic[r].size(); ++c) {
      diff = std::max(diff, std::abs(analytic[r][c] - numeric[r][c]));
      scale = std::max(scale, std::abs(numeric[r][c]));
    }
  }
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace fnc
