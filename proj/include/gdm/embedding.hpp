#pragma once

// Embeddings of two-view point correspondences.
//
// The Kronecker embedding (x, y, 1) (x) (x', y', 1) maps every correspondence
// of one rigid motion into the orthogonal complement of vec(F), so a single
// body occupies a subspace of R^9 of dimension at most 8. The linear
// embedding simply stacks the four coordinates.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gdm/error.hpp"

namespace gdm {

/// Column-major D x N data matrix; column j is the embedded vector of point j.
using DataMatrix = Eigen::MatrixXd;

struct PointCorrespondence {
  double x = 0.0;
  double y = 0.0;
  double x2 = 0.0;  // x' in the second view
  double y2 = 0.0;  // y' in the second view

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(x2) && std::isfinite(y2);
  }
};

enum class EmbeddingMode { nonlinear, linear };

inline constexpr int ambient_dimension(EmbeddingMode mode) {
  return mode == EmbeddingMode::nonlinear ? 9 : 4;
}

/// (xx', x'y, x', xy', yy', y', x, y, 1)
inline std::array<double, 9> embed_nonlinear(const PointCorrespondence& pc) {
  detail::require(pc.finite(), ErrorKind::invalid_input, "correspondence has non-finite coordinates");
  const double x = pc.x, y = pc.y, xp = pc.x2, yp = pc.y2;
  return {x * xp, xp * y, xp, x * yp, y * yp, yp, x, y, 1.0};
}

inline std::array<double, 4> embed_linear(const PointCorrespondence& pc) {
  detail::require(pc.finite(), ErrorKind::invalid_input, "correspondence has non-finite coordinates");
  return {pc.x, pc.y, pc.x2, pc.y2};
}

namespace detail {

// Per-view affine map: centroid to the origin, then one isotropic scale so
// the largest absolute coordinate of the view is 1.
struct ViewNormalizer {
  double cx = 0.0, cy = 0.0, scale = 1.0;

  static ViewNormalizer fit(std::span<const double> xs, std::span<const double> ys) {
    ViewNormalizer t;
    const auto n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      t.cx += xs[i];
      t.cy += ys[i];
    }
    t.cx /= n;
    t.cy /= n;
    double extent = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      extent = std::max({extent, std::abs(xs[i] - t.cx), std::abs(ys[i] - t.cy)});
    }
    t.scale = extent > 0.0 ? 1.0 / extent : 1.0;
    return t;
  }

  double map_x(double x) const { return (x - cx) * scale; }
  double map_y(double y) const { return (y - cy) * scale; }
};

}  // namespace detail

/// Normalizes each view independently into [-1, 1] (see ViewNormalizer).
inline std::vector<PointCorrespondence> normalize_views(std::span<const PointCorrespondence> pcs) {
  std::vector<double> x1, y1, x2, y2;
  x1.reserve(pcs.size());
  y1.reserve(pcs.size());
  x2.reserve(pcs.size());
  y2.reserve(pcs.size());
  for (const auto& pc : pcs) {
    x1.push_back(pc.x);
    y1.push_back(pc.y);
    x2.push_back(pc.x2);
    y2.push_back(pc.y2);
  }
  const auto first = detail::ViewNormalizer::fit(x1, y1);
  const auto second = detail::ViewNormalizer::fit(x2, y2);
  std::vector<PointCorrespondence> out;
  out.reserve(pcs.size());
  for (const auto& pc : pcs) {
    out.push_back({first.map_x(pc.x), first.map_y(pc.y), second.map_x(pc.x2), second.map_y(pc.y2)});
  }
  return out;
}

inline DataMatrix embed_dataset(std::span<const PointCorrespondence> pcs, EmbeddingMode mode,
                                bool normalize = false) {
  detail::require(!pcs.empty(), ErrorKind::invalid_input, "no correspondences to embed");
  for (const auto& pc : pcs) {
    detail::require(pc.finite(), ErrorKind::invalid_input, "correspondence has non-finite coordinates");
  }
  std::vector<PointCorrespondence> normalized;
  if (normalize) {
    normalized = normalize_views(pcs);
    pcs = normalized;
  }
  const int rows = ambient_dimension(mode);
  DataMatrix data(rows, static_cast<Eigen::Index>(pcs.size()));
  for (std::size_t j = 0; j < pcs.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    if (mode == EmbeddingMode::nonlinear) {
      const auto v = embed_nonlinear(pcs[j]);
      for (int i = 0; i < 9; ++i) data(i, col) = v[static_cast<std::size_t>(i)];
    } else {
      const auto v = embed_linear(pcs[j]);
      for (int i = 0; i < 4; ++i) data(i, col) = v[static_cast<std::size_t>(i)];
    }
  }
  return data;
}

}  // namespace gdm
