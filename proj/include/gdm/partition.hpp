#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "gdm/error.hpp"

namespace gdm {

/// Hard assignment of N points to clusters 0..clusters-1. Rejected points
/// carry the label kOutlier.
struct Partition {
  static constexpr int kOutlier = -1;

  std::vector<int> labels;
  int clusters = 0;

  Partition() = default;
  Partition(std::vector<int> point_labels, int cluster_count)
      : labels(std::move(point_labels)), clusters(cluster_count) {
    for (int label : labels) {
      detail::require(label == kOutlier || (label >= 0 && label < clusters), ErrorKind::invalid_parameter,
                      "label outside [0, clusters)");
    }
  }

  std::size_t size() const { return labels.size(); }
  bool is_outlier(std::size_t n) const { return labels[n] == kOutlier; }

  std::vector<std::size_t> members(int cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < labels.size(); ++n) {
      if (labels[n] == cluster) out.push_back(n);
    }
    return out;
  }

  std::vector<std::size_t> outliers() const { return members(kOutlier); }

  std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(clusters), 0);
    for (int label : labels) {
      if (label != kOutlier) ++sizes[static_cast<std::size_t>(label)];
    }
    return sizes;
  }

  bool operator==(const Partition&) const = default;
};

/// Columns of `data` selected by `indices`, in order.
inline Eigen::MatrixXd gather_columns(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                      const std::vector<std::size_t>& indices) {
  Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = data.col(static_cast<Eigen::Index>(indices[j]));
  }
  return out;
}

}  // namespace gdm
