#pragma once

// Global dimension minimization (GDM) for hybrid linear modeling.
//
// One restart runs
//   1. greedy agglomerative initialization on hard global dimension,
//   2. projected gradient descent on the soft membership matrix,
//   3. argmax thresholding back to a hard partition,
//   4. single-point reassignment sweeps ("genetic" clean-up),
// and the partition with the lowest hard global dimension over all restarts
// is returned.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gdm/dimension.hpp"
#include "gdm/error.hpp"
#include "gdm/objective.hpp"
#include "gdm/partition.hpp"

namespace gdm {

struct GdmConfig {
  int clusters = 2;
  double eps = 0.35;
  double p = 15.0;
  int restarts = 10;        // n1
  int grad_iters = 30;      // n2
  int genetic_passes = 10;  // n3
  double step = 0.3;        // average move of the most affected columns
  int merge_candidates = 100;
  std::uint64_t seed = 0;
  int threads = 1;

  ObjectiveParams objective(double alpha = 0.01) const { return {eps, p, alpha}; }

  void validate() const {
    detail::require(clusters >= 1, ErrorKind::invalid_parameter, "K must be at least 1");
    detail::require(restarts >= 0 && grad_iters >= 0 && genetic_passes >= 0, ErrorKind::invalid_parameter,
                    "iteration counts must be nonnegative");
    detail::require(step > 0.0, ErrorKind::invalid_parameter, "step must be positive");
    detail::require(merge_candidates >= 1, ErrorKind::invalid_parameter, "merge candidates must be positive");
    detail::require(threads >= 1, ErrorKind::invalid_parameter, "threads must be positive");
    objective().validate();
  }
};

struct SegmentationResult {
  Partition partition;
  double gd_value = 0.0;
  Eigen::VectorXd per_cluster_dims;
  MembershipMatrix membership;  // soft membership after descent, winning restart
  int restarts_run = 0;
  int best_restart = 0;
  std::vector<double> restart_values;  // final hard GD of every restart
  std::vector<double> trace;           // soft GD per descent iteration, winning restart
};

using Rng = std::mt19937_64;

/// Independent engine for restart `stream` of a run seeded with `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(seq);
}

/// Euclidean projection onto the probability simplex {w >= 0, sum w = 1}.
inline Eigen::VectorXd project_simplex(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Eigen::Index k = v.size();
  if (k == 0) return {};
  std::vector<double> sorted(v.data(), v.data() + k);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    running += sorted[static_cast<std::size_t>(j)];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0).matrix();
}

inline void project_columns(Eigen::MatrixXd& m) {
  for (Eigen::Index n = 0; n < m.cols(); ++n) m.col(n) = project_simplex(m.col(n));
}

namespace detail {

// Empirical dimension of a column subset; empty or zero sets are 0.
inline double subset_dimension(const Eigen::Ref<const Eigen::MatrixXd>& data, const std::vector<std::size_t>& members,
                               double eps, double scale) {
  if (members.empty()) return 0.0;
  const Eigen::VectorXd sigma = singular_values(gather_columns(data, members));
  if (sigma.size() == 0 || is_degenerate(sigma.maxCoeff(), scale)) return 0.0;
  return empirical_dimension(sigma, eps);
}

// Relabels so cluster ids appear in order of their smallest member.
inline Partition canonical_partition(const std::vector<std::vector<std::size_t>>& sets, std::size_t points,
                                     int clusters) {
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return *std::min_element(sets[a].begin(), sets[a].end()) < *std::min_element(sets[b].begin(), sets[b].end());
  });
  std::vector<int> labels(points, Partition::kOutlier);
  for (std::size_t id = 0; id < order.size(); ++id) {
    for (std::size_t n : sets[order[id]]) labels[n] = static_cast<int>(id);
  }
  return Partition(std::move(labels), clusters);
}

}  // namespace detail

/// Agglomerative initialization: start from singletons and repeatedly commit
/// the sampled merge that yields the lowest hard global dimension.
inline Partition greedy_merge_init(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto points = static_cast<std::size_t>(data.cols());
  const auto target = static_cast<std::size_t>(cfg.clusters);
  const double scale = detail::data_scale(data);

  std::vector<std::vector<std::size_t>> sets(points);
  std::vector<double> dims(points);
  for (std::size_t n = 0; n < points; ++n) {
    sets[n] = {n};
    dims[n] = detail::is_degenerate(data.col(static_cast<Eigen::Index>(n)).norm(), scale) ? 0.0 : 1.0;
  }
  if (points <= target) return detail::canonical_partition(sets, points, cfg.clusters);

  const double p = cfg.p;
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  std::unordered_set<std::uint64_t> seen;
  while (sets.size() > target) {
    const std::size_t s = sets.size();
    const std::size_t total_pairs = s * (s - 1) / 2;
    candidates.clear();
    if (total_pairs <= static_cast<std::size_t>(cfg.merge_candidates)) {
      for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = a + 1; b < s; ++b) candidates.emplace_back(a, b);
    } else {
      seen.clear();
      std::uniform_int_distribution<std::size_t> pick(0, s - 1);
      while (candidates.size() < static_cast<std::size_t>(cfg.merge_candidates)) {
        std::size_t a = pick(rng);
        std::size_t b = pick(rng);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (seen.insert(static_cast<std::uint64_t>(a) * s + b).second) candidates.emplace_back(a, b);
      }
    }

    // Only the merged pair changes, so ranking by the change in sum d^p is
    // ranking by global dimension.
    double best_change = std::numeric_limits<double>::infinity();
    double best_dim = 0.0;
    std::size_t best = 0;
    std::vector<std::size_t> merged;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto [a, b] = candidates[c];
      merged = sets[a];
      merged.insert(merged.end(), sets[b].begin(), sets[b].end());
      const double dim = detail::subset_dimension(data, merged, cfg.eps, scale);
      const double change = std::pow(dim, p) - std::pow(dims[a], p) - std::pow(dims[b], p);
      if (change < best_change) {
        best_change = change;
        best_dim = dim;
        best = c;
      }
    }
    const auto [a, b] = candidates[best];
    sets[a].insert(sets[a].end(), sets[b].begin(), sets[b].end());
    dims[a] = best_dim;
    sets.erase(sets.begin() + static_cast<std::ptrdiff_t>(b));
    dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(b));
  }
  return detail::canonical_partition(sets, points, cfg.clusters);
}

inline Partition greedy_merge_init(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg) {
  Rng rng = make_stream(cfg.seed, 0);
  return greedy_merge_init(data, cfg, rng);
}

/// Mean Euclidean norm of the ceil(N / 10) largest gradient columns.
inline double step_scale(const Eigen::Ref<const Eigen::MatrixXd>& gradient) {
  const Eigen::Index n = gradient.cols();
  if (n == 0) return 0.0;
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) norms[static_cast<std::size_t>(j)] = gradient.col(j).norm();
  const auto top = static_cast<std::size_t>((n + 9) / 10);
  std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(top - 1), norms.end(),
                   std::greater<>());
  return std::accumulate(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(top), 0.0) /
         static_cast<double>(top);
}

using ObjectiveFn = std::function<ObjectiveEvaluation(const Eigen::MatrixXd&)>;

/// Projected gradient descent for a fixed number of iterations. `trace`, when
/// given, receives the objective at every iterate including the last.
inline Eigen::MatrixXd descend_with(const Eigen::MatrixXd& start, int iterations, double step,
                                    const ObjectiveFn& objective, std::vector<double>* trace = nullptr) {
  Eigen::MatrixXd m = start;
  for (int it = 0; it < iterations; ++it) {
    const ObjectiveEvaluation eval = objective(m);
    if (trace) trace->push_back(eval.value);
    const double rho = step_scale(eval.gradient);
    if (!(rho > 0.0) || !std::isfinite(rho)) return m;
    m -= (step / rho) * eval.gradient;
    project_columns(m);
  }
  if (trace && iterations > 0) trace->push_back(objective(m).value);
  return m;
}

inline MembershipMatrix descend(const Eigen::Ref<const Eigen::MatrixXd>& data, const MembershipMatrix& start,
                                const GdmConfig& cfg, std::vector<double>* trace = nullptr) {
  cfg.validate();
  const ObjectiveParams params = cfg.objective();
  ObjectiveFn objective = [&](const Eigen::MatrixXd& m) {
    return evaluate_with_gradient(data, m, params, DegeneratePolicy::zero);
  };
  return MembershipMatrix(descend_with(start.values(), cfg.grad_iters, cfg.step, objective, trace));
}

/// Column argmax; ties go to the lowest cluster index.
inline Partition threshold(const MembershipMatrix& m) {
  std::vector<int> labels(static_cast<std::size_t>(m.points()));
  for (Eigen::Index n = 0; n < m.points(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < m.clusters(); ++k) {
      if (m(k, n) > m(best, n)) best = k;
    }
    labels[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return Partition(std::move(labels), static_cast<int>(m.clusters()));
}

/// Single-point reassignment sweeps. Each point in index order moves to the
/// cluster that most lowers hard global dimension, if any; a sweep without
/// moves ends the refinement. Moves that would empty a cluster are skipped.
inline Partition genetic_refine(const Eigen::Ref<const Eigen::MatrixXd>& data, const Partition& start,
                                const GdmConfig& cfg) {
  cfg.validate();
  detail::require(start.size() == static_cast<std::size_t>(data.cols()), ErrorKind::invalid_parameter,
                  "partition and data disagree on the number of points");
  Partition part = start;
  if (cfg.genetic_passes == 0 || part.clusters < 2) return part;

  const double scale = detail::data_scale(data);
  const auto k_count = static_cast<std::size_t>(part.clusters);
  std::vector<std::vector<std::size_t>> members(k_count);
  for (int k = 0; k < part.clusters; ++k) members[static_cast<std::size_t>(k)] = part.members(k);
  Eigen::VectorXd dims(part.clusters);
  for (std::size_t k = 0; k < k_count; ++k)
    dims[static_cast<Eigen::Index>(k)] = detail::subset_dimension(data, members[k], cfg.eps, scale);

  constexpr double kMinImprovement = 1e-12;
  std::vector<std::size_t> scratch;
  for (int sweep = 0; sweep < cfg.genetic_passes; ++sweep) {
    int moves = 0;
    for (std::size_t n = 0; n < part.size(); ++n) {
      if (part.is_outlier(n)) continue;
      const auto from = static_cast<std::size_t>(part.labels[n]);
      if (members[from].size() <= 1) continue;

      scratch = members[from];
      scratch.erase(std::find(scratch.begin(), scratch.end(), n));
      const double dim_without = detail::subset_dimension(data, scratch, cfg.eps, scale);

      double best = power_norm(dims, cfg.p);
      std::size_t best_to = from;
      double best_dim_to = 0.0;
      Eigen::VectorXd trial = dims;
      trial[static_cast<Eigen::Index>(from)] = dim_without;
      for (std::size_t to = 0; to < k_count; ++to) {
        if (to == from) continue;
        std::vector<std::size_t> grown = members[to];
        grown.push_back(n);
        const double dim_with = detail::subset_dimension(data, grown, cfg.eps, scale);
        const double saved = trial[static_cast<Eigen::Index>(to)];
        trial[static_cast<Eigen::Index>(to)] = dim_with;
        const double value = power_norm(trial, cfg.p);
        trial[static_cast<Eigen::Index>(to)] = saved;
        if (value < best - kMinImprovement) {
          best = value;
          best_to = to;
          best_dim_to = dim_with;
        }
      }
      if (best_to == from) continue;
      members[from] = scratch;
      members[best_to].push_back(n);
      dims[static_cast<Eigen::Index>(from)] = dim_without;
      dims[static_cast<Eigen::Index>(best_to)] = best_dim_to;
      part.labels[n] = static_cast<int>(best_to);
      ++moves;
    }
    if (moves == 0) break;
  }
  return part;
}

namespace detail {

struct RestartOutcome {
  Partition partition;
  double gd_value = 0.0;
  MembershipMatrix membership;
  std::vector<double> trace;
};

inline RestartOutcome run_restart(const Eigen::MatrixXd& data, const GdmConfig& cfg, int restart) {
  Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(restart));
  const Partition init = greedy_merge_init(data, cfg, rng);
  RestartOutcome out;
  out.membership = descend(data, MembershipMatrix::indicator(init), cfg, &out.trace);
  out.partition = genetic_refine(data, threshold(out.membership), cfg);
  out.gd_value = global_dimension_hard(data, out.partition, cfg.objective(), DegeneratePolicy::zero);
  return out;
}

// Runs `task(i)` for i in [0, count) on up to `threads` workers and stores
// the results by index, so the outcome is independent of scheduling.
template <typename Result, typename Task>
std::vector<std::optional<Result>> run_indexed(int count, int threads, Task task,
                                               std::vector<std::exception_ptr>& errors) {
  std::vector<std::optional<Result>> results(static_cast<std::size_t>(count));
  errors.assign(static_cast<std::size_t>(count), nullptr);
  auto work = [&](int i) {
    try {
      results[static_cast<std::size_t>(i)] = task(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  const int workers = std::min(threads, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return results;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) work(i);
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace detail

inline SegmentationResult minimize_global_dimension(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg) {
  cfg.validate();
  detail::require_finite(data);
  detail::require(data.cols() > cfg.clusters, ErrorKind::invalid_parameter, "need more points than clusters");
  detail::require(cfg.restarts >= 1, ErrorKind::invalid_parameter, "need at least one restart");
  const Eigen::MatrixXd owned = data;

  std::vector<std::exception_ptr> errors;
  auto outcomes = detail::run_indexed<detail::RestartOutcome>(
      cfg.restarts, cfg.threads, [&](int r) { return detail::run_restart(owned, cfg, r); }, errors);

  SegmentationResult result;
  result.restarts_run = cfg.restarts;
  result.restart_values.assign(static_cast<std::size_t>(cfg.restarts), std::numeric_limits<double>::quiet_NaN());
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    if (!outcomes[r]) continue;
    result.restart_values[r] = outcomes[r]->gd_value;
    if (!best || outcomes[r]->gd_value < outcomes[*best]->gd_value) best = r;
  }
  if (!best) std::rethrow_exception(errors.front());

  auto& winner = *outcomes[*best];
  result.best_restart = static_cast<int>(*best);
  result.partition = std::move(winner.partition);
  result.gd_value = winner.gd_value;
  result.membership = std::move(winner.membership);
  result.trace = std::move(winner.trace);
  result.per_cluster_dims =
      hard_cluster_dimensions(owned, result.partition, cfg.objective(), DegeneratePolicy::zero);
  return result;
}

}  // namespace gdm
