#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "kquad/gmm.hpp"
#include "kquad/kernel.hpp"
#include "kquad/linalg.hpp"
#include "kquad/objectives.hpp"
#include "kquad/random.hpp"

namespace kquad {

enum class Method { kIid, kHerding, kSbq, kHerdingBqReweight };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kIid:
      return "iid";
    case Method::kHerding:
      return "herding";
    case Method::kSbq:
      return "sbq";
    case Method::kHerdingBqReweight:
      return "herding-bq-reweight";
  }
  return "unknown";
}

inline Method parse_method(std::string_view name) {
  if (name == "iid") return Method::kIid;
  if (name == "herding") return Method::kHerding;
  if (name == "sbq") return Method::kSbq;
  if (name == "herding-bq-reweight") return Method::kHerdingBqReweight;
  throw std::invalid_argument("unknown method: " + std::string(name));
}

/// A fixed candidate set with precomputed mean embeddings. Immutable, so
/// one pool can back several selection runs; per-run bookkeeping (which
/// candidates are taken, cached Gram prefixes) lives with the run.
template <KernelModel K>
class CandidatePool {
 public:
  CandidatePool(std::vector<Eigen::VectorXd> points, const K& kernel, const GaussianMixture& p)
      : points_(std::move(points)), kernel_(&kernel), p_(&p) {
    if (points_.empty()) throw std::invalid_argument("CandidatePool: empty pool");
    const Eigen::Index n = static_cast<Eigen::Index>(points_.size());
    embeddings_.resize(n);
    self_similarity_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      embeddings_(i) = kernel.mean_embedding(p, points_[static_cast<std::size_t>(i)]);
      self_similarity_(i) = kernel.eval(points_[static_cast<std::size_t>(i)],
                                        points_[static_cast<std::size_t>(i)]);
    }
  }

  /// Pool of i.i.d. draws from the target.
  static CandidatePool draw(const K& kernel, const GaussianMixture& p, Rng& rng, int pool_size) {
    return CandidatePool(p.sample(rng, pool_size), kernel, p);
  }

  int size() const { return static_cast<int>(points_.size()); }
  const Eigen::VectorXd& point(int i) const { return points_[static_cast<std::size_t>(i)]; }
  const std::vector<Eigen::VectorXd>& points() const { return points_; }
  double embedding(int i) const { return embeddings_(i); }
  double self_similarity(int i) const { return self_similarity_(i); }
  const K& kernel() const { return *kernel_; }
  const GaussianMixture& target() const { return *p_; }

 private:
  std::vector<Eigen::VectorXd> points_;
  const K* kernel_;
  const GaussianMixture* p_;
  Eigen::VectorXd embeddings_;
  Eigen::VectorXd self_similarity_;
};

/// Per-step log entry: everything needed to redraw the convergence plots.
/// wall_millis is cumulative run time and is the one field excluded from
/// determinism guarantees.
struct ConvergenceRecord {
  int n = 0;
  double mmd2_uniform = 0.0;  // MMD^2 with uniform 1/n weights
  double mmd2_bq = 0.0;       // eps^2_BQ of the same points (= BQ-weighted MMD^2)
  double weight_sum = 0.0;
  double weight_min = 0.0;
  double weight_max = 0.0;
  int negative_count = 0;
  double wall_millis = 0.0;
};

struct SelectionRun {
  Method method = Method::kIid;
  std::uint64_t seed = 0;
  std::vector<Eigen::VectorXd> trajectory;
  std::vector<int> indices;  // pool indices; -1 for direct i.i.d. draws
  std::vector<int> skipped;  // candidates flagged numerically singular
  std::vector<ConvergenceRecord> records;
};

namespace detail {

/// Splits [0, n) into at most `threads` index-ordered chunks and runs
/// fn(begin, end, chunk) on each. Chunk boundaries must not affect
/// per-element results; merging in chunk order keeps reductions
/// deterministic for any thread count.
template <class F>
void parallel_chunks(int n, int threads, F&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n, 0);
    return;
  }
  const int chunk = (n + threads - 1) / threads;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads));
  for (int c = 0; c < threads; ++c) {
    const int begin = c * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end, c] { fn(begin, end, c); });
  }
  for (auto& w : workers) w.join();
}

inline int num_chunks(int n, int threads) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) return 1;
  const int chunk = (n + threads - 1) / threads;
  return (n + chunk - 1) / chunk;
}

/// Maintains the running sums behind the per-step records: the uniform-MMD
/// pieces are updated incrementally, weights come from the quadrature state.
template <KernelModel K>
class RunRecorder {
 public:
  explicit RunRecorder(const K& kernel)
      : kernel_(&kernel), start_(std::chrono::steady_clock::now()) {}

  ConvergenceRecord record(const QuadratureState<K>& state) {
    const Eigen::Index n = state.size();
    const auto& points = state.points();
    const Eigen::VectorXd& x_new = points.back();
    z_sum_ += state.z()(n - 1);
    for (Eigen::Index m = 0; m + 1 < n; ++m) {
      gram_sum_ += 2.0 * kernel_->eval(points[static_cast<std::size_t>(m)], x_new);
    }
    gram_sum_ += kernel_->eval(x_new, x_new);

    ConvergenceRecord rec;
    rec.n = static_cast<int>(n);
    const double dn = static_cast<double>(n);
    rec.mmd2_uniform = detail::clamp_nonnegative(
        state.initial_variance() - 2.0 * z_sum_ / dn + gram_sum_ / (dn * dn), "mmd2_uniform");
    rec.mmd2_bq = state.bq_variance();
    const Eigen::VectorXd w = state.bq_weights();
    rec.weight_sum = w.sum();
    rec.weight_min = w.minCoeff();
    rec.weight_max = w.maxCoeff();
    rec.negative_count = static_cast<int>((w.array() < 0.0).count());
    rec.wall_millis = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start_)
                          .count();
    return rec;
  }

 private:
  const K* kernel_;
  std::chrono::steady_clock::time_point start_;
  double z_sum_ = 0.0;
  double gram_sum_ = 0.0;
};

}  // namespace detail

/// Greedy kernel-herding selection over a pool: each step appends the
/// exact greedy minimizer of the herding objective, which for unit-
/// amplitude kernels is the argmax of z(x) - (1/(n+1)) sum_m k(x, x_m);
/// ties go to the lowest candidate index. Partial kernel sums are cached
/// and updated by one kernel column per step.
template <KernelModel K>
class HerdingSelector {
 public:
  explicit HerdingSelector(const CandidatePool<K>& pool, int threads = 1)
      : pool_(&pool),
        threads_(threads),
        ksum_(Eigen::VectorXd::Zero(pool.size())),
        taken_(static_cast<std::size_t>(pool.size()), 0) {}

  int step() {
    const int pool_size = pool_->size();
    if (num_taken_ >= pool_size) throw std::length_error("herding: pool exhausted");
    const double inv_np1 = 1.0 / static_cast<double>(num_taken_ + 1);
    const int chunks = detail::num_chunks(pool_size, threads_);
    std::vector<double> best_score(static_cast<std::size_t>(chunks),
                                   -std::numeric_limits<double>::infinity());
    std::vector<int> best_idx(static_cast<std::size_t>(chunks), -1);
    detail::parallel_chunks(pool_size, threads_, [&](int begin, int end, int c) {
      double bs = -std::numeric_limits<double>::infinity();
      int bi = -1;
      for (int i = begin; i < end; ++i) {
        if (taken_[static_cast<std::size_t>(i)]) continue;
        const double score = pool_->embedding(i) - inv_np1 * ksum_(i);
        if (score > bs) {
          bs = score;
          bi = i;
        }
      }
      best_score[static_cast<std::size_t>(c)] = bs;
      best_idx[static_cast<std::size_t>(c)] = bi;
    });
    int choice = -1;
    double choice_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < chunks; ++c) {
      if (best_idx[static_cast<std::size_t>(c)] >= 0 &&
          best_score[static_cast<std::size_t>(c)] > choice_score) {
        choice_score = best_score[static_cast<std::size_t>(c)];
        choice = best_idx[static_cast<std::size_t>(c)];
      }
    }
    if (choice < 0) throw std::length_error("herding: pool exhausted");
    taken_[static_cast<std::size_t>(choice)] = 1;
    ++num_taken_;
    return choice;
  }

  /// Folds the chosen point's kernel column into the partial sums. Called
  /// once the caller has actually kept the point; a skipped choice stays
  /// out of the criterion.
  void commit(int choice) {
    const int pool_size = pool_->size();
    const Eigen::VectorXd& chosen = pool_->point(choice);
    detail::parallel_chunks(pool_size, threads_, [&](int begin, int end, int) {
      for (int i = begin; i < end; ++i) {
        ksum_(i) += pool_->kernel().eval(pool_->point(i), chosen);
      }
    });
  }

 private:
  const CandidatePool<K>* pool_;
  int threads_;
  Eigen::VectorXd ksum_;  // sum_m k(x_i, x_m) over selections so far
  std::vector<std::uint8_t> taken_;
  int num_taken_ = 0;
};

/// Greedy sequential-Bayesian-quadrature selection: each step takes the
/// argmax of the posterior-variance reduction. Per-candidate
/// forward-substitution prefixes are extended by one entry per step, so a
/// step over P candidates costs O(P n) after the O(n^2) state append.
/// Candidates whose Schur complement is not positive are flagged and
/// skipped rather than aborting the run.
template <KernelModel K>
class SbqSelector {
 public:
  SbqSelector(const CandidatePool<K>& pool, int max_steps, double jitter = kDefaultJitter,
              int threads = 1)
      : pool_(&pool),
        threads_(threads),
        state_(pool.kernel(), pool.target(), jitter),
        prefixes_(Eigen::MatrixXd::Zero(max_steps, pool.size())),
        dot_(Eigen::VectorXd::Zero(pool.size())),
        norm2_(Eigen::VectorXd::Zero(pool.size())),
        taken_(static_cast<std::size_t>(pool.size()), 0) {}

  const QuadratureState<K>& state() const { return state_; }
  const std::vector<int>& skipped() const { return skipped_; }

  int step() {
    const int pool_size = pool_->size();
    const Eigen::Index n = state_.size();
    if (n >= prefixes_.rows()) throw std::length_error("sbq: max_steps exceeded");
    const double jitter = state_.jitter();
    const int chunks = detail::num_chunks(pool_size, threads_);
    std::vector<double> best_score(static_cast<std::size_t>(chunks),
                                   -std::numeric_limits<double>::infinity());
    std::vector<int> best_idx(static_cast<std::size_t>(chunks), -1);
    std::vector<std::vector<int>> flagged(static_cast<std::size_t>(chunks));
    detail::parallel_chunks(pool_size, threads_, [&](int begin, int end, int c) {
      double bs = -std::numeric_limits<double>::infinity();
      int bi = -1;
      for (int i = begin; i < end; ++i) {
        if (taken_[static_cast<std::size_t>(i)]) continue;
        const double denom = (pool_->self_similarity(i) + jitter) - norm2_(i);
        if (!(denom > 0.0)) {
          flagged[static_cast<std::size_t>(c)].push_back(i);
          continue;
        }
        const double t = (pool_->embedding(i) - dot_(i)) / std::sqrt(denom);
        const double score = t * t;
        if (score > bs) {
          bs = score;
          bi = i;
        }
      }
      best_score[static_cast<std::size_t>(c)] = bs;
      best_idx[static_cast<std::size_t>(c)] = bi;
    });
    for (int c = 0; c < chunks; ++c) {
      for (int i : flagged[static_cast<std::size_t>(c)]) {
        taken_[static_cast<std::size_t>(i)] = 1;
        skipped_.push_back(i);
      }
    }
    int choice = -1;
    double choice_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < chunks; ++c) {
      if (best_idx[static_cast<std::size_t>(c)] >= 0 &&
          best_score[static_cast<std::size_t>(c)] > choice_score) {
        choice_score = best_score[static_cast<std::size_t>(c)];
        choice = best_idx[static_cast<std::size_t>(c)];
      }
    }
    if (choice < 0) throw std::length_error("sbq: pool exhausted");

    const Eigen::VectorXd chosen = pool_->point(choice);
    state_.append(chosen);
    taken_[static_cast<std::size_t>(choice)] = 1;

    // Extend every cached prefix with the new factor row. Row n of the new
    // factor is read back from the state so both sides share one source of
    // truth; the inner dot runs over contiguous prefix columns.
    const double pivot = state_.chol().lower()(n, n);
    const double b_new = state_.forward_z()(n);
    Eigen::VectorXd row(n);
    for (Eigen::Index t = 0; t < n; ++t) row(t) = state_.chol().lower()(n, t);
    detail::parallel_chunks(pool_size, threads_, [&](int begin, int end, int) {
      for (int i = begin; i < end; ++i) {
        if (taken_[static_cast<std::size_t>(i)]) continue;
        const double kc = pool_->kernel().eval(pool_->point(i), chosen);
        const double acc = detail::dot_ascending(row.data(), prefixes_.col(i).data(), n);
        const double v = (kc - acc) / pivot;
        prefixes_(n, i) = v;
        dot_(i) += v * b_new;
        norm2_(i) += v * v;
      }
    });
    return choice;
  }

 private:
  const CandidatePool<K>* pool_;
  int threads_;
  QuadratureState<K> state_;
  Eigen::MatrixXd prefixes_;  // L^{-1} k(X, x_i), one column per candidate
  Eigen::VectorXd dot_;       // a_i . b
  Eigen::VectorXd norm2_;     // |a_i|^2
  std::vector<std::uint8_t> taken_;
  std::vector<int> skipped_;
};

/// One herding step by direct rescoring of every candidate, O(P n).
/// Candidates that coincide bitwise with an already-selected point are
/// excluded. Matches HerdingSelector's choices exactly.
template <KernelModel K>
int herding_step(const CandidatePool<K>& pool, const std::vector<Eigen::VectorXd>& selected) {
  const int pool_size = pool.size();
  const double inv_np1 = 1.0 / static_cast<double>(selected.size() + 1);
  double best = -std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (int i = 0; i < pool_size; ++i) {
    bool is_selected = false;
    double acc = 0.0;
    for (const auto& x : selected) {
      if ((x.array() == pool.point(i).array()).all()) is_selected = true;
      acc += pool.kernel().eval(pool.point(i), x);
    }
    if (is_selected) continue;
    const double score = pool.embedding(i) - inv_np1 * acc;
    if (score > best) {
      best = score;
      best_idx = i;
    }
  }
  if (best_idx < 0) throw std::length_error("herding_step: pool exhausted");
  return best_idx;
}

/// One SBQ step by scoring every candidate through the state's Schur
/// complement, O(P n^2) without cached prefixes. Matches SbqSelector's
/// choices exactly.
template <KernelModel K>
int sbq_step(const CandidatePool<K>& pool, const QuadratureState<K>& state) {
  const int pool_size = pool.size();
  double best = -std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (int i = 0; i < pool_size; ++i) {
    bool is_selected = false;
    for (const auto& x : state.points()) {
      if ((x.array() == pool.point(i).array()).all()) is_selected = true;
    }
    if (is_selected) continue;
    double score = 0.0;
    try {
      score = state.variance_reduction(pool.point(i));
    } catch (const NotPositiveDefinite&) {
      continue;  // flagged candidate, not fatal
    }
    if (score > best) {
      best = score;
      best_idx = i;
    }
  }
  if (best_idx < 0) throw std::length_error("sbq_step: pool exhausted");
  return best_idx;
}

/// Runs N steps of the chosen method against the pool, logging a
/// ConvergenceRecord per prefix. herding-bq-reweight selects exactly like
/// herding (the records already carry the BQ-weighted MMD of the herding
/// points). iid takes the pool prefix, which is an i.i.d. sample by
/// construction. Deterministic for a given pool and seed at any thread
/// count.
template <KernelModel K>
SelectionRun run_selection(Method method, const CandidatePool<K>& pool, int num_samples,
                           std::uint64_t seed, int threads = 1, double jitter = kDefaultJitter) {
  if (num_samples < 1) throw std::invalid_argument("run_selection: need N >= 1");
  if (num_samples > pool.size()) {
    throw std::invalid_argument("run_selection: N exceeds pool size");
  }
  SelectionRun run;
  run.method = method;
  run.seed = seed;
  detail::RunRecorder<K> recorder(pool.kernel());

  auto take = [&](int index, QuadratureState<K>& state) -> bool {
    const Eigen::VectorXd& x = pool.point(index);
    try {
      state.append(x);
    } catch (const NotPositiveDefinite&) {
      run.skipped.push_back(index);
      return false;
    }
    run.indices.push_back(index);
    run.trajectory.push_back(x);
    run.records.push_back(recorder.record(state));
    return true;
  };

  switch (method) {
    case Method::kIid: {
      QuadratureState<K> state(pool.kernel(), pool.target(), jitter);
      int i = 0;
      while (static_cast<int>(run.trajectory.size()) < num_samples) {
        if (i >= pool.size()) throw std::length_error("iid: pool exhausted");
        take(i, state);
        ++i;
      }
      break;
    }
    case Method::kHerding:
    case Method::kHerdingBqReweight: {
      QuadratureState<K> state(pool.kernel(), pool.target(), jitter);
      HerdingSelector<K> selector(pool, threads);
      while (static_cast<int>(run.trajectory.size()) < num_samples) {
        const int index = selector.step();
        if (take(index, state)) selector.commit(index);
      }
      break;
    }
    case Method::kSbq: {
      SbqSelector<K> selector(pool, num_samples, jitter, threads);
      while (static_cast<int>(run.trajectory.size()) < num_samples) {
        const int index = selector.step();
        run.indices.push_back(index);
        run.trajectory.push_back(pool.point(index));
        run.records.push_back(recorder.record(selector.state()));
      }
      run.skipped = selector.skipped();
      break;
    }
  }
  return run;
}

/// N i.i.d. draws straight from the target (no pool), uniform weights in
/// the records as for any other run. Given the same generator stream, the
/// trajectory coincides with run_selection's iid pool prefix.
template <KernelModel K>
SelectionRun iid_select(const GaussianMixture& p, const K& kernel, Rng& rng, int num_samples,
                        double jitter = kDefaultJitter) {
  if (num_samples < 1) throw std::invalid_argument("iid_select: need N >= 1");
  SelectionRun run;
  run.method = Method::kIid;
  detail::RunRecorder<K> recorder(kernel);
  QuadratureState<K> state(kernel, p, jitter);
  while (static_cast<int>(run.trajectory.size()) < num_samples) {
    const Eigen::VectorXd x = p.sample_one(rng);
    try {
      state.append(x);
    } catch (const NotPositiveDefinite&) {
      run.skipped.push_back(-1);
      continue;
    }
    run.indices.push_back(-1);
    run.trajectory.push_back(x);
    run.records.push_back(recorder.record(state));
  }
  return run;
}

}  // namespace kquad
