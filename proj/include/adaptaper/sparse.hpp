#pragma once

// Symmetric sparse matrices and their Cholesky factorization.
//
// Storage is compressed sparse column with both triangles stored explicitly, which keeps
// Hadamard masking and row/column iteration trivial. The factorization is an up-looking
// Cholesky (row subtrees of the elimination tree) on a minimum-degree permutation.

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "adaptaper/errors.hpp"

namespace adaptaper {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

class SparseSymMatrix {
 public:
  SparseSymMatrix() = default;

  // Takes a full (both triangles) symmetric matrix. Diagonal entries are inserted if absent.
  explicit SparseSymMatrix(SparseMatrix full) : m_(std::move(full)) {
    if (m_.rows() != m_.cols()) throw ShapeError("symmetric matrix must be square");
    m_.makeCompressed();
    ensure_diagonal();
    check_symmetric();
  }

  // Builds from triplets of the lower triangle (row >= col); mirrors them to the upper triangle.
  static SparseSymMatrix from_lower_triplets(Eigen::Index n, const std::vector<Triplet>& lower) {
    std::vector<Triplet> all;
    all.reserve(2 * lower.size() + static_cast<std::size_t>(n));
    for (const auto& t : lower) {
      if (t.row() < t.col()) throw ShapeError("from_lower_triplets: entry above the diagonal");
      all.push_back(t);
      if (t.row() != t.col()) all.emplace_back(t.col(), t.row(), t.value());
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(all.begin(), all.end());
    return SparseSymMatrix(std::move(m));
  }

  static SparseSymMatrix identity(Eigen::Index n) {
    SparseMatrix m(n, n);
    m.setIdentity();
    return SparseSymMatrix(std::move(m));
  }

  [[nodiscard]] Eigen::Index size() const noexcept { return m_.rows(); }
  [[nodiscard]] Eigen::Index nonzeros() const noexcept { return m_.nonZeros(); }
  [[nodiscard]] const SparseMatrix& matrix() const noexcept { return m_; }
  [[nodiscard]] Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_); }

  // Number of stored entries in each row (equal to the column counts by symmetry).
  [[nodiscard]] std::vector<int> row_counts() const {
    std::vector<int> counts(static_cast<std::size_t>(size()));
    for (Eigen::Index j = 0; j < m_.outerSize(); ++j) {
      counts[static_cast<std::size_t>(j)] = m_.outerIndexPtr()[j + 1] - m_.outerIndexPtr()[j];
    }
    return counts;
  }

  // Entrywise product restricted to the pattern of `mask`.
  [[nodiscard]] SparseSymMatrix hadamard(const SparseSymMatrix& mask) const {
    if (mask.size() != size()) throw ShapeError("hadamard: dimension mismatch");
    SparseMatrix out = mask.m_;
    for (Eigen::Index j = 0; j < out.outerSize(); ++j) {
      for (SparseMatrix::InnerIterator it(out, j); it; ++it) {
        it.valueRef() *= m_.coeff(it.row(), it.col());
      }
    }
    return SparseSymMatrix(std::move(out));
  }

  void add_to_diagonal(double value) {
    for (Eigen::Index j = 0; j < size(); ++j) m_.coeffRef(j, j) += value;
  }

 private:
  void ensure_diagonal() {
    bool missing = false;
    for (Eigen::Index j = 0; j < m_.outerSize() && !missing; ++j) {
      bool found = false;
      for (SparseMatrix::InnerIterator it(m_, j); it; ++it) found |= it.row() == j;
      missing = !found;
    }
    if (!missing) return;
    SparseMatrix diag(m_.rows(), m_.cols());
    diag.setIdentity();
    SparseMatrix with_diag = m_ + 0.0 * diag;
    m_ = std::move(with_diag);
    m_.makeCompressed();
  }

  void check_symmetric() const {
    const SparseMatrix t = m_.transpose();
    for (Eigen::Index j = 0; j < m_.outerSize(); ++j) {
      const int* a_begin = m_.innerIndexPtr() + m_.outerIndexPtr()[j];
      const int* a_end = m_.innerIndexPtr() + m_.outerIndexPtr()[j + 1];
      const int* b_begin = t.innerIndexPtr() + t.outerIndexPtr()[j];
      const int* b_end = t.innerIndexPtr() + t.outerIndexPtr()[j + 1];
      if (!std::equal(a_begin, a_end, b_begin, b_end)) throw ShapeError("matrix pattern is not symmetric");
      const double* av = m_.valuePtr() + m_.outerIndexPtr()[j];
      const double* bv = t.valuePtr() + t.outerIndexPtr()[j];
      for (std::ptrdiff_t k = 0; k < a_end - a_begin; ++k) {
        if (av[k] != bv[k]) throw ShapeError("matrix values are not symmetric");
      }
    }
  }

  SparseMatrix m_;
};

enum class Ordering { minimum_degree, natural };

// L L^T factorization of P A P^T where P is a fill-reducing permutation.
class Factorization {
 public:
  [[nodiscard]] Eigen::Index size() const noexcept { return n_; }

  // new_index[old] for the permutation applied before factoring.
  [[nodiscard]] const std::vector<int>& permutation() const noexcept { return pinv_; }

  // Lower-triangular factor with sorted row indices, diagonal first in each column.
  [[nodiscard]] Eigen::Map<const SparseMatrix> factor() const {
    return {n_, n_, static_cast<Eigen::Index>(li_.size()), lp_.data(), li_.data(), lx_.data()};
  }

  [[nodiscard]] Eigen::Index factor_nonzeros() const noexcept { return static_cast<Eigen::Index>(li_.size()); }

  [[nodiscard]] double logdet() const noexcept {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n_; ++j) s += std::log(lx_[static_cast<std::size_t>(lp_[j])]);
    return 2.0 * s;
  }

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (b.size() != n_) throw ShapeError("solve: right-hand side has the wrong length");
    Eigen::VectorXd y(n_);
    for (Eigen::Index k = 0; k < n_; ++k) y[pinv_[k]] = b[k];
    lower_solve(y.data());
    upper_solve(y.data());
    Eigen::VectorXd x(n_);
    for (Eigen::Index k = 0; k < n_; ++k) x[k] = y[pinv_[k]];
    return x;
  }

  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    if (b.rows() != n_) throw ShapeError("solve: right-hand side has the wrong number of rows");
    Eigen::MatrixXd x(n_, b.cols());
    Eigen::VectorXd y(n_);
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      for (Eigen::Index k = 0; k < n_; ++k) y[pinv_[k]] = b(k, c);
      lower_solve(y.data());
      upper_solve(y.data());
      for (Eigen::Index k = 0; k < n_; ++k) x(k, c) = y[pinv_[k]];
    }
    return x;
  }

  // Dense A^{-1}. Quadratic memory; meant for N up to a few thousand.
  [[nodiscard]] Eigen::MatrixXd inverse() const { return solve(Eigen::MatrixXd(Eigen::MatrixXd::Identity(n_, n_))); }

  friend Factorization factorize(const SparseSymMatrix& a, Ordering ordering);

 private:
  void lower_solve(double* x) const {
    for (Eigen::Index j = 0; j < n_; ++j) {
      const int begin = lp_[j];
      const int end = lp_[j + 1];
      x[j] /= lx_[begin];
      const double xj = x[j];
      for (int p = begin + 1; p < end; ++p) x[li_[p]] -= lx_[p] * xj;
    }
  }

  void upper_solve(double* x) const {
    for (Eigen::Index j = n_ - 1; j >= 0; --j) {
      const int begin = lp_[j];
      const int end = lp_[j + 1];
      double s = x[j];
      for (int p = begin + 1; p < end; ++p) s -= lx_[p] * x[li_[p]];
      x[j] = s / lx_[begin];
    }
  }

  Eigen::Index n_ = 0;
  std::vector<int> pinv_;
  std::vector<int> lp_;
  std::vector<int> li_;
  std::vector<double> lx_;
};

// Throws NotPositiveDefinite naming the (original) index of the failing pivot.
[[nodiscard]] inline Factorization factorize(const SparseSymMatrix& a,
                                             Ordering ordering = Ordering::minimum_degree) {
  const SparseMatrix& m = a.matrix();
  const int n = static_cast<int>(m.rows());
  Factorization f;
  f.n_ = n;
  f.pinv_.resize(static_cast<std::size_t>(n));
  if (ordering == Ordering::minimum_degree && n > 0) {
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
    Eigen::AMDOrdering<int> amd;
    amd(m, perm);
    for (int i = 0; i < n; ++i) f.pinv_[static_cast<std::size_t>(i)] = perm.indices()[i];
  } else {
    for (int i = 0; i < n; ++i) f.pinv_[static_cast<std::size_t>(i)] = i;
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(f.pinv_[static_cast<std::size_t>(i)])] = i;

  // Upper triangle of C = P A P^T, column-compressed.
  std::vector<Triplet> upper;
  upper.reserve(static_cast<std::size_t>(m.nonZeros() / 2 + n));
  for (int j = 0; j < n; ++j) {
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
      const int pi = f.pinv_[static_cast<std::size_t>(it.row())];
      const int pj = f.pinv_[static_cast<std::size_t>(j)];
      if (pi <= pj) upper.emplace_back(pi, pj, it.value());
    }
  }
  SparseMatrix c(n, n);
  c.setFromTriplets(upper.begin(), upper.end());
  c.makeCompressed();
  const int* cp = c.outerIndexPtr();
  const int* ci = c.innerIndexPtr();
  const double* cx = c.valuePtr();

  // Elimination tree.
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  {
    std::vector<int> ancestor(static_cast<std::size_t>(n), -1);
    for (int k = 0; k < n; ++k) {
      for (int p = cp[k]; p < cp[k + 1]; ++p) {
        for (int i = ci[p]; i != -1 && i < k;) {
          const int next = ancestor[static_cast<std::size_t>(i)];
          ancestor[static_cast<std::size_t>(i)] = k;
          if (next == -1) parent[static_cast<std::size_t>(i)] = k;
          i = next;
        }
      }
    }
  }

  // Nonzero pattern of row k of L: the reach of column k of C in the elimination tree.
  std::vector<int> stack(static_cast<std::size_t>(n));
  std::vector<int> mark(static_cast<std::size_t>(n), -1);
  auto ereach = [&](int k) {
    int top = n;
    mark[static_cast<std::size_t>(k)] = k;
    for (int p = cp[k]; p < cp[k + 1]; ++p) {
      int i = ci[p];
      if (i > k) continue;
      int len = 0;
      for (; mark[static_cast<std::size_t>(i)] != k; i = parent[static_cast<std::size_t>(i)]) {
        stack[static_cast<std::size_t>(len++)] = i;
        mark[static_cast<std::size_t>(i)] = k;
      }
      while (len > 0) stack[static_cast<std::size_t>(--top)] = stack[static_cast<std::size_t>(--len)];
    }
    return top;
  };

  // Symbolic pass: column counts.
  std::vector<int> counts(static_cast<std::size_t>(n), 1);
  for (int k = 0; k < n; ++k) {
    for (int top = ereach(k); top < n; ++top) ++counts[static_cast<std::size_t>(stack[static_cast<std::size_t>(top)])];
  }
  f.lp_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int j = 0; j < n; ++j) f.lp_[static_cast<std::size_t>(j) + 1] = f.lp_[static_cast<std::size_t>(j)] + counts[static_cast<std::size_t>(j)];
  f.li_.resize(static_cast<std::size_t>(f.lp_.back()));
  f.lx_.resize(static_cast<std::size_t>(f.lp_.back()));

  // Numeric pass. next[j] is the next free slot of column j; slot lp[j] is the diagonal.
  std::vector<int> next(f.lp_.begin(), f.lp_.end() - 1);
  std::fill(mark.begin(), mark.end(), -1);
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) {
    const int top_k = ereach(k);
    for (int p = cp[k]; p < cp[k + 1]; ++p) {
      if (ci[p] <= k) x[static_cast<std::size_t>(ci[p])] = cx[p];
    }
    double d = x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(k)] = 0.0;
    for (int top = top_k; top < n; ++top) {
      const int i = stack[static_cast<std::size_t>(top)];
      const double lki = x[static_cast<std::size_t>(i)] / f.lx_[static_cast<std::size_t>(f.lp_[static_cast<std::size_t>(i)])];
      x[static_cast<std::size_t>(i)] = 0.0;
      for (int p = f.lp_[static_cast<std::size_t>(i)] + 1; p < next[static_cast<std::size_t>(i)]; ++p) {
        x[static_cast<std::size_t>(f.li_[static_cast<std::size_t>(p)])] -= f.lx_[static_cast<std::size_t>(p)] * lki;
      }
      d -= lki * lki;
      const int slot = next[static_cast<std::size_t>(i)]++;
      f.li_[static_cast<std::size_t>(slot)] = k;
      f.lx_[static_cast<std::size_t>(slot)] = lki;
    }
    if (!(d > 0.0)) throw NotPositiveDefinite(static_cast<std::size_t>(order[static_cast<std::size_t>(k)]), d);
    const int slot = next[static_cast<std::size_t>(k)]++;
    f.li_[static_cast<std::size_t>(slot)] = k;
    f.lx_[static_cast<std::size_t>(slot)] = std::sqrt(d);
  }
  return f;
}

// x^T (A^{-1} o T) x, where A^{-1} is only evaluated on the pattern of T. Uses one solve per
// column of A; at desk scale (N up to a few thousand) this is the simplest exact route.
[[nodiscard]] inline double masked_quadratic(const Factorization& f, const SparseSymMatrix& mask,
                                             const Eigen::VectorXd& x) {
  if (mask.size() != f.size() || x.size() != f.size()) throw ShapeError("masked_quadratic: dimension mismatch");
  const SparseMatrix& t = mask.matrix();
  double total = 0.0;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(f.size());
  for (Eigen::Index j = 0; j < t.outerSize(); ++j) {
    if (x[j] == 0.0) continue;
    e[j] = 1.0;
    const Eigen::VectorXd col = f.solve(e);
    e[j] = 0.0;
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(t, j); it; ++it) s += x[it.row()] * it.value() * col[it.row()];
    total += s * x[j];
  }
  return total;
}

}  // namespace adaptaper
