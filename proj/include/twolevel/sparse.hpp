#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "twolevel/errors.hpp"

namespace twolevel {

enum class LinearSolverKind { direct, conjugate_gradient };

struct SolverSettings {
  double picard_tolerance = 1e-8;
  int picard_max_iterations = 25;
  double linear_tolerance = 1e-10;
  LinearSolverKind linear_solver = LinearSolverKind::direct;
  int source_quadrature = 4;  // collapsed Gauss points per direction

  void validate() const {
    if (!(picard_tolerance > 0.0 && picard_tolerance < 1.0) || !(linear_tolerance > 0.0 && linear_tolerance < 1.0))
      throw ValidationError("solver tolerances must lie in (0, 1)");
    if (picard_max_iterations < 1) throw ValidationError("Picard iteration cap must be at least 1");
    if (source_quadrature < 1) throw ValidationError("source quadrature order must be at least 1");
  }
};

/// Square matrix in compressed row form with its right-hand side and Dirichlet set.
/// The matrix storage is shared pattern + values so that systems of one mesh reuse
/// the sparsity and the symbolic factorization.
struct SparseSystem {
  const std::vector<int>* row_ptr = nullptr;
  const std::vector<int>* col_idx = nullptr;
  std::vector<double> values;
  std::vector<double> rhs;
  std::vector<int> dirichlet_nodes;
  std::vector<double> dirichlet_values;

  std::size_t size() const { return rhs.size(); }

  void validate() const {
    if (!row_ptr || !col_idx) throw ValidationError("sparse system has no pattern");
    if (row_ptr->size() != rhs.size() + 1 || values.size() != col_idx->size())
      throw ValidationError("sparse system dimensions are inconsistent");
    if (dirichlet_nodes.size() != dirichlet_values.size())
      throw ValidationError("Dirichlet node and value counts differ");
  }

  std::vector<double> multiply(const std::vector<double>& x) const {
    std::vector<double> y(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
      double s = 0.0;
      for (int k = (*row_ptr)[i]; k < (*row_ptr)[i + 1]; ++k) s += values[k] * x[(*col_idx)[k]];
      y[i] = s;
    }
    return y;
  }
};

/// Symmetric row-and-column elimination: constrained rows become identity rows, and the
/// known values are moved to the right-hand side of the remaining rows.
inline void apply_dirichlet(SparseSystem& sys) {
  sys.validate();
  const auto& rp = *sys.row_ptr;
  const auto& ci = *sys.col_idx;
  std::vector<char> fixed(sys.size(), 0);
  std::vector<double> value(sys.size(), 0.0);
  for (std::size_t k = 0; k < sys.dirichlet_nodes.size(); ++k) {
    fixed[sys.dirichlet_nodes[k]] = 1;
    value[sys.dirichlet_nodes[k]] = sys.dirichlet_values[k];
  }
  for (std::size_t i = 0; i < sys.size(); ++i) {
    if (fixed[i]) {
      for (int k = rp[i]; k < rp[i + 1]; ++k) sys.values[k] = ci[k] == static_cast<int>(i) ? 1.0 : 0.0;
      sys.rhs[i] = value[i];
      continue;
    }
    for (int k = rp[i]; k < rp[i + 1]; ++k)
      if (fixed[ci[k]]) {
        sys.rhs[i] -= sys.values[k] * value[ci[k]];
        sys.values[k] = 0.0;
      }
  }
}

/// Linear solver bound to one sparsity pattern. The direct backend keeps Eigen's
/// symbolic LDLT analysis between calls; the iterative one is Jacobi-preconditioned CG.
class LinearSolver {
 public:
  struct Stats {
    int iterations = 0;
    double residual = 0.0;
  };

  std::vector<double> solve(const SparseSystem& sys, const SolverSettings& settings,
                            const std::vector<double>* guess = nullptr) {
    sys.validate();
    return settings.linear_solver == LinearSolverKind::direct ? solve_direct(sys, settings)
                                                              : solve_cg(sys, settings, guess);
  }

  const Stats& last() const { return last_; }

 private:
  using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  std::vector<double> solve_direct(const SparseSystem& sys, const SolverSettings& settings) {
    const int n = static_cast<int>(sys.size());
    // The matrix is symmetric, so its CSR arrays are also its CSC arrays.
    Eigen::Map<const ColMatrix> A(n, n, static_cast<int>(sys.values.size()), sys.row_ptr->data(),
                                  sys.col_idx->data(), sys.values.data());
    if (pattern_ != sys.row_ptr || pattern_nnz_ != sys.values.size() || pattern_n_ != n || !ldlt_) {
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<ColMatrix, Eigen::Lower>>();
      ldlt_->analyzePattern(A);
      pattern_ = sys.row_ptr;
      pattern_nnz_ = sys.values.size();
      pattern_n_ = n;
    }
    ldlt_->factorize(A);
    if (ldlt_->info() != Eigen::Success) throw LinearSolverDivergence(0, std::nan(""));
    Eigen::Map<const Eigen::VectorXd> b(sys.rhs.data(), n);
    std::vector<double> x(n);
    Eigen::Map<Eigen::VectorXd> xv(x.data(), n);
    xv = ldlt_->solve(b);
    const double bn = b.norm();
    auto residual = [&](Eigen::VectorXd& r) {
      const auto Ax = sys.multiply(x);
      for (int i = 0; i < n; ++i) r[i] = sys.rhs[i] - Ax[i];
      return bn > 0.0 ? r.norm() / bn : r.norm();
    };
    Eigen::VectorXd r(n);
    double rel = residual(r);
    for (int refine = 0; refine < 2 && std::isfinite(rel) && rel > settings.linear_tolerance; ++refine) {
      xv += ldlt_->solve(r);
      rel = residual(r);
    }
    last_ = {1, rel};
    if (!std::isfinite(rel) || rel > settings.linear_tolerance) throw LinearSolverDivergence(1, rel);
    return x;
  }

  std::vector<double> solve_cg(const SparseSystem& sys, const SolverSettings& settings,
                               const std::vector<double>* guess) {
    const std::size_t n = sys.size();
    const auto& rp = *sys.row_ptr;
    const auto& ci = *sys.col_idx;
    std::vector<double> inv_diag(n, 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (int k = rp[i]; k < rp[i + 1]; ++k)
        if (ci[k] == static_cast<int>(i) && sys.values[k] != 0.0) inv_diag[i] = 1.0 / sys.values[k];
    std::vector<double> x = guess && guess->size() == n ? *guess : std::vector<double>(n, 0.0);
    auto r = sys.multiply(x);
    double bn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = sys.rhs[i] - r[i];
      bn += sys.rhs[i] * sys.rhs[i];
    }
    bn = std::sqrt(bn);
    if (bn == 0.0) bn = 1.0;
    std::vector<double> z(n), p(n);
    double rz = 0.0, rn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = inv_diag[i] * r[i];
      p[i] = z[i];
      rz += r[i] * z[i];
      rn += r[i] * r[i];
    }
    const int max_it = static_cast<int>(std::max<std::size_t>(100, 10 * n));
    int it = 0;
    while (std::sqrt(rn) / bn > settings.linear_tolerance) {
      if (it == max_it) throw LinearSolverDivergence(it, std::sqrt(rn) / bn);
      ++it;
      const auto Ap = sys.multiply(p);
      double pAp = 0.0;
      for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
      const double alpha = rz / pAp;
      double rz_new = 0.0;
      rn = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * Ap[i];
        z[i] = inv_diag[i] * r[i];
        rz_new += r[i] * z[i];
        rn += r[i] * r[i];
      }
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    last_ = {it, std::sqrt(rn) / bn};
    return x;
  }

  const std::vector<int>* pattern_ = nullptr;
  std::size_t pattern_nnz_ = 0;
  int pattern_n_ = 0;
  std::unique_ptr<Eigen::SimplicialLDLT<ColMatrix, Eigen::Lower>> ldlt_;
  Stats last_;
};

/// One-shot solve of an assembled and constrained system.
inline std::vector<double> solve_linear(const SparseSystem& sys, const SolverSettings& settings) {
  LinearSolver solver;
  return solver.solve(sys, settings);
}

}  // namespace twolevel
