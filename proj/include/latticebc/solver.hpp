#pragma once

#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace latticebc {

struct SolveReport {
  int iterations = 0;
  double final_residual_inf = 0.0;
  bool converged = false;
  double energy = 0.0;
  double wall_time = 0.0;
  std::string message;
};

struct MinimizeOptions {
  double tol = 1e-7;  // l-inf residual on free dofs
  int max_iter = 5000;
  int memory = 10;
  bool precondition = true;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

// objective returns the energy and fills the gradient
using Objective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Preconditioned L-BFGS with strong-Wolfe line search.  free_mask marks the
// unconstrained dofs (empty = all free); frozen dofs keep their u0 values.
// laplacian, when given, preconditions the two-loop recursion through a
// sparse Cholesky factorisation restricted to the free dofs.
std::pair<Eigen::VectorXd, SolveReport> minimize(
    const Objective& obj, const Eigen::VectorXd& u0,
    const std::vector<uint8_t>& free_mask = {},
    const Eigen::SparseMatrix<double>* laplacian = nullptr,
    const MinimizeOptions& opts = {});

// Smallest eigenvalue of a symmetric operator to relative accuracy ~1e-4,
// dense below crossover, shift-inverted power iteration above.
double lowest_eigenvalue(const Eigen::SparseMatrix<double>& H,
                         bool* converged = nullptr);

// Principal submatrix on the dofs with mask != 0.
Eigen::SparseMatrix<double> restrict_to_mask(
    const Eigen::SparseMatrix<double>& A, const std::vector<uint8_t>& mask);

}  // namespace latticebc
