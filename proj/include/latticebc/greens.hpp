#pragma once

#include "latticebc/energy.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace latticebc {

// Homogeneous-lattice dynamical matrix
//   Hhat(k) = sum_rho 4 sin^2(k.rho/2) A_rho
// with bond stiffnesses A_rho extracted from the assembled Hessian of the
// homogeneous lattice at the reference strain.
class DynamicalMatrix {
 public:
  static DynamicalMatrix build(std::shared_ptr<const SitePotential> pot,
                               const Eigen::Matrix2d& F0);

  int range_dim() const { return m_; }
  const LatticeMatrix& lattice_matrix() const { return A_; }

  // Hhat(k); entries beyond m x m are zero
  Eigen::Matrix2d operator()(const Vec2& k) const;

  // continuum (long-wavelength) symbol sum_rho (k.rho)^2 A_rho
  Eigen::Matrix2d continuum(const Vec2& k) const;

  // min over a grid x grid BZ scan (k=0 excluded) of min-eig(Hhat)/|k|^2
  double stability_constant(int grid = 64) const;

  const std::vector<std::pair<std::array<int, 2>, Eigen::Matrix2d>>& stiffnesses()
      const {
    return arho_;
  }

  Eigen::Matrix2d reciprocal_basis() const;  // columns g1, g2

 private:
  int m_ = 0;
  LatticeMatrix A_;
  std::vector<std::pair<std::array<int, 2>, Eigen::Matrix2d>> arho_;
};

struct GreensOptions {
  double tol = 1e-6;   // successive-refinement agreement
  int min_level = 5;   // BZ subdivided into 2^n x 2^n cells
  int max_level = 8;
  int gl_points = 6;
};

// Tabulated first differences D_rho G(l) of the lattice Green's function on
// a hexagonal window, computed by Brillouin-zone quadrature.  The k=0
// singularity of the symbol is removed by subtracting the continuum symbol
// near the origin; the subtracted part is integrated exactly in polar
// coordinates where the Jacobian cancels the singularity.
class LatticeGreensFunction {
 public:
  static LatticeGreensFunction tabulate(const DynamicalMatrix& dyn, int window,
                                        const GreensOptions& opts = {});

  // D_rho G(l) with rho = kNNDirs[dir]; throws outside the window
  const Eigen::Matrix2d& diff(int m, int n, int dir) const;
  int window() const { return window_; }
  int range_dim() const { return m_; }
  double achieved_delta() const { return achieved_delta_; }

  void export_csv(const std::string& path) const;

 private:
  int window_ = 0, m_ = 0;
  double achieved_delta_ = 0.0;
  std::map<std::pair<int, int>, std::array<Eigen::Matrix2d, 6>> table_;
};

// Batched second differences D_rho D_sigma G(l): one entry per requested
// (l, rho, sigma) triple, all in lattice coordinates.  The integrand is
// bounded, so no singularity handling is required.
struct SecondDiffRequest {
  std::array<int, 2> l, rho, sigma;
};
std::vector<Eigen::Matrix2d> greens_second_differences(
    const DynamicalMatrix& dyn, const std::vector<SecondDiffRequest>& reqs,
    const GreensOptions& opts = {});

// Square-window scalar field on Z^2, indices in [-L, L]^2.
struct ScalarLatticeField {
  int L = 0;
  Eigen::MatrixXd v;  // (2L+1) x (2L+1)

  explicit ScalarLatticeField(int half_width = 0)
      : L(half_width), v(Eigen::MatrixXd::Zero(2 * half_width + 1, 2 * half_width + 1)) {}

  double at(int i, int j) const {
    if (std::abs(i) > L || std::abs(j) > L) return 0.0;
    return v(i + L, j + L);
  }
  double& ref(int i, int j) { return v(i + L, j + L); }
  double sum() const { return v.sum(); }
};

// Constructive conversion of a mean-zero, compactly supported f into
// divergence form: sum_j D_{e_j} g_j = f exactly, with D the forward
// difference D_e g(l) = g(l+e) - g(l).  g keeps f's support window and one
// order less decay.
std::array<ScalarLatticeField, 2> divergence_form(
    const ScalarLatticeField& f, double p,
    std::vector<double>* seminorm_trace = nullptr);

// weighted sup-seminorm sup (|l|_inf - 1/2)^q |f(l)| over l != 0
double decay_seminorm(const ScalarLatticeField& f, double q);

}  // namespace latticebc
