#pragma once

#include "latticebc/lattice.hpp"
#include "latticebc/potentials.hpp"
#include "latticebc/predictors.hpp"

#include <Eigen/Sparse>

#include <memory>
#include <vector>

namespace latticebc {

using SpMat = Eigen::SparseMatrix<double>;

// Energy-difference functional
//   E(u) = sum_l [ V_l(D y0(l) + D u(l)) - V_l(D y0(l)) ]
// over all sites with complete stencils.  Per-site differences are taken
// before summation so E(0) = 0 exactly, and the sum is pairwise for
// determinism.
class EnergyModel {
 public:
  EnergyModel(std::shared_ptr<const DefectiveLattice> lat,
              std::shared_ptr<const SitePotential> pot,
              std::shared_ptr<const Predictor> pred);

  int range_dim() const { return m_; }
  int ndof() const { return m_ * lat_->size(); }
  const DefectiveLattice& lattice() const { return *lat_; }
  const SitePotential& potential() const { return *pot_; }
  const Predictor& predictor() const { return *pred_; }
  const std::vector<int>& assembly_sites() const { return asm_sites_; }

  double energy(const Eigen::VectorXd& u) const;
  double energy_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& g) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const;

  SpMat hessian_assemble(const Eigen::VectorXd& u) const;
  Eigen::VectorXd hessian_apply(const Eigen::VectorXd& u,
                                const Eigen::VectorXd& v) const;

  // graph Laplacian on the NN bond graph, one block per component, weighted
  // by the homogeneous bond stiffness; used as solver preconditioner
  SpMat bond_laplacian() const;

 private:
  std::shared_ptr<const DefectiveLattice> lat_;
  std::shared_ptr<const SitePotential> pot_;
  std::shared_ptr<const Predictor> pred_;
  int m_;

  std::vector<int> asm_sites_;
  std::vector<int> bond_offset_;          // per assembly site, into nbrs_/base_
  std::vector<int> nbrs_;
  std::vector<double> base_;              // raw predictor differences
  std::vector<double> site_e0_;           // V_l(D y0(l)) per assembly site

  void gather(int k, const Eigen::VectorXd& u, std::vector<double>& diffs) const;
};

double pairwise_sum(const std::vector<double>& terms);

// Cauchy--Born strain energy function W(F) = det(A) V(F . R) on the
// six-bond reference stencil, with chain-rule derivatives.
class CauchyBorn {
 public:
  CauchyBorn(std::shared_ptr<const SitePotential> pot,
             const LatticeMatrix& A = LatticeMatrix::triangular());

  int range_dim() const { return pot_->range_dim(); }

  // F given as m x 2 (rows beyond m ignored)
  double density(const Eigen::Matrix2d& F) const;
  Eigen::Matrix2d ddensity(const Eigen::Matrix2d& F) const;
  // second derivative as a (2m) x (2m) matrix acting on vec(F), index c*2+a
  Eigen::MatrixXd dddensity(const Eigen::Matrix2d& F) const;

  const std::vector<Vec2>& stencil() const { return R_; }

 private:
  std::shared_ptr<const SitePotential> pot_;
  double detA_;
  std::vector<Vec2> R_;
};

}  // namespace latticebc
