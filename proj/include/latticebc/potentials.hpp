#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <vector>

namespace latticebc {

struct EamParams {
  double alpha = 4.0;
  double beta = 3.0;
  double gamma = 5.0;
  double s0 = 6.0 * std::exp(-2.7);  // 6 psi(0.9)

  double phi(double r) const;
  double dphi(double r) const;
  double ddphi(double r) const;
  double psi(double r) const { return std::exp(-beta * r); }
  double dpsi(double r) const { return -beta * std::exp(-beta * r); }
  double ddpsi(double r) const { return beta * beta * std::exp(-beta * r); }
  double G(double s) const;
  double dG(double s) const;
  double ddG(double s) const;
};

// Site potential V evaluated on a finite stencil of bond differences.
// Differences are stored bond-major: diffs[b*m + c] is component c of the
// b-th bond difference.  Gradient and Hessian are exact partials with
// respect to the differences.
class SitePotential {
 public:
  virtual ~SitePotential() = default;

  virtual int range_dim() const = 0;

  virtual double energy(const double* diffs, int nbonds) const = 0;
  // returns the energy; grad has nbonds*m entries
  virtual double gradient(const double* diffs, int nbonds, double* grad) const = 0;
  // H is (nbonds*m) x (nbonds*m), symmetric
  virtual void hessian(const double* diffs, int nbonds, Eigen::MatrixXd& H) const = 0;
};

// EAM pair functional for in-plane point defects (m = 2):
//   V = sum_rho phi(|g_rho|) + G(sum_rho psi(|g_rho|))
class EamPotential : public SitePotential {
 public:
  explicit EamPotential(const EamParams& p = {}) : p_(p) {}

  int range_dim() const override { return 2; }
  double energy(const double* diffs, int nbonds) const override;
  double gradient(const double* diffs, int nbonds, double* grad) const override;
  void hessian(const double* diffs, int nbonds, Eigen::MatrixXd& H) const override;

  const EamParams& params() const { return p_; }

 private:
  double p_r(const double* g) const;  // bond length with coincidence guard
  EamParams p_;
};

// Periodic anti-plane potential for the screw dislocation (m = 1):
//   V = sum_rho sin^2(pi g_rho) + (1/2) (sum_rho sin^2(pi g_rho))^2
// Invariant under g_rho -> g_rho + integer, bond by bond.
class AntiplanePotential : public SitePotential {
 public:
  int range_dim() const override { return 1; }
  double energy(const double* diffs, int nbonds) const override;
  double gradient(const double* diffs, int nbonds, double* grad) const override;
  void hessian(const double* diffs, int nbonds, Eigen::MatrixXd& H) const override;
};

// Convenience wrappers over the class interface.
double eam_energy(const std::vector<Eigen::Vector2d>& diffs,
                  const EamParams& p = {});
std::vector<Eigen::Vector2d> eam_gradient(const std::vector<Eigen::Vector2d>& diffs,
                                          const EamParams& p = {});
Eigen::MatrixXd eam_hessian(const std::vector<Eigen::Vector2d>& diffs,
                            const EamParams& p = {});

double antiplane_energy(const std::vector<double>& diffs);
std::vector<double> antiplane_gradient(const std::vector<double>& diffs);
Eigen::MatrixXd antiplane_hessian(const std::vector<double>& diffs);

}  // namespace latticebc
