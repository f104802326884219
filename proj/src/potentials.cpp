#include "latticebc/potentials.hpp"

#include <stdexcept>

namespace latticebc {

double EamParams::phi(double r) const {
  return std::exp(-2.0 * alpha * (r - 1.0)) - 2.0 * std::exp(-alpha * (r - 1.0));
}
double EamParams::dphi(double r) const {
  return -2.0 * alpha * std::exp(-2.0 * alpha * (r - 1.0)) +
         2.0 * alpha * std::exp(-alpha * (r - 1.0));
}
double EamParams::ddphi(double r) const {
  return 4.0 * alpha * alpha * std::exp(-2.0 * alpha * (r - 1.0)) -
         2.0 * alpha * alpha * std::exp(-alpha * (r - 1.0));
}
double EamParams::G(double s) const {
  double d = s - s0;
  return gamma * (d * d + d * d * d * d);
}
double EamParams::dG(double s) const {
  double d = s - s0;
  return gamma * (2.0 * d + 4.0 * d * d * d);
}
double EamParams::ddG(double s) const {
  double d = s - s0;
  return gamma * (2.0 + 12.0 * d * d);
}

double EamPotential::p_r(const double* g) const {
  double r = std::sqrt(g[0] * g[0] + g[1] * g[1]);
  if (r < 1e-12)
    throw std::domain_error("eam: coincident atoms (zero-length bond)");
  return r;
}

double EamPotential::energy(const double* diffs, int nbonds) const {
  double e = 0.0, s = 0.0;
  for (int b = 0; b < nbonds; ++b) {
    double r = p_r(diffs + 2 * b);
    e += p_.phi(r);
    s += p_.psi(r);
  }
  return e + p_.G(s);
}

double EamPotential::gradient(const double* diffs, int nbonds, double* grad) const {
  double e = 0.0, s = 0.0;
  std::vector<double> r(nbonds);
  for (int b = 0; b < nbonds; ++b) {
    r[b] = p_r(diffs + 2 * b);
    e += p_.phi(r[b]);
    s += p_.psi(r[b]);
  }
  double gs = p_.dG(s);
  for (int b = 0; b < nbonds; ++b) {
    double c = (p_.dphi(r[b]) + gs * p_.dpsi(r[b])) / r[b];
    grad[2 * b] = c * diffs[2 * b];
    grad[2 * b + 1] = c * diffs[2 * b + 1];
  }
  return e + p_.G(s);
}

void EamPotential::hessian(const double* diffs, int nbonds, Eigen::MatrixXd& H) const {
  H.setZero(2 * nbonds, 2 * nbonds);
  double s = 0.0;
  std::vector<double> r(nbonds);
  std::vector<Eigen::Vector2d> dir(nbonds);
  for (int b = 0; b < nbonds; ++b) {
    r[b] = p_r(diffs + 2 * b);
    s += p_.psi(r[b]);
    dir[b] = Eigen::Vector2d(diffs[2 * b], diffs[2 * b + 1]) / r[b];
  }
  double gs = p_.dG(s), gss = p_.ddG(s);
  for (int b = 0; b < nbonds; ++b) {
    double frr = p_.ddphi(r[b]) + gs * p_.ddpsi(r[b]);
    double fr = (p_.dphi(r[b]) + gs * p_.dpsi(r[b])) / r[b];
    Eigen::Matrix2d P = dir[b] * dir[b].transpose();
    Eigen::Matrix2d blk = frr * P + fr * (Eigen::Matrix2d::Identity() - P);
    H.block<2, 2>(2 * b, 2 * b) += blk;
    for (int c = 0; c < nbonds; ++c) {
      Eigen::Matrix2d cross = gss * p_.dpsi(r[b]) * p_.dpsi(r[c]) *
                              (dir[b] * dir[c].transpose());
      H.block<2, 2>(2 * b, 2 * c) += cross;
    }
  }
}

namespace {
inline double ap_phi(double t) {
  double st = std::sin(M_PI * t);
  return st * st;
}
inline double ap_dphi(double t) { return M_PI * std::sin(2.0 * M_PI * t); }
inline double ap_ddphi(double t) {
  return 2.0 * M_PI * M_PI * std::cos(2.0 * M_PI * t);
}
}  // namespace

double AntiplanePotential::energy(const double* diffs, int nbonds) const {
  double s = 0.0;
  for (int b = 0; b < nbonds; ++b) s += ap_phi(diffs[b]);
  return s + 0.5 * s * s;
}

double AntiplanePotential::gradient(const double* diffs, int nbonds,
                                    double* grad) const {
  double s = 0.0;
  for (int b = 0; b < nbonds; ++b) s += ap_phi(diffs[b]);
  for (int b = 0; b < nbonds; ++b) grad[b] = (1.0 + s) * ap_dphi(diffs[b]);
  return s + 0.5 * s * s;
}

void AntiplanePotential::hessian(const double* diffs, int nbonds,
                                 Eigen::MatrixXd& H) const {
  H.setZero(nbonds, nbonds);
  double s = 0.0;
  for (int b = 0; b < nbonds; ++b) s += ap_phi(diffs[b]);
  for (int b = 0; b < nbonds; ++b) {
    H(b, b) += (1.0 + s) * ap_ddphi(diffs[b]);
    for (int c = 0; c < nbonds; ++c) H(b, c) += ap_dphi(diffs[b]) * ap_dphi(diffs[c]);
  }
}

double eam_energy(const std::vector<Eigen::Vector2d>& diffs, const EamParams& p) {
  EamPotential V(p);
  return V.energy(diffs[0].data(), int(diffs.size()));
}

std::vector<Eigen::Vector2d> eam_gradient(const std::vector<Eigen::Vector2d>& diffs,
                                          const EamParams& p) {
  EamPotential V(p);
  std::vector<Eigen::Vector2d> g(diffs.size());
  V.gradient(diffs[0].data(), int(diffs.size()), g[0].data());
  return g;
}

Eigen::MatrixXd eam_hessian(const std::vector<Eigen::Vector2d>& diffs,
                            const EamParams& p) {
  EamPotential V(p);
  Eigen::MatrixXd H;
  V.hessian(diffs[0].data(), int(diffs.size()), H);
  return H;
}

double antiplane_energy(const std::vector<double>& diffs) {
  AntiplanePotential V;
  return V.energy(diffs.data(), int(diffs.size()));
}

std::vector<double> antiplane_gradient(const std::vector<double>& diffs) {
  AntiplanePotential V;
  std::vector<double> g(diffs.size());
  V.gradient(diffs.data(), int(diffs.size()), g.data());
  return g;
}

Eigen::MatrixXd antiplane_hessian(const std::vector<double>& diffs) {
  AntiplanePotential V;
  Eigen::MatrixXd H;
  V.hessian(diffs.data(), int(diffs.size()), H);
  return H;
}

}  // namespace latticebc
