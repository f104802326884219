#pragma once

#include "latticebc/lattice.hpp"

#include <memory>

namespace latticebc {

// Far-field predictor deformation y0.  The energy model only ever needs
// predictor values through bond differences, so that is the interface:
// raw_diff keeps any slip jump across the branch cut (the periodic
// anti-plane potential absorbs it), elastic_diff removes it.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual int range_dim() const = 0;

  // D_rho y0(l) for the bond starting at x with vector rho; out has m entries
  virtual void raw_diff(const Vec2& x, const Vec2& rho, double* out) const = 0;

  // slip-corrected difference; defaults to the raw one
  virtual void elastic_diff(const Vec2& x, const Vec2& rho, double* out) const {
    raw_diff(x, rho, out);
  }

  // reference strain F0 as an m x 2 matrix (rows beyond m unused)
  virtual Eigen::Matrix2d reference_strain() const = 0;
};

// y0(x) = x, for point defects (m = 2).
class IdentityPredictor : public Predictor {
 public:
  int range_dim() const override { return 2; }
  void raw_diff(const Vec2&, const Vec2& rho, double* out) const override {
    out[0] = rho.x();
    out[1] = rho.y();
  }
  Eigen::Matrix2d reference_strain() const override {
    return Eigen::Matrix2d::Identity();
  }
};

// y0(x) = F x for a general m x 2 deformation gradient; used by the
// force-consistency checks of the a/c scheme.
class HomogeneousPredictor : public Predictor {
 public:
  HomogeneousPredictor(int m, const Eigen::Matrix2d& F) : m_(m), F_(F) {}
  int range_dim() const override { return m_; }
  void raw_diff(const Vec2&, const Vec2& rho, double* out) const override {
    Vec2 g = F_ * rho;
    for (int c = 0; c < m_; ++c) out[c] = g[c];
  }
  Eigen::Matrix2d reference_strain() const override { return F_; }

 private:
  int m_;
  Eigen::Matrix2d F_;
};

// Anti-plane screw dislocation predictor (m = 1):
//   u0(x) = F.(x - xhat) + arg(x - xhat) / (2 pi),
// with arg in (0, 2 pi) and branch cut Gamma = {xhat + (t,0), t > 0}.
class ScrewPredictor : public Predictor {
 public:
  ScrewPredictor(const Vec2& core, const Vec2& shear)
      : core_(core), shear_(shear) {}

  int range_dim() const override { return 1; }

  double u0(const Vec2& x) const;

  // +1 when the bond crosses Gamma upward, -1 downward, 0 otherwise
  int crossing(const Vec2& x, const Vec2& rho) const;

  void raw_diff(const Vec2& x, const Vec2& rho, double* out) const override {
    out[0] = u0(x + rho) - u0(x);
  }
  void elastic_diff(const Vec2& x, const Vec2& rho, double* out) const override {
    out[0] = u0(x + rho) - u0(x) + double(crossing(x, rho));
  }
  // the anti-plane reference state has zero scalar differences; the shear is
  // part of the predictor field, not of the reference strain
  Eigen::Matrix2d reference_strain() const override {
    return Eigen::Matrix2d::Zero();
  }

  const Vec2& core() const { return core_; }
  const Vec2& shear() const { return shear_; }

 private:
  Vec2 core_, shear_;
};

// screw_u0 / elastic_bond_diff operation surfaces
double screw_u0(const ScrewPredictor& pred, const Vec2& x);

struct BondDiff {
  double raw;
  double slip_corrected;
};
BondDiff elastic_bond_diff(const DefectiveLattice& lat,
                           const ScrewPredictor& pred, int site, const Vec2& rho,
                           const DisplacementField& z);

}  // namespace latticebc
