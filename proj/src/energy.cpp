#include "latticebc/energy.hpp"

#include <stdexcept>

namespace latticebc {

double pairwise_sum(const std::vector<double>& terms) {
  // recursive pairwise reduction; deterministic and cancellation-friendly
  std::function<double(size_t, size_t)> rec = [&](size_t lo, size_t hi) -> double {
    if (hi - lo <= 4) {
      double s = 0.0;
      for (size_t i = lo; i < hi; ++i) s += terms[i];
      return s;
    }
    size_t mid = lo + (hi - lo) / 2;
    return rec(lo, mid) + rec(mid, hi);
  };
  return terms.empty() ? 0.0 : rec(0, terms.size());
}

EnergyModel::EnergyModel(std::shared_ptr<const DefectiveLattice> lat,
                         std::shared_ptr<const SitePotential> pot,
                         std::shared_ptr<const Predictor> pred)
    : lat_(std::move(lat)), pot_(std::move(pot)), pred_(std::move(pred)) {
  m_ = pot_->range_dim();
  if (pred_->range_dim() != m_)
    throw std::invalid_argument("EnergyModel: potential/predictor range mismatch");

  for (int i = 0; i < lat_->size(); ++i) {
    if (!lat_->has_complete_stencil(i)) continue;
    asm_sites_.push_back(i);
    bond_offset_.push_back(int(nbrs_.size()));
    for (const Bond& b : lat_->stencil(i)) {
      nbrs_.push_back(b.nbr);
      double d[2];
      pred_->raw_diff(lat_->sites[i], b.rho, d);
      for (int c = 0; c < m_; ++c) base_.push_back(d[c]);
    }
  }
  bond_offset_.push_back(int(nbrs_.size()));

  site_e0_.resize(asm_sites_.size());
  std::vector<double> diffs;
  for (size_t k = 0; k < asm_sites_.size(); ++k) {
    int nb = bond_offset_[k + 1] - bond_offset_[k];
    diffs.assign(base_.begin() + m_ * bond_offset_[k],
                 base_.begin() + m_ * (bond_offset_[k] + nb));
    site_e0_[k] = pot_->energy(diffs.data(), nb);
  }
}

void EnergyModel::gather(int k, const Eigen::VectorXd& u,
                         std::vector<double>& diffs) const {
  int site = asm_sites_[k];
  int o = bond_offset_[k], nb = bond_offset_[k + 1] - o;
  diffs.resize(size_t(nb) * m_);
  for (int b = 0; b < nb; ++b) {
    int j = nbrs_[o + b];
    for (int c = 0; c < m_; ++c)
      diffs[size_t(b) * m_ + c] =
          base_[size_t(o + b) * m_ + c] + u[j * m_ + c] - u[site * m_ + c];
  }
  if (m_ == 2) {
    // proper-deformation guard for point defects
    for (int b = 0; b < nb; ++b) {
      double dx = diffs[2 * b], dy = diffs[2 * b + 1];
      if (dx * dx + dy * dy < 0.01)
        throw std::runtime_error("EnergyModel: deformed bond shorter than 0.1 at site " +
                                 std::to_string(site));
    }
  }
}

double EnergyModel::energy(const Eigen::VectorXd& u) const {
  std::vector<double> terms(asm_sites_.size());
  std::vector<double> diffs;
  for (size_t k = 0; k < asm_sites_.size(); ++k) {
    gather(int(k), u, diffs);
    int nb = bond_offset_[k + 1] - bond_offset_[k];
    terms[k] = pot_->energy(diffs.data(), nb) - site_e0_[k];
  }
  return pairwise_sum(terms);
}

double EnergyModel::energy_and_gradient(const Eigen::VectorXd& u,
                                        Eigen::VectorXd& g) const {
  g.setZero(ndof());
  std::vector<double> terms(asm_sites_.size());
  std::vector<double> diffs, gb;
  for (size_t k = 0; k < asm_sites_.size(); ++k) {
    int site = asm_sites_[k];
    int o = bond_offset_[k], nb = bond_offset_[k + 1] - o;
    gather(int(k), u, diffs);
    gb.resize(size_t(nb) * m_);
    terms[k] = pot_->gradient(diffs.data(), nb, gb.data()) - site_e0_[k];
    for (int b = 0; b < nb; ++b) {
      int j = nbrs_[o + b];
      for (int c = 0; c < m_; ++c) {
        g[j * m_ + c] += gb[size_t(b) * m_ + c];
        g[site * m_ + c] -= gb[size_t(b) * m_ + c];
      }
    }
  }
  return pairwise_sum(terms);
}

Eigen::VectorXd EnergyModel::gradient(const Eigen::VectorXd& u) const {
  Eigen::VectorXd g;
  energy_and_gradient(u, g);
  return g;
}

SpMat EnergyModel::hessian_assemble(const Eigen::VectorXd& u) const {
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<double> diffs;
  Eigen::MatrixXd H;
  for (size_t k = 0; k < asm_sites_.size(); ++k) {
    int site = asm_sites_[k];
    int o = bond_offset_[k], nb = bond_offset_[k + 1] - o;
    gather(int(k), u, diffs);
    pot_->hessian(diffs.data(), nb, H);
    for (int b = 0; b < nb; ++b) {
      int jb = nbrs_[o + b];
      for (int c = 0; c < nb; ++c) {
        int jc = nbrs_[o + c];
        for (int p = 0; p < m_; ++p) {
          for (int q = 0; q < m_; ++q) {
            double h = H(b * m_ + p, c * m_ + q);
            if (h == 0.0) continue;
            trips.emplace_back(jb * m_ + p, jc * m_ + q, h);
            trips.emplace_back(jb * m_ + p, site * m_ + q, -h);
            trips.emplace_back(site * m_ + p, jc * m_ + q, -h);
            trips.emplace_back(site * m_ + p, site * m_ + q, h);
          }
        }
      }
    }
  }
  SpMat A(ndof(), ndof());
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

Eigen::VectorXd EnergyModel::hessian_apply(const Eigen::VectorXd& u,
                                           const Eigen::VectorXd& v) const {
  return hessian_assemble(u) * v;
}

SpMat EnergyModel::bond_laplacian() const {
  // homogeneous bond stiffness from the potential hessian at the reference
  CauchyBorn cb(pot_);
  Eigen::MatrixXd H;
  std::vector<double> ref;
  Eigen::Matrix2d F0 = pred_->reference_strain();
  for (const Vec2& r : cb.stencil()) {
    Vec2 g = F0 * r;
    for (int c = 0; c < m_; ++c) ref.push_back(g[c]);
  }
  pot_->hessian(ref.data(), 6, H);
  double w = 0.0;
  for (int b = 0; b < 6; ++b)
    for (int p = 0; p < m_; ++p) w += std::abs(H(b * m_ + p, b * m_ + p));
  w /= 6.0 * m_;

  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < lat_->size(); ++i) {
    for (const Bond& b : lat_->stencil(i)) {
      if (b.nbr < 0) continue;
      for (int c = 0; c < m_; ++c) {
        trips.emplace_back(i * m_ + c, i * m_ + c, w);
        trips.emplace_back(i * m_ + c, b.nbr * m_ + c, -w);
      }
    }
  }
  SpMat L(ndof(), ndof());
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

CauchyBorn::CauchyBorn(std::shared_ptr<const SitePotential> pot,
                       const LatticeMatrix& A)
    : pot_(std::move(pot)), detA_(A.det()) {
  for (const auto& d : kNNDirs) R_.push_back(A.pos(d[0], d[1]));
}

double CauchyBorn::density(const Eigen::Matrix2d& F) const {
  int m = pot_->range_dim();
  std::vector<double> diffs;
  for (const Vec2& r : R_) {
    Vec2 g = F * r;
    for (int c = 0; c < m; ++c) diffs.push_back(g[c]);
  }
  return detA_ * pot_->energy(diffs.data(), int(R_.size()));
}

Eigen::Matrix2d CauchyBorn::ddensity(const Eigen::Matrix2d& F) const {
  int m = pot_->range_dim();
  std::vector<double> diffs, grad(R_.size() * m);
  for (const Vec2& r : R_) {
    Vec2 g = F * r;
    for (int c = 0; c < m; ++c) diffs.push_back(g[c]);
  }
  pot_->gradient(diffs.data(), int(R_.size()), grad.data());
  Eigen::Matrix2d dW = Eigen::Matrix2d::Zero();
  for (size_t b = 0; b < R_.size(); ++b)
    for (int c = 0; c < m; ++c) dW.row(c) += grad[b * m + c] * R_[b].transpose();
  return detA_ * dW;
}

Eigen::MatrixXd CauchyBorn::dddensity(const Eigen::Matrix2d& F) const {
  int m = pot_->range_dim();
  std::vector<double> diffs;
  for (const Vec2& r : R_) {
    Vec2 g = F * r;
    for (int c = 0; c < m; ++c) diffs.push_back(g[c]);
  }
  Eigen::MatrixXd H;
  pot_->hessian(diffs.data(), int(R_.size()), H);
  Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (size_t b = 0; b < R_.size(); ++b)
    for (size_t c = 0; c < R_.size(); ++c)
      for (int p = 0; p < m; ++p)
        for (int q = 0; q < m; ++q)
          for (int a = 0; a < 2; ++a)
            for (int bb = 0; bb < 2; ++bb)
              D2(p * 2 + a, q * 2 + bb) +=
                  H(b * m + p, c * m + q) * R_[b][a] * R_[c][bb];
  return detA_ * D2;
}

}  // namespace latticebc
