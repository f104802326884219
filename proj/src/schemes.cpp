#include "latticebc/schemes.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>

namespace latticebc {

namespace {
constexpr double kSqrt3 = 1.7320508075688772;
}

const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::Dir: return "dir";
    case SchemeKind::Per: return "per";
    case SchemeKind::Lin: return "lin";
    case SchemeKind::Ac: return "ac";
  }
  return "?";
}

Problem Problem::vacancy(const EamParams& p) {
  return {DefectSpec::vacancy(), std::make_shared<EamPotential>(p),
          std::make_shared<IdentityPredictor>()};
}
Problem Problem::interstitial(const EamParams& p) {
  return {DefectSpec::interstitial(), std::make_shared<EamPotential>(p),
          std::make_shared<IdentityPredictor>()};
}
Problem Problem::none(const EamParams& p) {
  return {DefectSpec::none(), std::make_shared<EamPotential>(p),
          std::make_shared<IdentityPredictor>()};
}
Problem Problem::screw(const Vec2& core, const Vec2& shear) {
  return {DefectSpec::dislocation(core), std::make_shared<AntiplanePotential>(),
          std::make_shared<ScrewPredictor>(core, shear)};
}

double homogeneous_bond_stiffness(const SitePotential& pot,
                                  const Eigen::Matrix2d& F0) {
  int m = pot.range_dim();
  std::vector<double> ref;
  LatticeMatrix A = LatticeMatrix::triangular();
  for (const auto& d : kNNDirs) {
    Vec2 g = F0 * A.pos(d[0], d[1]);
    for (int c = 0; c < m; ++c) ref.push_back(g[c]);
  }
  Eigen::MatrixXd H;
  pot.hessian(ref.data(), 6, H);
  double w = 0.0;
  for (int b = 0; b < 6; ++b)
    for (int c = 0; c < m; ++c) w += std::abs(H(b * m + c, b * m + c));
  return w / (6.0 * m);
}

SpMat graph_laplacian(const DefectiveLattice& lat, int m, double w) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < lat.size(); ++i) {
    for (const Bond& b : lat.stencil(i)) {
      if (b.nbr < 0) continue;
      for (int c = 0; c < m; ++c) {
        trips.emplace_back(i * m + c, i * m + c, w);
        trips.emplace_back(i * m + c, b.nbr * m + c, -w);
      }
    }
  }
  SpMat L(m * lat.size(), m * lat.size());
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

namespace {

// zero-extended transport of a hexagon-lattice field onto another lattice
std::function<DisplacementField(const DefectiveLattice&)> make_transport(
    std::shared_ptr<const DefectiveLattice> lat,
    std::shared_ptr<const Eigen::VectorXd> u, int m) {
  return [lat, u, m](const DefectiveLattice& ref) {
    DisplacementField out(m, ref.size());
    for (int i = 0; i < ref.size(); ++i) {
      int j;
      if (i == ref.interstitial_index) {
        j = lat->interstitial_index;
      } else {
        j = lat->find_coord(ref.coords[i][0], ref.coords[i][1]);
      }
      if (j < 0) continue;
      for (int c = 0; c < m; ++c) out.at(i, c) = (*u)[j * m + c];
    }
    return out;
  };
}

std::vector<uint8_t> hexdist_mask(const DefectiveLattice& lat, int m, int hmax) {
  std::vector<uint8_t> mask(size_t(m) * lat.size(), 0);
  for (int i = 0; i < lat.size(); ++i)
    if (lat.hexdist_of(i) <= hmax)
      for (int c = 0; c < m; ++c) mask[i * m + c] = 1;
  return mask;
}

int count_hexdist(const DefectiveLattice& lat, int hmax) {
  int n = 0;
  for (int i = 0; i < lat.size(); ++i)
    if (lat.hexdist_of(i) <= hmax) ++n;
  return n;
}

}  // namespace

SchemeResult solve_dir(const Problem& prob, int K, const SchemeOptions& opts) {
  if (K < 4) throw std::invalid_argument("solve_dir: K must be >= 4");
  const int m = prob.range_dim();
  auto lat = std::make_shared<DefectiveLattice>(build_hexagon(K + 2, prob.defect));
  auto model = std::make_shared<EnergyModel>(lat, prob.potential, prob.predictor);
  auto mask = hexdist_mask(*lat, m, K);
  SpMat L = model->bond_laplacian();
  Objective obj = [model](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return model->energy_and_gradient(x, g);
  };
  auto [u, rep] = minimize(obj, Eigen::VectorXd::Zero(model->ndof()), mask, &L,
                           opts.minimize);

  SchemeResult res;
  res.kind = SchemeKind::Dir;
  res.K = K;
  res.n_inner = count_hexdist(*lat, K);
  res.report = rep;
  res.scheme_energy = rep.energy;
  auto uptr = std::make_shared<Eigen::VectorXd>(std::move(u));
  res.to_lattice = make_transport(lat, uptr, m);
  double e = rep.energy;
  res.true_energy = [e] { return e; };
  return res;
}

SchemeResult solve_per(const Problem& prob, int K, const SchemeOptions& opts) {
  if (prob.defect.kind == DefectKind::Dislocation)
    throw std::invalid_argument("solve_per: periodic scheme covers point defects only");
  const int m = prob.range_dim();
  const int L = std::max<int>(5, int(std::llround(kSqrt3 * K)));
  auto lat =
      std::make_shared<DefectiveLattice>(build_periodic_cell(L, prob.defect));
  auto model = std::make_shared<EnergyModel>(lat, prob.potential, prob.predictor);
  SpMat Lap = model->bond_laplacian();
  Objective obj = [model](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return model->energy_and_gradient(x, g);
  };
  auto [u, rep] =
      minimize(obj, Eigen::VectorXd::Zero(model->ndof()), {}, &Lap, opts.minimize);

  SchemeResult res;
  res.kind = SchemeKind::Per;
  res.K = K;
  res.n_inner = lat->size();
  res.report = rep;
  res.scheme_energy = rep.energy;
  auto uptr = std::make_shared<Eigen::VectorXd>(std::move(u));
  int mc = L / 2, nc = L / 2;
  res.to_lattice = [lat, uptr, m, L, mc, nc](const DefectiveLattice& ref) {
    DisplacementField w(m, ref.size());
    for (int i = 0; i < ref.size(); ++i) {
      int j = -1;
      if (i == ref.interstitial_index) {
        j = lat->interstitial_index;
      } else {
        int mm = ref.coords[i][0] + mc, nn = ref.coords[i][1] + nc;
        if (mm >= 0 && mm < L && nn >= 0 && nn < L) j = lat->find_coord(mm, nn);
      }
      if (j < 0) continue;
      for (int c = 0; c < m; ++c) w.at(i, c) = (*uptr)[j * m + c];
    }
    // post-process with the truncation operator so the comparison field
    // decays smoothly inside the periodic window
    Triangulation tri = Triangulation::build(ref);
    double R = std::max(4.0, L * kSqrt3 / 4.0);
    return truncate(ref, w, tri, R);
  };
  double e = rep.energy;
  res.true_energy = [e] { return e; };
  return res;
}

// ---- linearised-exterior scheme ----

namespace {

class LinModel {
 public:
  LinModel(std::shared_ptr<const DefectiveLattice> lat, const Problem& prob,
           int K_inner)
      : lat_(lat), pot_(prob.potential), m_(prob.range_dim()) {
    Eigen::Matrix2d F0 = prob.predictor->reference_strain();
    // reference stencil and its exact first/second partials
    LatticeMatrix A = LatticeMatrix::triangular();
    for (const auto& d : kNNDirs) {
      Vec2 g = F0 * A.pos(d[0], d[1]);
      for (int c = 0; c < m_; ++c) gref_stencil_.push_back(g[c]);
    }
    gref_.resize(6 * m_);
    pot_->gradient(gref_stencil_.data(), 6, gref_.data());
    pot_->hessian(gref_stencil_.data(), 6, Aref_);

    for (int i = 0; i < lat_->size(); ++i) {
      if (!lat_->has_complete_stencil(i)) continue;
      bool nonlinear = lat_->hexdist_of(i) <= K_inner;
      sites_.push_back(i);
      nonlinear_.push_back(nonlinear);
      offset_.push_back(int(nbrs_.size()));
      for (const Bond& b : lat_->stencil(i)) {
        nbrs_.push_back(b.nbr);
        double d[2];
        prob.predictor->elastic_diff(lat_->sites[i], b.rho, d);
        for (int c = 0; c < m_; ++c) base_.push_back(d[c]);
      }
    }
    offset_.push_back(int(nbrs_.size()));

    // per-site zero-displacement values of either functional branch
    e0_.resize(sites_.size());
    std::vector<double> diffs;
    for (size_t k = 0; k < sites_.size(); ++k) {
      int nb = offset_[k + 1] - offset_[k];
      diffs.assign(base_.begin() + m_ * offset_[k],
                   base_.begin() + m_ * (offset_[k] + nb));
      e0_[k] = nonlinear_[k] ? pot_->energy(diffs.data(), nb)
                             : quad_value(diffs.data(), nb);
    }
  }

  int ndof() const { return m_ * lat_->size(); }

  double energy_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& g) const {
    g.setZero(ndof());
    std::vector<double> terms(sites_.size());
    std::vector<double> diffs, gb;
    for (size_t k = 0; k < sites_.size(); ++k) {
      int site = sites_[k];
      int o = offset_[k], nb = offset_[k + 1] - o;
      diffs.resize(size_t(nb) * m_);
      for (int b = 0; b < nb; ++b) {
        int j = nbrs_[o + b];
        for (int c = 0; c < m_; ++c)
          diffs[size_t(b) * m_ + c] =
              base_[size_t(o + b) * m_ + c] + u[j * m_ + c] - u[site * m_ + c];
      }
      gb.assign(size_t(nb) * m_, 0.0);
      double e;
      if (nonlinear_[k]) {
        e = pot_->gradient(diffs.data(), nb, gb.data());
      } else {
        e = quad_gradient(diffs.data(), nb, gb.data());
      }
      terms[k] = e - e0_[k];
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

 private:
  // V^lin(ref + h) = V(ref) + <gref, h> + 1/2 <A h, h>, evaluated without
  // the constant V(ref) which cancels in differences
  double quad_value(const double* diffs, int nb) const {
    Eigen::Map<const Eigen::VectorXd> d(diffs, nb * m_);
    Eigen::VectorXd h = d - Eigen::Map<const Eigen::VectorXd>(
                                gref_stencil_.data(), nb * m_);
    return Eigen::Map<const Eigen::VectorXd>(gref_.data(), nb * m_).dot(h) +
           0.5 * h.dot(Aref_ * h);
  }
  double quad_gradient(const double* diffs, int nb, double* grad) const {
    Eigen::Map<const Eigen::VectorXd> d(diffs, nb * m_);
    Eigen::VectorXd h = d - Eigen::Map<const Eigen::VectorXd>(
                                gref_stencil_.data(), nb * m_);
    Eigen::VectorXd gv = Aref_ * h;
    double e = Eigen::Map<const Eigen::VectorXd>(gref_.data(), nb * m_).dot(h) +
               0.5 * h.dot(gv);
    gv += Eigen::Map<const Eigen::VectorXd>(gref_.data(), nb * m_);
    for (int i = 0; i < nb * m_; ++i) grad[i] = gv[i];
    return e;
  }

  std::shared_ptr<const DefectiveLattice> lat_;
  std::shared_ptr<const SitePotential> pot_;
  int m_;
  std::vector<double> gref_stencil_, gref_;
  Eigen::MatrixXd Aref_;
  std::vector<int> sites_, offset_, nbrs_;
  std::vector<uint8_t> nonlinear_;
  std::vector<double> base_, e0_;
};

}  // namespace

SchemeResult solve_lin(const Problem& prob, int K, const SchemeOptions& opts) {
  if (K < 4) throw std::invalid_argument("solve_lin: K must be >= 4");
  const int m = prob.range_dim();
  long long k3 = (long long)K * K * K;
  int outer = int(std::min<long long>(k3, std::max<long long>(opts.lin_outer_cap, 6LL * K)));
  outer = std::max(outer, K + 4);

  auto lat = std::make_shared<DefectiveLattice>(build_hexagon(outer + 2, prob.defect));
  auto model = std::make_shared<LinModel>(lat, prob, K);
  auto mask = hexdist_mask(*lat, m, outer);
  SpMat L = graph_laplacian(
      *lat, m, homogeneous_bond_stiffness(*prob.potential,
                                          prob.predictor->reference_strain()));
  Objective obj = [model](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return model->energy_and_gradient(x, g);
  };
  auto [u, rep] =
      minimize(obj, Eigen::VectorXd::Zero(model->ndof()), mask, &L, opts.minimize);

  SchemeResult res;
  res.kind = SchemeKind::Lin;
  res.K = K;
  res.n_inner = count_hexdist(*lat, K);
  res.report = rep;
  res.scheme_energy = rep.energy;
  auto uptr = std::make_shared<Eigen::VectorXd>(std::move(u));
  res.to_lattice = make_transport(lat, uptr, m);
  auto pot = prob.potential;
  auto pred = prob.predictor;
  res.true_energy = [lat, uptr, pot, pred] {
    EnergyModel exact(lat, pot, pred);
    return exact.energy(*uptr);
  };
  return res;
}

// ---- a/c scheme ----

int AcMesh::find_node(int m, int n) const {
  auto it = node_index_.find({m, n});
  return it == node_index_.end() ? -1 : it->second;
}

namespace {

// node k on side `side` of the hexagonal ring of radius r; k = 0 is the
// corner r * kNNDirs[side], k = r the next corner
std::array<int, 2> ring_node_coord(int r, int side, int k) {
  const auto& c0 = kNNDirs[side];
  const auto& c1 = kNNDirs[(side + 1) % 6];
  return {r * c0[0] + k * (c1[0] - c0[0]), r * c0[1] + k * (c1[1] - c0[1])};
}

// hat-function gradients of a triangle, rows of [b0; b1; b2]
std::array<Vec2, 3> hat_gradients(const Eigen::Matrix2d& inv_edges) {
  std::array<Vec2, 3> b;
  b[1] = inv_edges.row(0).transpose();
  b[2] = inv_edges.row(1).transpose();
  b[0] = -(b[1] + b[2]);
  return b;
}

struct UnitTri {
  std::array<std::array<int, 2>, 3> c;  // corner coordinates
};

// unit lattice triangles with at least one corner in the hexdist band
std::vector<UnitTri> unit_band_triangles(int r_lo, int r_hi) {
  std::vector<UnitTri> out;
  for (int m = -r_hi - 1; m <= r_hi + 1; ++m) {
    for (int n = -r_hi - 1; n <= r_hi + 1; ++n) {
      std::array<std::array<int, 2>, 3> up = {{{{m, n}}, {{m + 1, n}}, {{m, n + 1}}}};
      std::array<std::array<int, 2>, 3> dn = {
          {{{m + 1, n}}, {{m + 1, n + 1}}, {{m, n + 1}}}};
      for (const auto& t : {up, dn}) {
        int hmin = INT32_MAX, hmax = 0;
        for (const auto& cc : t) {
          hmin = std::min(hmin, hexdist(cc[0], cc[1]));
          hmax = std::max(hmax, hexdist(cc[0], cc[1]));
        }
        if (hmax <= r_hi && hmax >= r_lo + 1 && hmin >= r_lo)
          out.push_back({t});
      }
    }
  }
  return out;
}

// Solve for the interface reconstruction coefficients so the coupling is
// force-free on homogeneous states.  Unknowns: a 6x6 matrix per interface
// site; constraints: stencil reproduction (EC) and the per-node, per-axis
// patch test (FC).  Least-norm-to-identity solution via regularised normal
// equations.
std::pair<std::vector<Eigen::Matrix<double, 6, 6>>, double> solve_reconstruction(
    int K) {
  LatticeMatrix A = LatticeMatrix::triangular();
  const double detA = A.det();

  // interface ring sites, hexdist == K+1
  std::vector<std::array<int, 2>> iface;
  std::map<std::pair<int, int>, int> iface_id;
  for (int side = 0; side < 6; ++side) {
    for (int k = 0; k < K + 1; ++k) {
      auto cc = ring_node_coord(K + 1, side, k);
      iface_id[{cc[0], cc[1]}] = int(iface.size());
      iface.push_back(cc);
    }
  }
  const int ni = int(iface.size());
  const int nunk = 36 * ni;
  auto unk = [&](int site, int rho, int sig) { return site * 36 + rho * 6 + sig; };

  struct Row {
    std::vector<std::pair<int, double>> a;
    double b = 0.0;
  };
  std::vector<Row> rows;

  // (EC) stencil reproduction: sum_s C(r,s) s = r
  for (int i = 0; i < ni; ++i) {
    for (int r = 0; r < 6; ++r) {
      for (int xy = 0; xy < 2; ++xy) {
        Row row;
        for (int s = 0; s < 6; ++s)
          row.a.push_back({unk(i, r, s), A.pos(kNNDirs[s][0], kNNDirs[s][1])[xy]});
        row.b = A.pos(kNNDirs[r][0], kNNDirs[r][1])[xy];
        rows.push_back(std::move(row));
      }
    }
  }

  // effective volumes of the refined band triangles (Voronoi rule)
  auto v_eff_unit = [&](const UnitTri& t) {
    int nin = 0;
    for (const auto& cc : t.c)
      if (hexdist(cc[0], cc[1]) <= K + 1) ++nin;
    return (detA / 2.0) * double(3 - nin) / 3.0;
  };
  auto tris = unit_band_triangles(K, K + 3);

  // FE contribution coefficients per (node, axis)
  std::map<std::pair<int, int>, std::array<double, 3>> fe_coeff;
  for (const auto& t : tris) {
    double v = v_eff_unit(t);
    if (v == 0.0) continue;
    Eigen::Matrix2d E;
    Vec2 p0 = A.pos(t.c[0][0], t.c[0][1]);
    E.col(0) = A.pos(t.c[1][0], t.c[1][1]) - p0;
    E.col(1) = A.pos(t.c[2][0], t.c[2][1]) - p0;
    auto b = hat_gradients(E.inverse());
    for (int corner = 0; corner < 3; ++corner) {
      auto key = std::make_pair(t.c[corner][0], t.c[corner][1]);
      auto& acc = fe_coeff[key];
      for (int ax = 0; ax < 3; ++ax) {
        Vec2 rho = A.pos(kNNDirs[ax][0], kNNDirs[ax][1]);
        acc[ax] += (v / detA) * b[corner].dot(rho);
      }
    }
  }

  // (FC) rows: for every node in the band and axis rho, the coefficient of
  // phi(node) in L_rho - L_{-rho} must vanish
  auto in_a = [&](int m, int n) { return hexdist(m, n) <= K; };
  for (int m = -(K + 3); m <= K + 3; ++m) {
    for (int n = -(K + 3); n <= K + 3; ++n) {
      int hd = hexdist(m, n);
      if (hd < K - 1 || hd > K + 2) continue;
      for (int ax = 0; ax < 3; ++ax) {
        const auto& dp = kNNDirs[ax];
        const auto& dmn = kNNDirs[ax + 3];
        Row row;
        double cst = 0.0;
        // atomistic sums
        cst += (in_a(m - dp[0], n - dp[1]) ? 1.0 : 0.0) - (in_a(m, n) ? 1.0 : 0.0);
        cst -= (in_a(m - dmn[0], n - dmn[1]) ? 1.0 : 0.0) - (in_a(m, n) ? 1.0 : 0.0);
        // FE sums (odd in rho, hence twice the +rho coefficient)
        auto it = fe_coeff.find({m, n});
        if (it != fe_coeff.end()) cst += 2.0 * it->second[ax];
        // interface reconstruction terms
        for (int s = 0; s < 6; ++s) {
          // l + sigma_s = node
          auto jt = iface_id.find({m - kNNDirs[s][0], n - kNNDirs[s][1]});
          if (jt != iface_id.end()) {
            row.a.push_back({unk(jt->second, ax, s), 1.0});
            row.a.push_back({unk(jt->second, ax + 3, s), -1.0});
          }
        }
        auto ct = iface_id.find({m, n});
        if (ct != iface_id.end()) {
          for (int s = 0; s < 6; ++s) {
            row.a.push_back({unk(ct->second, ax, s), -1.0});
            row.a.push_back({unk(ct->second, ax + 3, s), 1.0});
          }
        }
        if (row.a.empty() && cst == 0.0) continue;
        row.b = -cst;
        rows.push_back(std::move(row));
      }
    }
  }

  // regularised normal equations, anchored at the identity reconstruction
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(nunk);
  for (int i = 0; i < ni; ++i)
    for (int r = 0; r < 6; ++r) x0[unk(i, r, r)] = 1.0;

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nunk);
  const double lambda = 1e-9;
  for (const auto& row : rows) {
    for (const auto& [ci, vi] : row.a) {
      rhs[ci] += vi * row.b;
      for (const auto& [cj, vj] : row.a) trips.emplace_back(ci, cj, vi * vj);
    }
  }
  for (int i = 0; i < nunk; ++i) {
    trips.emplace_back(i, i, lambda);
    rhs[i] += lambda * x0[i];
  }
  SpMat AtA(nunk, nunk);
  AtA.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SpMat> chol(AtA);
  if (chol.info() != Eigen::Success)
    throw std::runtime_error("ac reconstruction: normal equations not SPD");
  Eigen::VectorXd x = chol.solve(rhs);

  double resid = 0.0;
  for (const auto& row : rows) {
    double r = -row.b;
    for (const auto& [ci, vi] : row.a) r += vi * x[ci];
    resid = std::max(resid, std::abs(r));
  }

  std::vector<Eigen::Matrix<double, 6, 6>> C(ni);
  for (int i = 0; i < ni; ++i)
    for (int r = 0; r < 6; ++r)
      for (int s = 0; s < 6; ++s) C[i](r, s) = x[unk(i, r, s)];

  // map back to a coordinate-keyed list in interface order used by the mesh
  return {std::move(C), resid};
}

}  // namespace

AcMesh build_ac_mesh(const Problem& prob, int K, double beta) {
  if (K < 6) throw std::invalid_argument("build_ac_mesh: K must be >= 6");
  if (prob.defect.kind == DefectKind::Dislocation) {
    if (std::abs(beta - 1.0) > 1e-12)
      throw std::invalid_argument("build_ac_mesh: dislocations require beta = 1");
  } else if (beta <= 0.0 || beta > 2.0) {
    throw std::invalid_argument("build_ac_mesh: point defects require 0 < beta <= 2");
  }

  AcMesh mesh;
  mesh.K = K;
  mesh.beta = beta;
  mesh.refined_radius = K + 3;

  mesh.lat = std::make_shared<DefectiveLattice>(
      build_hexagon(mesh.refined_radius, prob.defect));
  const DefectiveLattice& lat = *mesh.lat;

  // nodes: all refined-zone sites first, coarse ring nodes appended
  for (int i = 0; i < lat.size(); ++i) {
    mesh.node_pos.push_back(lat.sites[i]);
    mesh.node_coord.push_back(lat.coords[i]);
    if (i != lat.interstitial_index)
      mesh.node_index_[{lat.coords[i][0], lat.coords[i][1]}] = i;
  }

  // site partition
  for (int i = 0; i < lat.size(); ++i) {
    int hd = lat.hexdist_of(i);
    if (hd <= K) mesh.atomistic.push_back(i);
    else if (hd == K + 1) mesh.interface.push_back(i);
  }

  // refined continuum triangles through the halo
  LatticeMatrix A = LatticeMatrix::triangular();
  const double unit_area = A.det() / 2.0;
  for (const auto& t : unit_band_triangles(K, mesh.refined_radius)) {
    int nin = 0;
    for (const auto& cc : t.c)
      if (hexdist(cc[0], cc[1]) <= K + 1) ++nin;
    if (nin == 3) continue;
    AcTriangle T;
    for (int c = 0; c < 3; ++c) {
      T.v[c] = mesh.find_node(t.c[c][0], t.c[c][1]);
      if (T.v[c] < 0) throw std::logic_error("build_ac_mesh: refined node missing");
    }
    Eigen::Matrix2d E;
    E.col(0) = mesh.node_pos[T.v[1]] - mesh.node_pos[T.v[0]];
    E.col(1) = mesh.node_pos[T.v[2]] - mesh.node_pos[T.v[0]];
    T.area = 0.5 * E.determinant();
    T.inv_edges = E.inverse();
    T.v_eff = unit_area * double(3 - nin) / 3.0;
    mesh.tris.push_back(T);
  }

  // coarsening layers with h(x) ~ (|x|/K)^beta, spacing at most doubling
  // between consecutive rings
  auto add_ring_nodes = [&](int r, int t) {
    std::vector<std::vector<int>> sides(6);
    auto get = [&](int side, int k) {
      auto cc = ring_node_coord(r, side, k);
      int id = mesh.find_node(cc[0], cc[1]);
      if (id < 0) {
        id = mesh.nnodes();
        mesh.node_index_[{cc[0], cc[1]}] = id;
        mesh.node_pos.push_back(A.pos(cc[0], cc[1]));
        mesh.node_coord.push_back(cc);
      }
      return id;
    };
    for (int side = 0; side < 6; ++side) {
      for (int k = 0; k < r; k += t) sides[side].push_back(get(side, k));
      sides[side].push_back(get(side, r));  // shared corner with the next side
    }
    return sides;
  };

  long long target = (long long)K * K;
  int r = mesh.refined_radius, t = 1;
  auto inner = add_ring_nodes(r, t);
  while (r < target) {
    double hdes = std::pow(double(r) / double(K), beta);
    int tn = std::max(t, std::min(2 * t, int(hdes)));
    int rn = int(std::min<long long>(target, (long long)r + tn));

    auto outer = add_ring_nodes(rn, tn);

    AcStrip strip;
    strip.r_in = r;
    strip.r_out = rn;
    strip.tri_begin = int(mesh.tris.size());
    auto add = [&](int a, int b, int c) {
      AcTriangle T;
      T.v = {a, b, c};
      Eigen::Matrix2d E;
      E.col(0) = mesh.node_pos[b] - mesh.node_pos[a];
      E.col(1) = mesh.node_pos[c] - mesh.node_pos[a];
      double ar = 0.5 * E.determinant();
      if (ar < 0) {
        std::swap(T.v[1], T.v[2]);
        E.col(0) = mesh.node_pos[T.v[1]] - mesh.node_pos[T.v[0]];
        E.col(1) = mesh.node_pos[T.v[2]] - mesh.node_pos[T.v[0]];
        ar = 0.5 * E.determinant();
      }
      if (ar <= 1e-12)
        throw std::runtime_error("build_ac_mesh: degenerate element");
      T.area = ar;
      T.v_eff = ar;
      T.inv_edges = E.inverse();
      mesh.tris.push_back(T);
    };
    for (int side = 0; side < 6; ++side) {
      const auto& I = inner[side];
      const auto& O = outer[side];
      int n1 = int(I.size()) - 1, n2 = int(O.size()) - 1;
      int i = 0, j = 0;
      while (i < n1 || j < n2) {
        bool adv_outer =
            j < n2 && (i == n1 || double(j + 1) / n2 <= double(i + 1) / n1);
        if (adv_outer) {
          add(I[i], O[j], O[j + 1]);
          ++j;
        } else {
          add(I[i], O[j], I[i + 1]);
          ++i;
        }
      }
    }
    strip.tri_end = int(mesh.tris.size());
    mesh.strips.push_back(strip);

    inner.swap(outer);
    r = rn;
    t = tn;
  }
  mesh.outer_radius = r;

  // outermost ring carries the homogeneous Dirichlet condition
  mesh.free_mask.assign(mesh.nnodes(), 1);
  for (const auto& side : inner)
    for (int id : side) mesh.free_mask[id] = 0;

  auto [C, resid] = solve_reconstruction(K);
  mesh.recon_residual = resid;
  if (resid > 1e-9)
    throw std::runtime_error(
        "build_ac_mesh: interface reconstruction is inconsistent (residual " +
        std::to_string(resid) + ")");
  // map solver ordering (ring walk) onto the mesh's interface list
  std::map<std::pair<int, int>, int> ring_order;
  {
    int idx = 0;
    for (int side = 0; side < 6; ++side)
      for (int k = 0; k < K + 1; ++k) {
        auto cc = ring_node_coord(K + 1, side, k);
        ring_order[{cc[0], cc[1]}] = idx++;
      }
  }
  mesh.recon.resize(mesh.interface.size());
  for (size_t i = 0; i < mesh.interface.size(); ++i) {
    const auto& cc = lat.coords[mesh.interface[i]];
    auto it = ring_order.find({cc[0], cc[1]});
    if (it == ring_order.end())
      throw std::logic_error("build_ac_mesh: interface site not on ring walk");
    mesh.recon[i] = C[it->second];
  }
  return mesh;
}

AcModel::AcModel(std::shared_ptr<const AcMesh> mesh, const Problem& prob)
    : mesh_(std::move(mesh)),
      pot_(prob.potential),
      m_(prob.range_dim()),
      cb_(prob.potential) {
  const DefectiveLattice& lat = *mesh_->lat;
  double detA = lat.A.det();
  cb_scale_ = 1.0 / (detA * detA);

  auto add_site = [&](int site, bool iface, const Eigen::Matrix<double, 6, 6>* C) {
    SiteData sd;
    sd.site = site;
    sd.iface = iface;
    sd.offset = int(nbrs_.size());
    sd.nb = int(lat.stencil(site).size());
    sd.C = C;
    for (const Bond& b : lat.stencil(site)) {
      if (b.nbr < 0) throw std::logic_error("AcModel: incomplete stencil");
      nbrs_.push_back(b.nbr);
      double d[2];
      prob.predictor->elastic_diff(lat.sites[site], b.rho, d);
      for (int c = 0; c < m_; ++c) base_.push_back(d[c]);
    }
    sdata_.push_back(sd);
  };
  for (int s : mesh_->atomistic) add_site(s, false, nullptr);
  for (size_t i = 0; i < mesh_->interface.size(); ++i)
    add_site(mesh_->interface[i], true, &mesh_->recon[i]);

  Eigen::VectorXd zero = Eigen::VectorXd::Zero(ndof());
  site_e0_.resize(sdata_.size());
  for (size_t k = 0; k < sdata_.size(); ++k)
    site_e0_[k] = site_term(sdata_[k], zero, nullptr);

  // slip-aware base gradients of y0 per continuum triangle
  base_grad_.resize(mesh_->tris.size());
  tri_e0_.resize(mesh_->tris.size());
  const ScrewPredictor* screw = nullptr;
  if (m_ == 1) {
    screw = dynamic_cast<const ScrewPredictor*>(prob.predictor.get());
    if (!screw)
      throw std::logic_error("AcModel: anti-plane problems need a screw predictor");
  }
  for (size_t t = 0; t < mesh_->tris.size(); ++t) {
    const AcTriangle& T = mesh_->tris[t];
    Eigen::Matrix2d G0;
    if (m_ == 2) {
      G0 = prob.predictor->reference_strain();
    } else {
      // nodal predictor values, shifted by integers so each triangle sees a
      // smooth branch of the multivalued field (the slip-aware interpolant)
      double y0[3];
      for (int c = 0; c < 3; ++c) y0[c] = screw->u0(mesh_->node_pos[T.v[c]]);
      for (int c = 1; c < 3; ++c) y0[c] -= std::round(y0[c] - y0[0]);
      Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
      D(0, 0) = y0[1] - y0[0];
      D(0, 1) = y0[2] - y0[0];
      G0 = D * T.inv_edges;
    }
    base_grad_[t] = G0;
    tri_e0_[t] = cb_.density(G0);
  }
}

double AcModel::site_term(const SiteData& sd, const Eigen::VectorXd& u,
                          Eigen::VectorXd* g) const {
  const int nb = sd.nb;
  double diffs[14], rec[14], gb[14];
  for (int b = 0; b < nb; ++b) {
    int j = nbrs_[sd.offset + b];
    for (int c = 0; c < m_; ++c)
      diffs[b * m_ + c] = base_[size_t(sd.offset + b) * m_ + c] +
                          u[j * m_ + c] - u[sd.site * m_ + c];
  }
  double e;
  if (!sd.iface) {
    if (!g) return pot_->energy(diffs, nb);
    e = pot_->gradient(diffs, nb, gb);
    for (int b = 0; b < nb; ++b) {
      int j = nbrs_[sd.offset + b];
      for (int c = 0; c < m_; ++c) {
        (*g)[j * m_ + c] += gb[b * m_ + c];
        (*g)[sd.site * m_ + c] -= gb[b * m_ + c];
      }
    }
    return e;
  }
  // reconstructed stencil
  const auto& C = *sd.C;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < m_; ++c) {
      double acc = 0.0;
      for (int s = 0; s < 6; ++s) acc += C(r, s) * diffs[s * m_ + c];
      rec[r * m_ + c] = acc;
    }
  if (!g) return pot_->energy(rec, 6);
  double gr[14];
  e = pot_->gradient(rec, 6, gr);
  for (int s = 0; s < 6; ++s)
    for (int c = 0; c < m_; ++c) {
      double acc = 0.0;
      for (int r = 0; r < 6; ++r) acc += C(r, s) * gr[r * m_ + c];
      gb[s * m_ + c] = acc;
    }
  for (int b = 0; b < nb; ++b) {
    int j = nbrs_[sd.offset + b];
    for (int c = 0; c < m_; ++c) {
      (*g)[j * m_ + c] += gb[b * m_ + c];
      (*g)[sd.site * m_ + c] -= gb[b * m_ + c];
    }
  }
  return e;
}

double AcModel::tri_term(int t, const Eigen::VectorXd& u, Eigen::VectorXd* g) const {
  const AcTriangle& T = mesh_->tris[t];
  Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
  for (int c = 0; c < m_; ++c) {
    D(c, 0) = u[T.v[1] * m_ + c] - u[T.v[0] * m_ + c];
    D(c, 1) = u[T.v[2] * m_ + c] - u[T.v[0] * m_ + c];
  }
  Eigen::Matrix2d F = base_grad_[t] + D * T.inv_edges;
  double scale = mesh_->tris[t].v_eff * cb_scale_;
  if (!g) return scale * (cb_.density(F) - tri_e0_[t]);
  double e = scale * (cb_.density(F) - tri_e0_[t]);
  Eigen::Matrix2d dW = cb_.ddensity(F);
  auto b = hat_gradients(T.inv_edges);
  for (int corner = 0; corner < 3; ++corner)
    for (int c = 0; c < m_; ++c)
      (*g)[T.v[corner] * m_ + c] += scale * dW.row(c).dot(b[corner]);
  return e;
}

double AcModel::energy_and_gradient(const Eigen::VectorXd& u,
                                    Eigen::VectorXd& g) const {
  g.setZero(ndof());
  std::vector<double> terms;
  terms.reserve(sdata_.size() + mesh_->tris.size());
  for (size_t k = 0; k < sdata_.size(); ++k)
    terms.push_back(site_term(sdata_[k], u, &g) - site_e0_[k]);
  for (size_t t = 0; t < mesh_->tris.size(); ++t)
    terms.push_back(tri_term(int(t), u, &g));
  return pairwise_sum(terms);
}

double AcModel::energy(const Eigen::VectorXd& u) const {
  std::vector<double> terms;
  terms.reserve(sdata_.size() + mesh_->tris.size());
  for (size_t k = 0; k < sdata_.size(); ++k)
    terms.push_back(site_term(sdata_[k], u, nullptr) - site_e0_[k]);
  for (size_t t = 0; t < mesh_->tris.size(); ++t)
    terms.push_back(tri_term(int(t), u, nullptr));
  return pairwise_sum(terms);
}

std::vector<uint8_t> AcModel::dof_mask() const {
  std::vector<uint8_t> mask(size_t(ndof()), 1);
  for (int i = 0; i < mesh_->nnodes(); ++i)
    if (!mesh_->free_mask[i])
      for (int c = 0; c < m_; ++c) mask[i * m_ + c] = 0;
  return mask;
}

SpMat AcModel::laplacian() const {
  Eigen::Matrix2d F0 = m_ == 2 ? Eigen::Matrix2d::Identity().eval()
                               : Eigen::Matrix2d::Zero().eval();
  double w = homogeneous_bond_stiffness(*pot_, F0);
  std::vector<Eigen::Triplet<double>> trips;
  for (const SiteData& sd : sdata_) {
    for (int b = 0; b < sd.nb; ++b) {
      int j = nbrs_[sd.offset + b];
      for (int c = 0; c < m_; ++c) {
        trips.emplace_back(sd.site * m_ + c, sd.site * m_ + c, w);
        trips.emplace_back(sd.site * m_ + c, j * m_ + c, -w);
        trips.emplace_back(j * m_ + c, j * m_ + c, w);
        trips.emplace_back(j * m_ + c, sd.site * m_ + c, -w);
      }
    }
  }
  double wf = kSqrt3 * w;
  for (const AcTriangle& T : mesh_->tris) {
    auto b = hat_gradients(T.inv_edges);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double v = wf * T.v_eff * b[i].dot(b[j]);
        for (int c = 0; c < m_; ++c)
          trips.emplace_back(T.v[i] * m_ + c, T.v[j] * m_ + c, v);
      }
  }
  SpMat L(ndof(), ndof());
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

double ac_ghost_force(int K, const Eigen::Matrix2d& F,
                      std::shared_ptr<const SitePotential> pot, double beta) {
  Problem prob;
  prob.defect = DefectSpec::none();
  prob.potential = pot;
  prob.predictor = std::make_shared<HomogeneousPredictor>(pot->range_dim(), F);
  auto mesh = std::make_shared<AcMesh>(build_ac_mesh(prob, K, beta));
  AcModel model(mesh, prob);
  Eigen::VectorXd g;
  model.energy_and_gradient(Eigen::VectorXd::Zero(model.ndof()), g);
  auto mask = model.dof_mask();
  double r = 0.0;
  for (int i = 0; i < g.size(); ++i)
    if (mask[i]) r = std::max(r, std::abs(g[i]));
  return r;
}

SchemeResult solve_ac(const Problem& prob, int K, const SchemeOptions& opts) {
  const int m = prob.range_dim();
  double beta = prob.defect.kind == DefectKind::Dislocation ? opts.ac_beta_disl
                                                            : opts.ac_beta_point;
  auto mesh = std::make_shared<AcMesh>(build_ac_mesh(prob, K, beta));
  auto model = std::make_shared<AcModel>(mesh, prob);
  auto mask = model->dof_mask();
  SpMat L = model->laplacian();
  Objective obj = [model](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return model->energy_and_gradient(x, g);
  };
  auto [u, rep] =
      minimize(obj, Eigen::VectorXd::Zero(model->ndof()), mask, &L, opts.minimize);

  SchemeResult res;
  res.kind = SchemeKind::Ac;
  res.K = K;
  res.n_inner = int(mesh->atomistic.size());
  res.report = rep;
  res.scheme_energy = rep.energy;
  auto uptr = std::make_shared<Eigen::VectorXd>(std::move(u));

  auto eval_at = [mesh, uptr, m](const DefectiveLattice& ref) {
    DisplacementField out(m, ref.size());
    for (int i = 0; i < ref.size(); ++i) {
      if (i == ref.interstitial_index) {
        int nid = mesh->lat->interstitial_index;
        if (nid >= 0)
          for (int c = 0; c < m; ++c) out.at(i, c) = (*uptr)[nid * m + c];
        continue;
      }
      int mm = ref.coords[i][0], nn = ref.coords[i][1];
      int hd = hexdist(mm, nn);
      if (hd <= mesh->refined_radius) {
        int nid = mesh->find_node(mm, nn);
        if (nid >= 0)
          for (int c = 0; c < m; ++c) out.at(i, c) = (*uptr)[nid * m + c];
        continue;
      }
      if (hd >= mesh->outer_radius) continue;
      Vec2 p = ref.A.pos(mm, nn);
      for (const AcStrip& strip : mesh->strips) {
        if (hd < strip.r_in || hd > strip.r_out) continue;
        bool found = false;
        for (int t = strip.tri_begin; t < strip.tri_end && !found; ++t) {
          const AcTriangle& T = mesh->tris[t];
          Vec2 d = p - mesh->node_pos[T.v[0]];
          Eigen::Vector2d lm = T.inv_edges * d;
          double l1 = lm[0], l2 = lm[1], l0 = 1.0 - l1 - l2;
          if (l0 < -1e-9 || l1 < -1e-9 || l2 < -1e-9) continue;
          for (int c = 0; c < m; ++c)
            out.at(i, c) = l0 * (*uptr)[T.v[0] * m + c] +
                           l1 * (*uptr)[T.v[1] * m + c] +
                           l2 * (*uptr)[T.v[2] * m + c];
          found = true;
        }
        if (found) break;
      }
    }
    return out;
  };
  res.to_lattice = eval_at;

  auto pot = prob.potential;
  auto pred = prob.predictor;
  auto defect = prob.defect;
  int outer = mesh->outer_radius;
  res.true_energy = [eval_at, pot, pred, defect, outer, m] {
    int S = std::min(outer - 1, 220);
    auto lat = std::make_shared<DefectiveLattice>(build_hexagon(S, defect));
    DisplacementField u = eval_at(*lat);
    Triangulation tri = Triangulation::build(*lat);
    DisplacementField ut = truncate(*lat, u, tri, 0.8 * S * kSqrt3 / 2.0);
    EnergyModel exact(lat, pot, pred);
    return exact.energy(ut.v);
  };
  return res;
}

SchemeResult solve_scheme(SchemeKind kind, const Problem& prob, int K,
                          const SchemeOptions& opts) {
  switch (kind) {
    case SchemeKind::Dir: return solve_dir(prob, K, opts);
    case SchemeKind::Per: return solve_per(prob, K, opts);
    case SchemeKind::Lin: return solve_lin(prob, K, opts);
    case SchemeKind::Ac: return solve_ac(prob, K, opts);
  }
  throw std::logic_error("solve_scheme: unknown scheme");
}

ReferenceSolution solve_reference(const Problem& prob, int K_ref,
                                  const SchemeOptions& opts) {
  SchemeResult dir = solve_dir(prob, K_ref, opts);
  ReferenceSolution ref;
  ref.prob = prob;
  ref.K_ref = K_ref;
  ref.lat = std::make_shared<DefectiveLattice>(build_hexagon(K_ref + 2, prob.defect));
  ref.tri = std::make_shared<Triangulation>(Triangulation::build(*ref.lat));
  ref.u = dir.to_lattice(*ref.lat);
  ref.energy = dir.report.energy;
  ref.report = dir.report;
  return ref;
}

double geometry_error(const ReferenceSolution& ref, const SchemeResult& res) {
  DisplacementField uN = res.to_lattice(*ref.lat);
  DisplacementField d = uN;
  d.v -= ref.u.v;
  auto grads = p1_gradient(*ref.lat, d, *ref.tri);
  double acc = 0.0;
  for (size_t t = 0; t < grads.size(); ++t)
    acc += ref.tri->tris[t].area * grads[t].squaredNorm();
  return std::sqrt(acc);
}

double energy_error(const ReferenceSolution& ref, const SchemeResult& res) {
  return std::abs(res.true_energy() - ref.energy);
}

}  // namespace latticebc
