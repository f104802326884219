#include "latticebc/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace latticebc {

namespace {
constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kInterTol = 1.0 + 1e-6;  // interstitial bond radius

int64_t key_x(double x) { return llround(2.0 * x); }
int64_t key_row(double y) { return llround(2.0 * y / kSqrt3); }
}  // namespace

const std::array<std::array<int, 2>, 6> kNNDirs = {{
    {{1, 0}}, {{0, 1}}, {{-1, 1}}, {{-1, 0}}, {{0, -1}}, {{1, -1}},
}};

LatticeMatrix LatticeMatrix::triangular() {
  LatticeMatrix L;
  L.a << 1.0, 0.5, 0.0, kSqrt3 / 2.0;
  return L;
}

void DefectiveLattice::build_index() {
  index_.clear();
  for (int i = 0; i < size(); ++i) {
    index_[{key_x(sites[i].x()), key_row(sites[i].y())}] = i;
  }
}

int DefectiveLattice::find_site(const Vec2& x) const {
  auto it = index_.find({key_x(x.x()), key_row(x.y())});
  return it == index_.end() ? -1 : it->second;
}

int DefectiveLattice::find_coord(int m, int n) const {
  if (periodic_cell) {
    int L = *periodic_cell;
    m = ((m % L) + L) % L;
    n = ((n % L) + L) % L;
  }
  return find_site(A.pos(m, n));
}

int DefectiveLattice::hexdist_of(int site) const {
  if (site == interstitial_index) return 1;
  return hexdist(coords[site][0], coords[site][1]);
}

bool DefectiveLattice::has_complete_stencil(int site) const {
  for (const Bond& b : stencils[site])
    if (b.nbr < 0) return false;
  return true;
}

void DefectiveLattice::build_stencils() {
  stencils.assign(size(), {});
  const bool has_inter = interstitial_index >= 0;
  const Vec2 xi = has_inter ? sites[interstitial_index] : Vec2::Zero();

  for (int i = 0; i < size(); ++i) {
    if (i == interstitial_index) {
      // bonds to every site within the interstitial bond radius
      for (int j = 0; j < size(); ++j) {
        if (j == i) continue;
        Vec2 rho = sites[j] - xi;
        if (rho.norm() <= kInterTol) stencils[i].push_back({j, rho});
      }
      continue;
    }
    int m = coords[i][0], n = coords[i][1];
    for (const auto& d : kNNDirs) {
      int tm = m + d[0], tn = n + d[1];
      Vec2 rho = A.pos(d[0], d[1]);
      if (defect.kind == DefectKind::Vacancy && vacancy_hit(tm, tn)) {
        continue;  // bond into the missing atom is dropped
      }
      int j = find_coord(tm, tn);
      stencils[i].push_back({j, rho});
    }
    if (has_inter) {
      Vec2 rho = xi - sites[i];
      if (rho.norm() <= kInterTol) stencils[i].push_back({interstitial_index, rho});
    }
  }
}

bool DefectiveLattice::vacancy_hit(int m, int n) const {
  if (periodic_cell) {
    int L = *periodic_cell;
    m = ((m % L) + L) % L;
    n = ((n % L) + L) % L;
    return m == vac_m_ && n == vac_n_;
  }
  return m == 0 && n == 0;
}

DefectiveLattice build_hexagon(int K, const DefectSpec& defect) {
  if (K < 1) throw std::invalid_argument("build_hexagon: K must be >= 1");
  DefectiveLattice lat;
  lat.A = LatticeMatrix::triangular();
  lat.defect = defect;

  if (defect.kind == DefectKind::Dislocation) {
    // the branch cut {core + (t,0), t > 0} is horizontal, so it misses every
    // site iff the core does not sit on a lattice row
    double row = 2.0 * defect.core.y() / kSqrt3;
    if (std::abs(row - std::round(row)) < 1e-9)
      throw std::invalid_argument(
          "build_hexagon: dislocation branch cut passes through lattice sites");
    lat.core_radius = 0.0;
  } else if (defect.kind != DefectKind::None) {
    lat.core_radius = 1.5;
  }

  for (int n = -K; n <= K; ++n) {
    int mlo = std::max(-K, -K - n), mhi = std::min(K, K - n);
    for (int m = mlo; m <= mhi; ++m) {
      if (defect.kind == DefectKind::Vacancy && m == 0 && n == 0) continue;
      if (defect.kind == DefectKind::Interstitial && m == 1 && n == 0 &&
          lat.interstitial_index < 0) {
        // insert at (1/2, 0), keeping row-major x-sorted order
        lat.interstitial_index = lat.size();
        lat.sites.push_back(Vec2(0.5, 0.0));
        lat.coords.push_back({INT32_MIN, 0});
      }
      lat.sites.push_back(lat.A.pos(m, n));
      lat.coords.push_back({m, n});
    }
  }
  lat.build_index();
  lat.build_stencils();
  return lat;
}

DefectiveLattice build_periodic_cell(int L, const DefectSpec& defect) {
  if (L < 4) throw std::invalid_argument("build_periodic_cell: L must be >= 4");
  if (defect.kind == DefectKind::Dislocation)
    throw std::invalid_argument(
        "build_periodic_cell: periodic cells support point defects only");
  DefectiveLattice lat;
  lat.A = LatticeMatrix::triangular();
  lat.defect = defect;
  lat.periodic_cell = L;
  lat.core_radius = defect.kind == DefectKind::None ? 0.0 : 1.5;
  int mc = L / 2, nc = L / 2;
  lat.vac_m_ = mc;
  lat.vac_n_ = nc;

  for (int n = 0; n < L; ++n) {
    for (int m = 0; m < L; ++m) {
      if (defect.kind == DefectKind::Vacancy && m == mc && n == nc) continue;
      if (defect.kind == DefectKind::Interstitial && m == mc + 1 && n == nc &&
          lat.interstitial_index < 0) {
        lat.interstitial_index = lat.size();
        lat.sites.push_back(lat.A.pos(mc, nc) + Vec2(0.5, 0.0));
        lat.coords.push_back({INT32_MIN, 0});
      }
      lat.sites.push_back(lat.A.pos(m, n));
      lat.coords.push_back({m, n});
    }
  }
  lat.build_index();

  // minimum-image stencils: bond vectors are the reference NN vectors, the
  // neighbour index wraps around the cell
  lat.stencils.assign(lat.size(), {});
  const bool has_inter = lat.interstitial_index >= 0;
  for (int i = 0; i < lat.size(); ++i) {
    if (i == lat.interstitial_index) {
      std::array<std::array<int, 2>, 4> hosts = {
          {{{mc, nc}}, {{mc + 1, nc}}, {{mc, nc + 1}}, {{mc + 1, nc - 1}}}};
      std::array<Vec2, 4> rhos = {Vec2(-0.5, 0.0), Vec2(0.5, 0.0),
                                  Vec2(0.0, kSqrt3 / 2.0),
                                  Vec2(0.0, -kSqrt3 / 2.0)};
      for (int t = 0; t < 4; ++t) {
        int j = lat.find_coord(hosts[t][0], hosts[t][1]);
        if (j >= 0) lat.stencils[i].push_back({j, rhos[t]});
      }
      continue;
    }
    int m = lat.coords[i][0], n = lat.coords[i][1];
    for (const auto& d : kNNDirs) {
      if (defect.kind == DefectKind::Vacancy && lat.vacancy_hit(m + d[0], n + d[1]))
        continue;
      int j = lat.find_coord(m + d[0], n + d[1]);
      lat.stencils[i].push_back({j, lat.A.pos(d[0], d[1])});
    }
    if (has_inter) {
      Vec2 rho = lat.sites[lat.interstitial_index] - lat.sites[i];
      if (rho.norm() <= kInterTol)
        lat.stencils[i].push_back({lat.interstitial_index, rho});
    }
  }
  return lat;
}

const std::vector<Bond>& nn_stencil(const DefectiveLattice& lat, int site) {
  return lat.stencil(site);
}

void DefectiveLattice::dump_csv(const std::string& path) const {
  FILE* f = fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("dump_csv: cannot open " + path);
  fprintf(f, "index,x,y,n_bonds\n");
  for (int i = 0; i < size(); ++i) {
    fprintf(f, "%d,%.17g,%.17g,%zu\n", i, sites[i].x(), sites[i].y(),
            stencils[i].size());
  }
  fclose(f);
}

namespace {

Triangle make_triangle(const DefectiveLattice& lat, int i0, int i1, int i2) {
  Triangle t;
  t.v = {i0, i1, i2};
  Eigen::Matrix2d E;
  E.col(0) = lat.sites[i1] - lat.sites[i0];
  E.col(1) = lat.sites[i2] - lat.sites[i0];
  t.area = 0.5 * E.determinant();
  if (t.area <= 1e-12)
    throw std::runtime_error("Triangulation: degenerate triangle");
  t.inv_edges = E.inverse();
  return t;
}

}  // namespace

Triangulation Triangulation::build(const DefectiveLattice& lat) {
  if (lat.periodic_cell)
    throw std::invalid_argument("Triangulation: periodic cells unsupported");
  Triangulation T;
  const bool inter = lat.defect.kind == DefectKind::Interstitial;

  auto host_edge = [&](int a, int b, int c) {
    // true when the triangle contains the interstitial host edge (0,0)-(1,0)
    auto is = [&](int s, int m, int n) {
      return lat.coords[s][0] == m && lat.coords[s][1] == n;
    };
    int zero = -1, one = -1;
    for (int s : {a, b, c}) {
      if (is(s, 0, 0)) zero = s;
      if (is(s, 1, 0)) one = s;
    }
    return zero >= 0 && one >= 0;
  };

  for (int i = 0; i < lat.size(); ++i) {
    if (i == lat.interstitial_index) continue;
    int m = lat.coords[i][0], n = lat.coords[i][1];
    int up1 = lat.find_coord(m + 1, n), up2 = lat.find_coord(m, n + 1);
    if (up1 >= 0 && up2 >= 0 && !(inter && host_edge(i, up1, up2)))
      T.tris.push_back(make_triangle(lat, i, up1, up2));
    int dn2 = lat.find_coord(m + 1, n + 1);
    if (up1 >= 0 && up2 >= 0 && dn2 >= 0 && !(inter && host_edge(up1, dn2, up2)))
      T.tris.push_back(make_triangle(lat, up1, dn2, up2));
  }

  if (lat.defect.kind == DefectKind::Vacancy) {
    // fan the hexagonal hole left by the missing atom
    std::array<int, 6> ring;
    for (int j = 0; j < 6; ++j) {
      ring[j] = lat.find_coord(kNNDirs[j][0], kNNDirs[j][1]);
      if (ring[j] < 0) throw std::runtime_error("Triangulation: vacancy ring incomplete");
    }
    for (int j = 1; j < 5; ++j)
      T.tris.push_back(make_triangle(lat, ring[0], ring[j], ring[j + 1]));
  } else if (inter) {
    int I = lat.interstitial_index;
    int s00 = lat.find_coord(0, 0), s10 = lat.find_coord(1, 0);
    int s01 = lat.find_coord(0, 1), s1m1 = lat.find_coord(1, -1);
    if (s00 < 0 || s10 < 0 || s01 < 0 || s1m1 < 0)
      throw std::runtime_error("Triangulation: interstitial host cell incomplete");
    T.tris.push_back(make_triangle(lat, s00, I, s01));
    T.tris.push_back(make_triangle(lat, I, s10, s01));
    T.tris.push_back(make_triangle(lat, s00, s1m1, I));
    T.tris.push_back(make_triangle(lat, I, s1m1, s10));
  }
  return T;
}

std::vector<Eigen::Matrix2d> p1_gradient(const DefectiveLattice& lat,
                                         const DisplacementField& u,
                                         const Triangulation& tri) {
  (void)lat;
  std::vector<Eigen::Matrix2d> grads(tri.tris.size());
  for (size_t t = 0; t < tri.tris.size(); ++t) {
    const Triangle& T = tri.tris[t];
    Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
    for (int c = 0; c < u.m; ++c) {
      D(c, 0) = u.at(T.v[1], c) - u.at(T.v[0], c);
      D(c, 1) = u.at(T.v[2], c) - u.at(T.v[0], c);
    }
    grads[t] = D * T.inv_edges;
  }
  return grads;
}

double cutoff_eta(double t) {
  if (t <= 0.75) return 1.0;
  if (t >= 1.0) return 0.0;
  double s = (t - 0.75) / 0.25;
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

DisplacementField truncate(const DefectiveLattice& lat,
                           const DisplacementField& u,
                           const Triangulation& tri, double R) {
  if (R < 4.0) throw std::invalid_argument("truncate: R must be >= 4*rho_cut");
  // annulus mean of the interpolant; centroid rule is exact for P1
  Eigen::VectorXd aR = Eigen::VectorXd::Zero(u.m);
  double vol = 0.0;
  for (const Triangle& T : tri.tris) {
    bool in = true;
    for (int s : T.v) {
      double r = lat.sites[s].norm();
      in = in && (r >= 0.75 * R - 1e-12) && (r <= R + 1e-12);
    }
    if (!in) continue;
    vol += T.area;
    for (int c = 0; c < u.m; ++c)
      aR[c] += T.area * (u.at(T.v[0], c) + u.at(T.v[1], c) + u.at(T.v[2], c)) / 3.0;
  }
  if (vol <= 0.0)
    throw std::invalid_argument("truncate: annulus contains no triangle");
  aR /= vol;

  DisplacementField w(u.m, u.nsites());
  for (int i = 0; i < u.nsites(); ++i) {
    double eta = cutoff_eta(lat.sites[i].norm() / R);
    if (eta == 0.0) continue;
    for (int c = 0; c < u.m; ++c) w.at(i, c) = eta * (u.at(i, c) - aR[c]);
  }
  return w;
}

}  // namespace latticebc
