#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace latticebc {

using Vec2 = Eigen::Vector2d;

// Generators of the 2D triangular lattice, a1 = (1,0), a2 = (cos60, sin60).
struct LatticeMatrix {
  Eigen::Matrix2d a;

  static LatticeMatrix triangular();
  double det() const { return a.determinant(); }
  Vec2 pos(int m, int n) const { return a * Vec2(double(m), double(n)); }
};

// Hexagonal (graph) distance in lattice coordinates.
inline int hexdist(int m, int n) {
  return std::max({std::abs(m), std::abs(n), std::abs(m + n)});
}

// The six nearest-neighbour directions in lattice coordinates, in cyclic
// order: a1, a2, a2-a1, -a1, -a2, a1-a2.
extern const std::array<std::array<int, 2>, 6> kNNDirs;

enum class DefectKind { None, Vacancy, Interstitial, Dislocation };

struct DefectSpec {
  DefectKind kind = DefectKind::None;
  Vec2 core = Vec2::Zero();  // dislocation core position

  static DefectSpec none() { return {}; }
  static DefectSpec vacancy() { return {DefectKind::Vacancy, Vec2::Zero()}; }
  static DefectSpec interstitial() {
    return {DefectKind::Interstitial, Vec2::Zero()};
  }
  static DefectSpec dislocation(const Vec2& core) {
    return {DefectKind::Dislocation, core};
  }
};

struct Bond {
  int nbr;   // site index of l+rho, or -1 if the endpoint is outside the patch
  Vec2 rho;  // reference bond vector
};

// Reference configuration: a finite patch of the triangular lattice with an
// optional defect, per-site stencils and a site lookup table.  Outside the
// defect core the site set is exactly A Z^2 intersected with the domain.
class DefectiveLattice {
 public:
  LatticeMatrix A;
  DefectSpec defect;
  double core_radius = 0.0;  // R_def

  std::vector<Vec2> sites;
  std::vector<std::array<int, 2>> coords;  // lattice coords; {INT32_MIN,0} for
                                           // the interstitial site
  std::vector<std::vector<Bond>> stencils;

  int interstitial_index = -1;
  std::optional<int> periodic_cell;  // side L of the periodic cell, if any

  int size() const { return int(sites.size()); }
  const std::vector<Bond>& stencil(int site) const { return stencils[site]; }

  // Index lookup from a lattice position (half-integer x, multiples of
  // sqrt(3)/2 in y); returns -1 when absent.
  int find_site(const Vec2& x) const;
  int find_coord(int m, int n) const;

  // max(|m|,|n|,|m+n|) for lattice sites; interstitial uses its host edge.
  int hexdist_of(int site) const;

  bool has_complete_stencil(int site) const;

  void dump_csv(const std::string& path) const;

 private:
  std::map<std::pair<int64_t, int64_t>, int> index_;
  int vac_m_ = 0, vac_n_ = 0;  // vacancy position in lattice coordinates
  friend DefectiveLattice build_hexagon(int K, const DefectSpec& defect);
  friend DefectiveLattice build_periodic_cell(int L, const DefectSpec& defect);
  void build_index();
  void build_stencils();
  bool vacancy_hit(int m, int n) const;
};

// Hexagonal patch {max(|m|,|n|,|m+n|) <= K} with the defect applied.  Site
// ordering is lexicographic by (row, x) so dumps are deterministic.
DefectiveLattice build_hexagon(int K, const DefectSpec& defect);

// Parallelogram periodic cell spanned by L a1, L a2 with minimum-image
// stencils; the defect sits at the cell centre.  Dislocations are rejected.
DefectiveLattice build_periodic_cell(int L, const DefectSpec& defect);

// Convenience wrapper matching the per-site stencil rule.
const std::vector<Bond>& nn_stencil(const DefectiveLattice& lat, int site);

struct Triangle {
  std::array<int, 3> v;
  double area;
  Eigen::Matrix2d inv_edges;  // maps nodal differences to the P1 gradient
};

// Background triangulation T_Lambda: canonical triangular-lattice triangles
// away from the defect, with a deterministic local retriangulation at the
// core (vacancy hole fanned, interstitial edge split).
class Triangulation {
 public:
  std::vector<Triangle> tris;

  static Triangulation build(const DefectiveLattice& lat);

  int size() const { return int(tris.size()); }
};

struct DisplacementField {
  int m = 1;          // range dimension
  Eigen::VectorXd v;  // site-major layout, size = m * nsites

  DisplacementField() = default;
  DisplacementField(int m_, int nsites) : m(m_), v(Eigen::VectorXd::Zero(m_ * nsites)) {}

  double& at(int site, int comp) { return v[site * m + comp]; }
  double at(int site, int comp) const { return v[site * m + comp]; }
  int nsites() const { return m == 0 ? 0 : int(v.size()) / m; }
};

// Exact gradient of the P1 interpolant on each triangle; row i of the result
// is the gradient of component i (rows beyond m are zero).
std::vector<Eigen::Matrix2d> p1_gradient(const DefectiveLattice& lat,
                                         const DisplacementField& u,
                                         const Triangulation& tri);

// Truncation operator Pi_R: u -> eta(x/R) (u - a_R), where a_R is the mean of
// the interpolant over the annulus B_R \ B_{3R/4} and eta is a C^1 cutoff
// with eta=1 on B_{3/4}, eta=0 outside B_1.
DisplacementField truncate(const DefectiveLattice& lat,
                           const DisplacementField& u,
                           const Triangulation& tri, double R);

double cutoff_eta(double t);  // the radial profile used by truncate

}  // namespace latticebc
