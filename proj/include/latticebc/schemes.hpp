#pragma once

#include "latticebc/energy.hpp"
#include "latticebc/solver.hpp"

#include <functional>
#include <memory>

namespace latticebc {

enum class SchemeKind { Dir, Per, Lin, Ac };

const char* scheme_name(SchemeKind k);

// A defect problem: the lattice modification plus the matching potential and
// far-field predictor.
struct Problem {
  DefectSpec defect;
  std::shared_ptr<const SitePotential> potential;
  std::shared_ptr<const Predictor> predictor;

  int range_dim() const { return potential->range_dim(); }

  static Problem vacancy(const EamParams& p = {});
  static Problem interstitial(const EamParams& p = {});
  static Problem none(const EamParams& p = {});  // homogeneous reference
  static Problem screw(const Vec2& core, const Vec2& shear);
};

// One scheme solve.  The solution can be transported onto any other lattice
// (zero-extended, or truncation-extended for the periodic scheme) for error
// measurement, and its energy re-measured in the exact functional.
struct SchemeResult {
  SchemeKind kind;
  int K = 0;
  int n_inner = 0;
  SolveReport report;
  double scheme_energy = 0.0;  // value of the scheme's own functional

  std::function<DisplacementField(const DefectiveLattice&)> to_lattice;
  std::function<double()> true_energy;
};

struct SchemeOptions {
  MinimizeOptions minimize;
  int lin_outer_cap = 200;    // LIN outer hexagon side = min(K^3, max(cap, 6K))
  double ac_beta_point = 1.5;  // mesh grading exponents
  double ac_beta_disl = 1.0;
};

SchemeResult solve_dir(const Problem& prob, int K, const SchemeOptions& opts = {});
SchemeResult solve_per(const Problem& prob, int K, const SchemeOptions& opts = {});
SchemeResult solve_lin(const Problem& prob, int K, const SchemeOptions& opts = {});
SchemeResult solve_ac(const Problem& prob, int K, const SchemeOptions& opts = {});
SchemeResult solve_scheme(SchemeKind kind, const Problem& prob, int K,
                          const SchemeOptions& opts = {});

// ---- a/c machinery ----

struct AcTriangle {
  std::array<int, 3> v;  // node ids
  double area = 0.0;
  double v_eff = 0.0;
  Eigen::Matrix2d inv_edges;
};

struct AcStrip {
  int r_in = 0, r_out = 0;
  int tri_begin = 0, tri_end = 0;
};

// Graded hexagonal a/c mesh: atomistic core of side K, one interface ring,
// fully refined elements through the Voronoi halo, then hexagonal coarsening
// layers with h(x) ~ (|x|/K)^beta out to side ~K^2.  Interface potentials
// are stencil reconstructions V_l^i(g) = V(C_l g); the coefficients are
// solved per mesh so the coupling passes the force-consistency patch test.
struct AcMesh {
  int K = 0;
  double beta = 1.0;
  int refined_radius = 0;  // rings up to here are unit lattice triangles
  int outer_radius = 0;

  std::shared_ptr<const DefectiveLattice> lat;  // sites of the refined zone
  std::vector<Vec2> node_pos;                   // all mesh nodes
  std::vector<std::array<int, 2>> node_coord;
  std::vector<uint8_t> free_mask;  // per node (outer ring frozen)

  std::vector<int> atomistic;                    // site == node ids, hexdist <= K
  std::vector<int> interface;                    // hexdist == K+1
  std::vector<Eigen::Matrix<double, 6, 6>> recon;  // per interface site
  double recon_residual = 0.0;

  std::vector<AcTriangle> tris;  // continuum triangles only (v_eff > 0)
  std::vector<AcStrip> strips;   // coarse strips, for point location

  int find_node(int m, int n) const;
  int nnodes() const { return int(node_pos.size()); }

 private:
  friend AcMesh build_ac_mesh(const Problem& prob, int K, double beta);
  std::map<std::pair<int, int>, int> node_index_;
};

AcMesh build_ac_mesh(const Problem& prob, int K, double beta);

// The a/c energy functional over P1 fields on the mesh.
class AcModel {
 public:
  AcModel(std::shared_ptr<const AcMesh> mesh, const Problem& prob);

  int ndof() const { return m_ * mesh_->nnodes(); }
  int range_dim() const { return m_; }
  const AcMesh& mesh() const { return *mesh_; }

  double energy_and_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& g) const;
  double energy(const Eigen::VectorXd& u) const;

  std::vector<uint8_t> dof_mask() const;
  SpMat laplacian() const;

 private:
  std::shared_ptr<const AcMesh> mesh_;
  std::shared_ptr<const SitePotential> pot_;
  int m_;
  double cb_scale_;  // converts det(A) V(F.R) to energy per unit area

  // atomistic + interface site data
  struct SiteData {
    int site;
    bool iface;
    int nb;
    int offset;  // into nbrs_/base_
    const Eigen::Matrix<double, 6, 6>* C;
  };
  std::vector<SiteData> sdata_;
  std::vector<int> nbrs_;
  std::vector<double> base_;
  std::vector<double> site_e0_;

  // continuum data
  std::vector<Eigen::Matrix2d> base_grad_;  // slip-aware nodal y0 gradient
  std::vector<double> tri_e0_;
  CauchyBorn cb_;

  double site_term(const SiteData& sd, const Eigen::VectorXd& u,
                   Eigen::VectorXd* g) const;
  double tri_term(int t, const Eigen::VectorXd& u, Eigen::VectorXd* g) const;
};

// sup-norm of delta E^ac(0) on free dofs for the homogeneous problem; the
// force-consistency gate
double ac_ghost_force(int K, const Eigen::Matrix2d& F,
                      std::shared_ptr<const SitePotential> pot, double beta = 1.5);

// ---- reference solutions and error metrics ----

struct ReferenceSolution {
  Problem prob;
  int K_ref = 0;
  std::shared_ptr<const DefectiveLattice> lat;
  std::shared_ptr<const Triangulation> tri;
  DisplacementField u;
  double energy = 0.0;  // exact functional at the reference minimiser
  SolveReport report;
};

ReferenceSolution solve_reference(const Problem& prob, int K_ref,
                                  const SchemeOptions& opts = {});

// || grad I(u_N - u_ref) ||_L2 over the reference triangulation
double geometry_error(const ReferenceSolution& ref, const SchemeResult& res);

// | E-metric difference |, scheme-specific energy reference
double energy_error(const ReferenceSolution& ref, const SchemeResult& res);

// graph Laplacian helper shared by the scheme models
SpMat graph_laplacian(const DefectiveLattice& lat, int m, double w);
double homogeneous_bond_stiffness(const SitePotential& pot,
                                  const Eigen::Matrix2d& F0);

}  // namespace latticebc
