#pragma once

#include "latticebc/schemes.hpp"

#include <string>
#include <vector>

namespace latticebc {

struct ConvergenceRecord {
  std::string scheme;
  std::string defect;
  int K = 0;
  int N_inner = 0;
  double geom_error = 0.0;
  double energy_error = 0.0;
  int iterations = 0;
  double wall_time = 0.0;
  bool converged = false;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int K_first = 0, K_last = 0;  // fit window
  int npoints = 0;
};

struct StudyConfig {
  std::string defect = "vacancy";  // vacancy | interstitial | screw
  std::vector<std::string> schemes = {"dir"};
  std::vector<int> k_ladder;       // empty = per-defect default ladder
  int k_ref = 0;                   // 0 = default
  Vec2 core_position = Vec2(1.0 / 3.0, 1.0 / (2.0 * 1.7320508075688772));
  Vec2 shear_f = Vec2::Zero();
  double tol = 1e-7;
  long seed = 0;
  double mesh_beta = 0.0;  // 0 = per-defect default
  int lin_outer_cap = 200;
  bool record_timings = true;
  int workers = 0;  // 0 = hardware concurrency

  void apply_defaults();
  Problem make_problem() const;
  SchemeOptions scheme_options() const;

  static StudyConfig parse_file(const std::string& path);
  static StudyConfig parse_string(const std::string& text);
};

// Runs the (scheme x K) grid against a shared reference solution; failed or
// non-converged solves are flagged and the study continues.  When out_csv is
// non-empty the records stream to it in grid order.
std::vector<ConvergenceRecord> run_study(const StudyConfig& cfg,
                                         const std::string& out_csv = "");

// least-squares slope of log(error) vs log(N_inner) over the largest
// contiguous run of converged records; field is "geom" or "energy"
RateFit fit_rate(const std::vector<ConvergenceRecord>& records,
                 const std::string& field);

std::vector<ConvergenceRecord> slice_records(
    const std::vector<ConvergenceRecord>& records, const std::string& scheme);

void emit_plotdata(const std::vector<ConvergenceRecord>& records,
                   const std::string& path);
std::vector<ConvergenceRecord> parse_plotdata(const std::string& path);

}  // namespace latticebc
