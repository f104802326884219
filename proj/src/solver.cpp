#include "latticebc/solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <chrono>
#include <cmath>
#include <deque>

namespace latticebc {

namespace {

struct MaskedPrecond {
  // identity when no Laplacian is supplied
  bool active = false;
  std::vector<int> full_of_red;          // reduced index -> full index
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;

  void init(const Eigen::SparseMatrix<double>* L,
            const std::vector<uint8_t>& mask, int n) {
    if (!L) return;
    std::vector<int> red(n, -1);
    for (int i = 0; i < n; ++i) {
      if (mask.empty() || mask[i]) {
        red[i] = int(full_of_red.size());
        full_of_red.push_back(i);
      }
    }
    std::vector<Eigen::Triplet<double>> trips;
    double diag_scale = 0.0;
    for (int k = 0; k < L->outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(*L, k); it; ++it) {
        if (it.row() == it.col()) diag_scale += std::abs(it.value());
        if (red[it.row()] >= 0 && red[it.col()] >= 0)
          trips.emplace_back(red[it.row()], red[it.col()], it.value());
      }
    diag_scale /= std::max(1, n);
    bool all_free = int(full_of_red.size()) == n;
    if (all_free) {
      // translation-invariant problems leave the Laplacian singular
      double eps = 1e-8 * std::max(diag_scale, 1.0);
      for (int i = 0; i < n; ++i) trips.emplace_back(i, i, eps);
    }
    Eigen::SparseMatrix<double> Lr(int(full_of_red.size()), int(full_of_red.size()));
    Lr.setFromTriplets(trips.begin(), trips.end());
    chol.compute(Lr);
    active = chol.info() == Eigen::Success;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& g) const {
    if (!active) return g;
    Eigen::VectorXd gr(full_of_red.size());
    for (size_t i = 0; i < full_of_red.size(); ++i) gr[i] = g[full_of_red[i]];
    Eigen::VectorXd xr = chol.solve(gr);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(g.size());
    for (size_t i = 0; i < full_of_red.size(); ++i) x[full_of_red[i]] = xr[i];
    return x;
  }
};

double masked_inf_norm(const Eigen::VectorXd& g, const std::vector<uint8_t>& mask) {
  if (mask.empty()) return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  double r = 0.0;
  for (int i = 0; i < g.size(); ++i)
    if (mask[i]) r = std::max(r, std::abs(g[i]));
  return r;
}

void mask_vector(Eigen::VectorXd& v, const std::vector<uint8_t>& mask) {
  if (mask.empty()) return;
  for (int i = 0; i < v.size(); ++i)
    if (!mask[i]) v[i] = 0.0;
}

// strong-Wolfe line search (bracket + zoom with cubic interpolation)
bool wolfe_search(const Objective& obj, const Eigen::VectorXd& x0, double f0,
                  const Eigen::VectorXd& g0, const Eigen::VectorXd& p,
                  const std::vector<uint8_t>& mask, double c1, double c2,
                  double& alpha, Eigen::VectorXd& x, double& f,
                  Eigen::VectorXd& g, int& nevals) {
  const double d0 = g0.dot(p);
  if (d0 >= 0.0) return false;

  auto eval = [&](double a, double& fa, double& da) {
    x = x0 + a * p;
    fa = obj(x, g);
    mask_vector(g, mask);
    da = g.dot(p);
    ++nevals;
  };

  auto zoom = [&](double lo, double flo, double dlo, double hi, double fhi) {
    for (int it = 0; it < 30; ++it) {
      // cubic-ish: secant on the derivative, guarded bisection
      double a = 0.5 * (lo + hi);
      if (std::abs(dlo) > 1e-300) {
        double cand = lo - dlo * (hi - lo) * (hi - lo) /
                      (2.0 * (fhi - flo - dlo * (hi - lo)));
        double lo2 = std::min(lo, hi), hi2 = std::max(lo, hi);
        if (std::isfinite(cand) && cand > lo2 + 0.1 * (hi2 - lo2) &&
            cand < hi2 - 0.1 * (hi2 - lo2))
          a = cand;
      }
      double fa, da;
      eval(a, fa, da);
      if (fa > f0 + c1 * a * d0 || fa >= flo) {
        hi = a;
        fhi = fa;
      } else {
        if (std::abs(da) <= -c2 * d0) {
          alpha = a;
          f = fa;
          return true;
        }
        if (da * (hi - lo) >= 0.0) {
          hi = lo;
          fhi = flo;
        }
        lo = a;
        flo = fa;
        dlo = da;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    // accept the best sufficient-decrease point found
    double fa, da;
    eval(lo, fa, da);
    if (fa <= f0 + c1 * lo * d0 && lo > 0.0) {
      alpha = lo;
      f = fa;
      return true;
    }
    return false;
  };

  double aprev = 0.0, fprev = f0, dprev = d0;
  double a = std::min(1.0, alpha);
  for (int it = 0; it < 20; ++it) {
    double fa, da;
    eval(a, fa, da);
    if (fa > f0 + c1 * a * d0 || (it > 0 && fa >= fprev))
      return zoom(aprev, fprev, dprev, a, fa);
    if (std::abs(da) <= -c2 * d0) {
      alpha = a;
      f = fa;
      return true;
    }
    if (da >= 0.0) return zoom(a, fa, da, aprev, fprev);
    aprev = a;
    fprev = fa;
    dprev = da;
    a *= 2.5;
  }
  return false;
}

}  // namespace

std::pair<Eigen::VectorXd, SolveReport> minimize(
    const Objective& obj, const Eigen::VectorXd& u0,
    const std::vector<uint8_t>& free_mask,
    const Eigen::SparseMatrix<double>* laplacian, const MinimizeOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  SolveReport rep;

  MaskedPrecond P;
  if (opts.precondition) P.init(laplacian, free_mask, int(u0.size()));

  Eigen::VectorXd x = u0, g(u0.size());
  double f = obj(x, g);
  mask_vector(g, free_mask);
  double res = masked_inf_norm(g, free_mask);

  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> RhoInv;

  Eigen::VectorXd xn, gn;
  int it = 0;
  int nevals = 1;
  while (res > opts.tol && it < opts.max_iter) {
    // two-loop recursion with P^{-1} as the initial matrix
    Eigen::VectorXd q = g;
    std::vector<double> alphas(S.size());
    for (int i = int(S.size()) - 1; i >= 0; --i) {
      alphas[i] = S[i].dot(q) / RhoInv[i];
      q -= alphas[i] * Y[i];
    }
    Eigen::VectorXd r = P.apply(q);
    if (!S.empty()) {
      double gamma = RhoInv.back() / Y.back().dot(P.apply(Y.back()));
      r *= gamma;
    }
    for (size_t i = 0; i < S.size(); ++i) {
      double beta = Y[i].dot(r) / RhoInv[i];
      r += (alphas[i] - beta) * S[i];
    }
    Eigen::VectorXd p = -r;
    mask_vector(p, free_mask);
    if (p.dot(g) >= 0.0) {
      p = -P.apply(g);  // reset on a non-descent direction
      mask_vector(p, free_mask);
      S.clear();
      Y.clear();
      RhoInv.clear();
    }

    double alpha = 1.0, fn;
    if (!wolfe_search(obj, x, f, g, p, free_mask, opts.wolfe_c1, opts.wolfe_c2,
                      alpha, xn, fn, gn, nevals)) {
      rep.message = "line search failed";
      break;
    }

    Eigen::VectorXd s = xn - x, y = gn - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      S.push_back(s);
      Y.push_back(y);
      RhoInv.push_back(sy);
      if (int(S.size()) > opts.memory) {
        S.pop_front();
        Y.pop_front();
        RhoInv.pop_front();
      }
    }
    x.swap(xn);
    g.swap(gn);
    f = fn;
    res = masked_inf_norm(g, free_mask);
    ++it;
  }

  rep.iterations = it;
  rep.final_residual_inf = res;
  rep.converged = res <= opts.tol;
  rep.energy = f;
  if (it >= opts.max_iter && !rep.converged) rep.message = "max_iter exceeded";
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {x, rep};
}

Eigen::SparseMatrix<double> restrict_to_mask(
    const Eigen::SparseMatrix<double>& A, const std::vector<uint8_t>& mask) {
  std::vector<int> red(A.rows(), -1);
  int nr = 0;
  for (int i = 0; i < A.rows(); ++i)
    if (mask.empty() || mask[i]) red[i] = nr++;
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      if (red[it.row()] >= 0 && red[it.col()] >= 0)
        trips.emplace_back(red[it.row()], red[it.col()], it.value());
  Eigen::SparseMatrix<double> R(nr, nr);
  R.setFromTriplets(trips.begin(), trips.end());
  return R;
}

double lowest_eigenvalue(const Eigen::SparseMatrix<double>& H, bool* converged) {
  const int n = int(H.rows());
  if (converged) *converged = true;
  if (n <= 2000) {
    Eigen::MatrixXd D(H);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(D, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

  // shift below the spectrum via a Gershgorin bound, then inverse iteration
  double lo = 0.0;
  {
    Eigen::VectorXd diag = H.diagonal();
    Eigen::VectorXd rowabs = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < H.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(H, k); it; ++it)
        if (it.row() != it.col()) rowabs[it.row()] += std::abs(it.value());
    lo = (diag - rowabs).minCoeff() - 1.0;
  }
  Eigen::SparseMatrix<double> Hs = H;
  for (int i = 0; i < n; ++i) Hs.coeffRef(i, i) -= lo;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(Hs);
  if (chol.info() != Eigen::Success) {
    if (converged) *converged = false;
    return lo;
  }
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) v[i] += 1e-3 * std::sin(double(i));
  v.normalize();
  double lam = 0.0, lam_prev = 1e300;
  for (int it = 0; it < 500; ++it) {
    v = chol.solve(v);
    v.normalize();
    lam = v.dot(H * v);
    if (std::abs(lam - lam_prev) <= 1e-5 * (std::abs(lam) + 1e-12)) return lam;
    lam_prev = lam;
  }
  if (converged) *converged = false;
  return lam;
}

}  // namespace latticebc
