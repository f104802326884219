#include "latticebc/predictors.hpp"

#include <cmath>
#include <stdexcept>

namespace latticebc {

double ScrewPredictor::u0(const Vec2& x) const {
  Vec2 d = x - core_;
  if (d.norm() < 1e-12)
    throw std::invalid_argument("screw_u0: evaluation at the dislocation core");
  double th = std::atan2(d.y(), d.x());
  if (th <= 0.0) th += 2.0 * M_PI;
  return shear_.dot(d) + th / (2.0 * M_PI);
}

int ScrewPredictor::crossing(const Vec2& x, const Vec2& rho) const {
  double y1 = x.y() - core_.y();
  double y2 = y1 + rho.y();
  if (y1 == 0.0 || y2 == 0.0)
    throw std::invalid_argument("crossing: bond endpoint on the branch cut");
  if ((y1 < 0.0) == (y2 < 0.0)) return 0;
  // x-coordinate where the segment meets the cut line
  double t = y1 / (y1 - y2);
  double xc = (x.x() - core_.x()) + t * rho.x();
  if (xc <= 0.0) return 0;
  return y1 < 0.0 ? 1 : -1;
}

double screw_u0(const ScrewPredictor& pred, const Vec2& x) { return pred.u0(x); }

BondDiff elastic_bond_diff(const DefectiveLattice& lat,
                           const ScrewPredictor& pred, int site, const Vec2& rho,
                           const DisplacementField& z) {
  const Vec2& x = lat.sites[site];
  double raw = pred.u0(x + rho) - pred.u0(x);
  if (z.m != 1)
    throw std::invalid_argument("elastic_bond_diff: anti-plane fields only");
  int j = lat.find_site(x + rho);
  double dz = (j >= 0 && z.nsites() == lat.size())
                  ? z.at(j, 0) - z.at(site, 0)
                  : 0.0;
  raw += dz;
  return {raw, raw + double(pred.crossing(x, rho))};
}

}  // namespace latticebc
