#include "vlf/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vlf/errors.hpp"

namespace vlf {

CapacityResult capacity(const Dmc& dmc, double tol, std::size_t max_iter,
                        std::vector<double>* lb_trace) {
  if (!(tol > 0.0) || !std::isfinite(tol)) throw ConfigError("capacity: tol must be positive");
  if (max_iter == 0) throw ConfigError("capacity: max_iter must be positive");

  const std::size_t nx = dmc.nx, ny = dmc.ny;
  std::vector<double> r(nx, 1.0 / static_cast<double>(nx));
  std::vector<double> q(ny, 0.0), dx(nx, 0.0);

  CapacityResult res;
  res.px = r;
  if (lb_trace) lb_trace->clear();

  for (std::size_t it = 1; it <= max_iter; ++it) {
    // Output marginal under r.
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      if (r[x] == 0.0) continue;
      for (std::size_t y = 0; y < ny; ++y) q[y] += r[x] * dmc.at(x, y);
    }
    // Per-input divergences D(P(.|x) || q). q[y] = 0 implies every charged
    // row has p(y|x) = 0 as well, so the term is skipped.
    double lb = 0.0, ub = -std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < nx; ++x) {
      double d = 0.0;
      for (std::size_t y = 0; y < ny; ++y) {
        double pxy = dmc.at(x, y);
        if (pxy > 0.0 && q[y] > 0.0) d += pxy * std::log(pxy / q[y]);
      }
      dx[x] = d;
      lb += r[x] * d;
      ub = std::max(ub, d);
    }
    lb = std::max(lb, 0.0);
    if (lb_trace) lb_trace->push_back(lb);

    res.C = lb;
    res.px = r;
    res.gap = ub - lb;
    res.iterations = it;
    if (res.gap <= tol) {
      res.converged = true;
      return res;
    }

    // Multiplicative update r <- r * exp(D_x), log-domain for stability.
    double hi = -std::numeric_limits<double>::infinity();
    std::vector<double> lr(nx, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      lr[x] = (r[x] > 0.0 ? std::log(r[x]) + dx[x]
                          : -std::numeric_limits<double>::infinity());
      hi = std::max(hi, lr[x]);
    }
    double z = 0.0;
    for (std::size_t x = 0; x < nx; ++x) z += std::exp(lr[x] - hi);
    for (std::size_t x = 0; x < nx; ++x) r[x] = std::exp(lr[x] - hi) / z;
  }
  res.converged = false;
  return res;
}

Dmc restrict_to_support(const Dmc& dmc, const std::vector<double>& px,
                        double thresh, std::vector<std::size_t>* kept) {
  if (px.size() != dmc.nx) throw ConfigError("restrict_to_support: px size mismatch");
  Dmc out;
  out.ny = dmc.ny;
  if (kept) kept->clear();
  for (std::size_t x = 0; x < dmc.nx; ++x) {
    if (px[x] >= thresh) {
      out.nx += 1;
      out.p.insert(out.p.end(), dmc.row(x).begin(), dmc.row(x).end());
      if (!dmc.labels_in.empty()) out.labels_in.push_back(dmc.labels_in[x]);
      if (kept) kept->push_back(x);
    }
  }
  if (out.nx == 0) throw ConfigError("restrict_to_support: empty support");
  if (!dmc.labels_out.empty()) out.labels_out = dmc.labels_out;
  return out;
}

}  // namespace vlf
