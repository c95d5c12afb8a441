#include "vlf/channel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vlf/errors.hpp"

namespace vlf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void Dmc::validate_and_normalize() {
  if (nx == 0 || ny == 0) throw ConfigError("channel: empty transition matrix");
  if (p.size() != nx * ny) throw ConfigError("channel: transition shape mismatch");
  for (double v : p) {
    if (!std::isfinite(v)) throw ConfigError("channel: non-finite entry");
    if (v < 0.0) throw ConfigError("channel: negative entry");
  }
  for (std::size_t x = 0; x < nx; ++x) {
    double s = 0.0;
    for (std::size_t y = 0; y < ny; ++y) s += at(x, y);
    if (std::fabs(s - 1.0) > 1e-12)
      throw ConfigError("channel: row " + std::to_string(x) + " sums to " +
                        std::to_string(s) + ", expected 1 +/- 1e-12");
    for (std::size_t y = 0; y < ny; ++y) p[x * ny + y] /= s;
  }
  if (!labels_in.empty() && labels_in.size() != nx)
    throw ConfigError("channel: labels_in size mismatch");
  if (!labels_out.empty() && labels_out.size() != ny)
    throw ConfigError("channel: labels_out size mismatch");
}

Dmc Dmc::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("channel: bad JSON: ") + e.what());
  }
  if (!j.contains("transition") || !j["transition"].is_array() || j["transition"].empty())
    throw ConfigError("channel: missing 'transition' matrix");
  Dmc d;
  d.nx = j["transition"].size();
  for (std::size_t x = 0; x < d.nx; ++x) {
    const auto& row = j["transition"][x];
    if (!row.is_array()) throw ConfigError("channel: transition row is not an array");
    if (x == 0) d.ny = row.size();
    if (row.size() != d.ny) throw ConfigError("channel: ragged transition matrix");
    for (const auto& v : row) {
      if (!v.is_number()) throw ConfigError("channel: non-numeric transition entry");
      d.p.push_back(v.get<double>());
    }
  }
  if (j.contains("labels_in")) d.labels_in = j["labels_in"].get<std::vector<std::string>>();
  if (j.contains("labels_out")) d.labels_out = j["labels_out"].get<std::vector<std::string>>();
  d.validate_and_normalize();
  return d;
}

Dmc Dmc::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("channel: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string Dmc::to_json() const {
  nlohmann::json j;
  j["transition"] = nlohmann::json::array();
  for (std::size_t x = 0; x < nx; ++x)
    j["transition"].push_back(std::vector<double>(row(x).begin(), row(x).end()));
  if (!labels_in.empty()) j["labels_in"] = labels_in;
  if (!labels_out.empty()) j["labels_out"] = labels_out;
  return j.dump(2);
}

Dmc Dmc::bsc(double crossover) {
  if (!(crossover >= 0.0 && crossover <= 1.0))
    throw ConfigError("bsc: crossover must be in [0,1]");
  Dmc d;
  d.nx = d.ny = 2;
  d.p = {1.0 - crossover, crossover, crossover, 1.0 - crossover};
  return d;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return kInf;
    s += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(s, 0.0);
}

ChannelInfo compute_info(const Dmc& dmc) {
  ChannelInfo info;
  if (dmc.nx < 2) {
    info.B = info.B_star = 0.0;
    info.T = 1.0;
    info.C2 = 0.0;
    info.finite_B = true;
    return info;
  }

  // Ordered-pair divergence scan; first maximizer in (x, x') order wins.
  std::vector<double> div(dmc.nx * dmc.nx, 0.0);
  double best = -1.0;
  for (std::size_t x = 0; x < dmc.nx; ++x) {
    for (std::size_t xp = 0; xp < dmc.nx; ++xp) {
      if (x == xp) continue;
      double d = kl_divergence(dmc.row(x), dmc.row(xp));
      div[x * dmc.nx + xp] = d;
      if (d > best) {
        best = d;
        info.x0 = x;
        info.x0_prime = xp;
      }
      if (d == kInf) info.finite_B = false;
    }
  }
  info.B = best;

  // Reverse divergence, maximized over all pairs tying for B.
  double rev = 0.0;
  const double tie_tol = (std::isfinite(best) ? 1e-12 * std::max(1.0, std::fabs(best)) : 0.0);
  for (std::size_t x = 0; x < dmc.nx; ++x) {
    for (std::size_t xp = 0; xp < dmc.nx; ++xp) {
      if (x == xp) continue;
      double d = div[x * dmc.nx + xp];
      bool ties = std::isfinite(best) ? (std::fabs(d - best) <= tie_tol) : (d == kInf);
      if (ties) rev = std::max(rev, div[xp * dmc.nx + x]);
    }
  }
  info.B_star = rev;

  // Likelihood-ratio extremes.
  double t = 1.0, c2 = 0.0;
  for (std::size_t y = 0; y < dmc.ny; ++y) {
    for (std::size_t x = 0; x < dmc.nx; ++x) {
      for (std::size_t xp = 0; xp < dmc.nx; ++xp) {
        if (x == xp) continue;
        double num = dmc.at(x, y), den = dmc.at(xp, y);
        if (den > 0.0 && num > 0.0) {
          t = std::max(t, num / den);
          c2 = std::max(c2, std::fabs(std::log(num / den)));
        } else if (den == 0.0 && num > 0.0) {
          t = kInf;
          c2 = kInf;
        }
      }
    }
  }
  info.T = t;
  info.C2 = c2;
  return info;
}

double step_log_drop_bound(const ChannelInfo& info, double theta) {
  double lnT = std::log(info.T);  // +inf when supports differ
  return lnT >= theta ? lnT : 0.0;
}

std::string ChannelInfo::to_json() const {
  nlohmann::json j;
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
  };
  j["B"] = num(B);
  j["B_star"] = num(B_star);
  j["C2"] = num(C2);
  j["T"] = num(T);
  j["finite_B"] = finite_B;
  j["x0"] = x0;
  j["x0_prime"] = x0_prime;
  if (has_capacity()) {
    j["C"] = C;
    j["px_star"] = px_star;
    j["B_over_C"] = (C > 0.0) ? num(B / C) : nlohmann::json(nullptr);
  }
  return j.dump(2);
}

}  // namespace vlf
