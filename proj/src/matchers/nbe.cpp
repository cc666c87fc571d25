#include "sloop/nbe.hpp"

#include <cmath>

#include "sloop/error.hpp"

namespace sloop {

Grid standardize(const Grid& g) {
  Grid out(g.height(), g.width());
  const auto in = g.values();
  if (in.empty()) return out;
  const double m = mean(g);
  double var = 0.0;
  for (const double v : in) var += (v - m) * (v - m);
  var /= static_cast<double>(in.size());
  if (var <= 1e-24) return out;
  const double inv = 1.0 / std::sqrt(var);
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = (in[i] - m) * inv;
  return out;
}

NbeResult nbe(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw validation_error("nbe: patch dimensions differ");
  if (a.empty()) throw validation_error("nbe: empty patch");
  const Grid sa = standardize(a);
  const Grid sb = standardize(b);
  NbeResult r;
  r.error_map = Grid(a.height(), a.width());
  auto e = r.error_map.values();
  const auto va = sa.values();
  const auto vb = sb.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    e[i] = std::abs(d);
    sum += d * d;
  }
  r.value = sum / static_cast<double>(va.size());
  return r;
}

double nbe_value(const Grid& a, const Grid& b) { return nbe(a, b).value; }

}  // namespace sloop
