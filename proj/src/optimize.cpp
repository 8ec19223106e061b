#include "shiftel/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace shiftel {

namespace {

double finite_or_inf(double v)
{
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

} // namespace

ScalarMinimum golden_section(const std::function<double(double)>& f,
                             double lo,
                             double hi,
                             double tolerance,
                             int max_evaluations)
{
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  ScalarMinimum best;
  best.value = std::numeric_limits<double>::infinity();
  const auto eval = [&](double x) {
    const double v = finite_or_inf(f(x));
    ++best.evaluations;
    if (v < best.value) {
      best.value = v;
      best.x = x;
    }
    return v;
  };
  if (hi < lo)
    std::swap(lo, hi);
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  while (b - a > tolerance && best.evaluations < max_evaluations) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  return best;
}

VectorMinimum nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& start,
                          const Eigen::VectorXd& step,
                          double tolerance,
                          int max_evaluations)
{
  const auto n = start.size();
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n + 1), start);
  std::vector<double> values(static_cast<std::size_t>(n + 1));
  VectorMinimum out;
  const auto eval = [&](const Eigen::VectorXd& x) {
    ++out.evaluations;
    return finite_or_inf(f(x));
  };
  for (Eigen::Index k = 0; k < n; ++k)
    simplex[static_cast<std::size_t>(k + 1)](k) += step(k);
  for (std::size_t i = 0; i < simplex.size(); ++i)
    values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(simplex.size());
  while (out.evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), std::size_t{ 0 });
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    double spread = 0.0;
    for (const auto& v : simplex)
      spread = std::max(spread, (v - simplex[best]).lpNorm<Eigen::Infinity>());
    if (spread < tolerance) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (i != worst)
        centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Eigen::VectorXd contracted = outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                                               : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < std::min(fr, values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best)
        continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = eval(simplex[i]);
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  out.x = simplex[static_cast<std::size_t>(it - values.begin())];
  out.value = *it;
  return out;
}

} // namespace shiftel
