#include "doob/potentials.hpp"

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace doob {

Potential::Potential(std::string name, std::size_t dim, EnergyFn energy, GradientFn gradient,
                     HessianFn hessian)
    : name_(std::move(name)),
      dim_(dim),
      energy_(std::move(energy)),
      gradient_(std::move(gradient)),
      hessian_(std::move(hessian)) {
  if (dim_ == 0) throw std::invalid_argument("Potential: dim must be positive");
}

std::shared_ptr<Potential> Potential::fresh_copy() const {
  return std::make_shared<Potential>(name_, dim_, energy_, gradient_, hessian_);
}

void Potential::check_input(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("Potential '" + name_ + "': expected input of dim " +
                                std::to_string(dim_) + ", got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("Potential '" + name_ + "': non-finite input");
    }
  }
}

double Potential::energy(std::span<const double> x) const {
  check_input(x);
  energy_calls_.fetch_add(1, std::memory_order_relaxed);
  return energy_(x);
}

void Potential::gradient(std::span<const double> x, std::span<double> out) const {
  check_input(x);
  if (out.size() != dim_) throw std::invalid_argument("Potential: gradient output size");
  gradient_calls_.fetch_add(1, std::memory_order_relaxed);
  gradient_(x, out);
}

std::vector<double> Potential::gradient(std::span<const double> x) const {
  std::vector<double> g(dim_);
  gradient(x, g);
  return g;
}

void Potential::gradient_and_hessian(std::span<const double> x, std::span<double> grad,
                                     std::span<double> hess) const {
  check_input(x);
  if (grad.size() != dim_ || hess.size() != dim_ * dim_) {
    throw std::invalid_argument("Potential: gradient/hessian output size");
  }
  gradient_calls_.fetch_add(1, std::memory_order_relaxed);
  hessian_(x, grad, hess);
}

namespace {

// A * exp(a (x-x0)^2 + b (x-x0)(y-y0) + c (y-y0)^2)
struct ExpQuadTerm {
  double amp, a, b, c, x0, y0;

  double value(double x, double y) const {
    const double dx = x - x0, dy = y - y0;
    return amp * std::exp(a * dx * dx + b * dx * dy + c * dy * dy);
  }

  void accumulate(double x, double y, double* grad, double* hess) const {
    const double dx = x - x0, dy = y - y0;
    const double e = amp * std::exp(a * dx * dx + b * dx * dy + c * dy * dy);
    const double qx = 2.0 * a * dx + b * dy;
    const double qy = b * dx + 2.0 * c * dy;
    grad[0] += e * qx;
    grad[1] += e * qy;
    if (hess != nullptr) {
      hess[0] += e * (qx * qx + 2.0 * a);
      hess[1] += e * (qx * qy + b);
      hess[2] += e * (qx * qy + b);
      hess[3] += e * (qy * qy + 2.0 * c);
    }
  }
};

// Sum of ExpQuad terms plus sextic walls w * (x^6 + y^6).
struct TwoDimSurface {
  std::vector<ExpQuadTerm> terms;
  double sextic = 0.0;

  double energy(std::span<const double> p) const {
    double e = 0.0;
    for (const auto& t : terms) e += t.value(p[0], p[1]);
    e += sextic * (std::pow(p[0], 6) + std::pow(p[1], 6));
    return e;
  }

  void gradient(std::span<const double> p, std::span<double> g, double* hess) const {
    g[0] = g[1] = 0.0;
    if (hess != nullptr) std::fill(hess, hess + 4, 0.0);
    for (const auto& t : terms) t.accumulate(p[0], p[1], g.data(), hess);
    if (sextic != 0.0) {
      g[0] += sextic * 6.0 * std::pow(p[0], 5);
      g[1] += sextic * 6.0 * std::pow(p[1], 5);
      if (hess != nullptr) {
        hess[0] += sextic * 30.0 * std::pow(p[0], 4);
        hess[3] += sextic * 30.0 * std::pow(p[1], 4);
      }
    }
  }
};

std::shared_ptr<Potential> make_surface(std::string name, TwoDimSurface s) {
  auto surf = std::make_shared<const TwoDimSurface>(std::move(s));
  return std::make_shared<Potential>(
      std::move(name), 2, [surf](std::span<const double> x) { return surf->energy(x); },
      [surf](std::span<const double> x, std::span<double> g) { surf->gradient(x, g, nullptr); },
      [surf](std::span<const double> x, std::span<double> g, std::span<double> h) {
        surf->gradient(x, g, h.data());
      });
}

}  // namespace

std::shared_ptr<Potential> mueller_brown() {
  TwoDimSurface s;
  s.terms = {
      {-200.0, -1.0, 0.0, -10.0, 1.0, 0.0},
      {-100.0, -1.0, 0.0, -10.0, 0.0, 0.5},
      {-170.0, -6.5, 11.0, -6.5, -0.5, 1.5},
      {15.0, 0.7, 0.6, 0.7, -1.0, 1.0},
  };
  return make_surface("mueller_brown", std::move(s));
}

std::shared_ptr<Potential> dual_channel() {
  TwoDimSurface s;
  s.terms = {
      {2.0, -12.0, 0.0, -12.0, 0.0, 0.0},
      {-1.0, -12.0, 0.0, -12.0, -0.5, 0.0},
      {-1.0, -12.0, 0.0, -12.0, 0.5, 0.0},
  };
  s.sextic = 1.0;
  return make_surface("dual_channel", std::move(s));
}

std::shared_ptr<Potential> flat_potential(std::size_t dim) {
  return std::make_shared<Potential>(
      "flat", dim, [](std::span<const double>) { return 0.0; },
      [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); },
      [](std::span<const double>, std::span<double> g, std::span<double> h) {
        std::fill(g.begin(), g.end(), 0.0);
        std::fill(h.begin(), h.end(), 0.0);
      });
}

namespace {
const std::map<std::string, std::shared_ptr<Potential> (*)()>& registry() {
  static const std::map<std::string, std::shared_ptr<Potential> (*)()> r = {
      {"mueller_brown", &mueller_brown},
      {"dual_channel", &dual_channel},
  };
  return r;
}
}  // namespace

std::shared_ptr<Potential> make_potential(const std::string& name) {
  const auto& r = registry();
  auto it = r.find(name);
  if (it == r.end()) throw std::invalid_argument("unknown potential '" + name + "'");
  return it->second();
}

std::vector<std::string> potential_names() {
  std::vector<std::string> names;
  for (const auto& [k, _] : registry()) names.push_back(k);
  return names;
}

}  // namespace doob
