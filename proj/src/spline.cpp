#include <algorithm>
#include <stdexcept>

#include "doob/path_backend.hpp"

namespace doob {

SplineBackend::SplineBackend(SplineKind kind, std::size_t state_dim, std::vector<double> knots)
    : kind_(kind), dim_(state_dim), knots_(std::move(knots)) {
  if (dim_ == 0) throw std::invalid_argument("SplineBackend: state dim must be positive");
  if (knots_.size() < 2) throw std::invalid_argument("SplineBackend: need at least two knots");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1])) {
      throw std::invalid_argument("SplineBackend: knots must be strictly increasing");
    }
  }
  if (knots_.front() > 0.0 || knots_.back() < 1.0) {
    throw std::invalid_argument("SplineBackend: knots must cover [0, 1]");
  }
  const std::size_t n = knots_.size();
  values_.assign(n * raw_dim(), 0.0);

  second_deriv_map_.assign(n * n, 0.0);
  if (kind_ == SplineKind::cubic && n > 2) {
    // Tridiagonal system for the interior second derivatives, solved once per unit knot value.
    const std::size_t m = n - 2;
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = knots_[i + 1] - knots_[i];
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> diag(m), upper(m), lower(m), rhs(m);
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = r + 1;
        lower[r] = h[i - 1];
        diag[r] = 2.0 * (h[i - 1] + h[i]);
        upper[r] = h[i];
        const double yi = (k == i) ? 1.0 : 0.0;
        const double yp = (k == i + 1) ? 1.0 : 0.0;
        const double ym = (k == i - 1) ? 1.0 : 0.0;
        rhs[r] = 6.0 * ((yp - yi) / h[i] - (yi - ym) / h[i - 1]);
      }
      // Thomas algorithm.
      for (std::size_t r = 1; r < m; ++r) {
        const double f = lower[r] / diag[r - 1];
        diag[r] -= f * upper[r - 1];
        rhs[r] -= f * rhs[r - 1];
      }
      std::vector<double> sol(m);
      for (std::size_t r = m; r-- > 0;) {
        sol[r] = (rhs[r] - (r + 1 < m ? upper[r] * sol[r + 1] : 0.0)) / diag[r];
      }
      for (std::size_t r = 0; r < m; ++r) second_deriv_map_[(r + 1) * n + k] = sol[r];
    }
  }
}

SplineBackend SplineBackend::uniform(SplineKind kind, std::size_t state_dim, std::size_t n_knots) {
  if (n_knots < 2) throw std::invalid_argument("SplineBackend: need at least two knots");
  std::vector<double> knots(n_knots);
  for (std::size_t i = 0; i < n_knots; ++i) {
    knots[i] = static_cast<double>(i) / static_cast<double>(n_knots - 1);
  }
  return SplineBackend(kind, state_dim, std::move(knots));
}

void SplineBackend::set_params(std::span<const double> p) {
  if (p.size() != values_.size()) throw std::invalid_argument("SplineBackend: params size");
  std::copy(p.begin(), p.end(), values_.begin());
}

std::unique_ptr<PathBackend> SplineBackend::clone() const {
  return std::make_unique<SplineBackend>(*this);
}

void SplineBackend::basis(double s, std::vector<double>& w, std::vector<double>& dw) const {
  if (s < knots_.front() || s > knots_.back()) {
    throw std::out_of_range("SplineBackend: time outside knot range");
  }
  const std::size_t n = knots_.size();
  w.assign(n, 0.0);
  dw.assign(n, 0.0);
  auto it = std::upper_bound(knots_.begin(), knots_.end(), s);
  std::size_t j = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  if (j >= n - 1) j = n - 2;
  const double h = knots_[j + 1] - knots_[j];
  const double a = (knots_[j + 1] - s) / h;
  const double b = (s - knots_[j]) / h;
  w[j] += a;
  w[j + 1] += b;
  dw[j] -= 1.0 / h;
  dw[j + 1] += 1.0 / h;
  if (kind_ == SplineKind::cubic) {
    const double ca = (a * a * a - a) * h * h / 6.0;
    const double cb = (b * b * b - b) * h * h / 6.0;
    const double dca = -(3.0 * a * a - 1.0) * h / 6.0;
    const double dcb = (3.0 * b * b - 1.0) * h / 6.0;
    const double* Mj = second_deriv_map_.data() + j * n;
    const double* Mj1 = second_deriv_map_.data() + (j + 1) * n;
    for (std::size_t k = 0; k < n; ++k) {
      w[k] += ca * Mj[k] + cb * Mj1[k];
      dw[k] += dca * Mj[k] + dcb * Mj1[k];
    }
  }
}

void SplineBackend::eval(double s, std::span<double> raw, std::span<double> draw_ds) const {
  std::vector<double> w, dw;
  basis(s, w, dw);
  const std::size_t r = raw_dim();
  std::fill(raw.begin(), raw.end(), 0.0);
  std::fill(draw_ds.begin(), draw_ds.end(), 0.0);
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (w[k] == 0.0 && dw[k] == 0.0) continue;
    for (std::size_t j = 0; j < r; ++j) {
      raw[j] += w[k] * values_[k * r + j];
      draw_ds[j] += dw[k] * values_[k * r + j];
    }
  }
}

void SplineBackend::backward(double s, std::span<const double> raw_bar,
                             std::span<const double> draw_bar, std::span<double> grad) const {
  std::vector<double> w, dw;
  basis(s, w, dw);
  const std::size_t r = raw_dim();
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (w[k] == 0.0 && dw[k] == 0.0) continue;
    for (std::size_t j = 0; j < r; ++j) grad[k * r + j] += w[k] * raw_bar[j] + dw[k] * draw_bar[j];
  }
}

}  // namespace doob
