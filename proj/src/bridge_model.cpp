#include "doob/bridge_model.hpp"

#include <cmath>
#include <stdexcept>

namespace doob {

std::unique_ptr<PathBackend> make_backend(const BackendSpec& spec, std::span<const double> A,
                                          std::span<const double> B, Rng& rng) {
  if (spec.tag == "mlp") {
    return std::make_unique<MlpBackend>(
        MlpBackend::create(A, B, spec.hidden, spec.activation, rng, spec.output_scale));
  }
  if (spec.tag == "spline_linear" || spec.tag == "spline_cubic") {
    const auto kind = spec.tag == "spline_linear" ? SplineKind::linear : SplineKind::cubic;
    return std::make_unique<SplineBackend>(SplineBackend::uniform(kind, A.size(), spec.knots));
  }
  throw std::invalid_argument("unknown backend '" + spec.tag + "'");
}

BridgeModel::BridgeModel(BoundaryPair boundary, std::vector<double> xi_diag,
                         std::vector<std::unique_ptr<PathBackend>> components,
                         std::vector<double> logits, double tau, bool freeze_logits)
    : boundary_(std::move(boundary)),
      xi_(std::move(xi_diag)),
      components_(std::move(components)),
      logits_(std::move(logits)),
      tau_(tau),
      freeze_logits_(freeze_logits) {
  boundary_.validate();
  if (xi_.size() != boundary_.dim()) throw std::invalid_argument("BridgeModel: xi size");
  if (components_.empty()) throw std::invalid_argument("BridgeModel: need at least one component");
  if (logits_.size() != components_.size()) throw std::invalid_argument("BridgeModel: logits size");
  if (!(tau_ > 0.0)) throw std::invalid_argument("BridgeModel: tau must be > 0");
  for (const auto& c : components_) {
    if (c->state_dim() != boundary_.dim()) throw std::invalid_argument("BridgeModel: component dim");
  }
  g_.resize(xi_.size());
  for (std::size_t i = 0; i < xi_.size(); ++i) {
    if (!(xi_[i] > 0.0)) throw std::invalid_argument("BridgeModel: xi must be positive");
    g_[i] = 0.5 * xi_[i] * xi_[i];
  }
}

BridgeModel::BridgeModel(const BridgeModel& other)
    : boundary_(other.boundary_),
      xi_(other.xi_),
      g_(other.g_),
      logits_(other.logits_),
      tau_(other.tau_),
      freeze_logits_(other.freeze_logits_) {
  for (const auto& c : other.components_) components_.push_back(c->clone());
}

BridgeModel& BridgeModel::operator=(const BridgeModel& other) {
  if (this != &other) *this = BridgeModel(other);
  return *this;
}

BridgeModel BridgeModel::create(const BoundaryPair& boundary, std::span<const double> xi_diag,
                                const BackendSpec& backend, const MixtureSpec& mixture, Rng& rng) {
  boundary.validate();
  if (mixture.K < 1) throw std::invalid_argument("BridgeModel: K must be >= 1");
  const std::size_t d = boundary.dim();
  std::vector<std::unique_ptr<PathBackend>> comps;

  // Unit direction perpendicular to B - A for the optional component offsets.
  std::vector<double> perp(d, 0.0);
  if (mixture.init_spread != 0.0 && d >= 2) {
    std::vector<double> dir(d);
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dir[i] = boundary.B[i] - boundary.A[i];
      n2 += dir[i] * dir[i];
    }
    std::size_t axis = 0;
    for (std::size_t i = 1; i < d; ++i) {
      if (std::abs(dir[i]) < std::abs(dir[axis])) axis = i;
    }
    perp[axis] = 1.0;
    if (n2 > 0.0) {
      const double proj = dir[axis] / n2;
      for (std::size_t i = 0; i < d; ++i) perp[i] -= proj * dir[i];
    }
    double pn = 0.0;
    for (double v : perp) pn += v * v;
    pn = std::sqrt(pn);
    for (double& v : perp) v /= pn;
  }

  for (std::size_t k = 0; k < mixture.K; ++k) {
    auto comp = make_backend(backend, boundary.A, boundary.B, rng);
    if (mixture.init_spread != 0.0 && mixture.K > 1) {
      const double shift = mixture.init_spread *
                           (static_cast<double>(k) - 0.5 * static_cast<double>(mixture.K - 1));
      // The envelope scales raw means by s(1 - s) <= 1/4; offset the raw output by 4x.
      std::vector<double> p(comp->params().begin(), comp->params().end());
      if (auto* mlp = dynamic_cast<MlpBackend*>(comp.get())) {
        const std::size_t bias_start = p.size() - mlp->net().out_dim();
        for (std::size_t i = 0; i < d; ++i) p[bias_start + i] += 4.0 * shift * perp[i];
      } else {
        const std::size_t r = comp->raw_dim();
        for (std::size_t kn = 0; kn < p.size() / r; ++kn) {
          for (std::size_t i = 0; i < d; ++i) p[kn * r + i] += 4.0 * shift * perp[i];
        }
      }
      comp->set_params(p);
    }
    comps.push_back(std::move(comp));
  }
  std::vector<double> logits = mixture.initial_logits;
  if (logits.empty()) logits.assign(mixture.K, 0.0);
  return BridgeModel(boundary, std::vector<double>(xi_diag.begin(), xi_diag.end()),
                     std::move(comps), std::move(logits), mixture.tau, mixture.freeze_logits);
}

PathMarginal BridgeModel::marginal(std::size_t k, double t) const {
  return gaussian_path_eval(*components_.at(k), boundary_, t);
}

std::vector<PathMarginal> BridgeModel::marginals(double t) const {
  std::vector<PathMarginal> out;
  out.reserve(K());
  for (std::size_t k = 0; k < K(); ++k) out.push_back(marginal(k, t));
  return out;
}

MixtureDrift BridgeModel::drift(double t, std::span<const double> x) const {
  const auto ms = marginals(t);
  const auto w = weights();
  return mixture_drift(w, ms, x, g_);
}

std::size_t BridgeModel::num_params() const { return param_offset(K()) + K(); }

std::size_t BridgeModel::param_offset(std::size_t k) const {
  std::size_t off = 0;
  for (std::size_t j = 0; j < k && j < components_.size(); ++j) off += components_[j]->num_params();
  return off;
}

std::vector<double> BridgeModel::flat_params() const {
  std::vector<double> p;
  p.reserve(num_params());
  for (const auto& c : components_) p.insert(p.end(), c->params().begin(), c->params().end());
  p.insert(p.end(), logits_.begin(), logits_.end());
  return p;
}

void BridgeModel::set_flat_params(std::span<const double> p) {
  if (p.size() != num_params()) throw std::invalid_argument("BridgeModel: flat params size");
  std::size_t off = 0;
  for (auto& c : components_) {
    const std::size_t n = c->num_params();
    c->set_params(p.subspan(off, n));
    off += n;
  }
  std::copy(p.begin() + static_cast<std::ptrdiff_t>(off), p.end(), logits_.begin());
}

}  // namespace doob
