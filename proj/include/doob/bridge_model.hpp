#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "doob/gaussian_path.hpp"
#include "doob/mixture.hpp"
#include "doob/path_backend.hpp"

namespace doob {

struct BackendSpec {
  std::string tag = "mlp";  // "mlp" | "spline_linear" | "spline_cubic"
  std::vector<std::size_t> hidden = {128, 128, 128};
  Activation activation = Activation::swish;
  // Scale of the last layer's initial weights; keeps the initial path close
  // to linear interpolation.
  double output_scale = 0.1;
  std::size_t knots = 20;
};

struct MixtureSpec {
  std::size_t K = 1;
  double tau = 1.0;
  bool freeze_logits = false;
  std::vector<double> initial_logits;  // empty: all zero
  // Initial mean offset between components, perpendicular to B - A.
  double init_spread = 0.0;
};

std::unique_ptr<PathBackend> make_backend(const BackendSpec& spec, std::span<const double> A,
                                          std::span<const double> B, Rng& rng);

/// Trained (or trainable) bridge: K Gaussian-path components pinned to one boundary pair.
class BridgeModel {
 public:
  BridgeModel(BoundaryPair boundary, std::vector<double> xi_diag,
              std::vector<std::unique_ptr<PathBackend>> components, std::vector<double> logits,
              double tau, bool freeze_logits);
  BridgeModel(const BridgeModel& other);
  BridgeModel& operator=(const BridgeModel& other);
  BridgeModel(BridgeModel&&) noexcept = default;
  BridgeModel& operator=(BridgeModel&&) noexcept = default;

  static BridgeModel create(const BoundaryPair& boundary, std::span<const double> xi_diag,
                            const BackendSpec& backend, const MixtureSpec& mixture, Rng& rng);

  const BoundaryPair& boundary() const { return boundary_; }
  std::size_t dim() const { return boundary_.dim(); }
  std::span<const double> xi_diag() const { return xi_; }
  std::span<const double> g_diag() const { return g_; }
  std::size_t K() const { return components_.size(); }
  const PathBackend& component(std::size_t k) const { return *components_.at(k); }
  PathBackend& component(std::size_t k) { return *components_.at(k); }
  std::string backend_tag() const { return components_.front()->tag(); }

  const std::vector<double>& logits() const { return logits_; }
  std::vector<double> weights() const { return softmax(logits_); }
  double tau() const { return tau_; }
  bool freeze_logits() const { return freeze_logits_; }

  PathMarginal marginal(std::size_t k, double t) const;
  std::vector<PathMarginal> marginals(double t) const;
  /// Mixture drift at (t, x) under the model's diffusion.
  MixtureDrift drift(double t, std::span<const double> x) const;

  // Flat layout: component 0 params, ..., component K-1 params, logits.
  std::size_t num_params() const;
  std::size_t param_offset(std::size_t k) const;
  std::size_t logits_offset() const { return param_offset(K()); }
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> p);

 private:
  BoundaryPair boundary_;
  std::vector<double> xi_, g_;
  std::vector<std::unique_ptr<PathBackend>> components_;
  std::vector<double> logits_;
  double tau_;
  bool freeze_logits_;
};

}  // namespace doob
