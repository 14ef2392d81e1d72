#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "doob/rng.hpp"

namespace doob {

enum class Activation { swish, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

class StaleTape : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Fully connected network with an activation after every layer but the last.
///
/// Parameters live in one flat buffer: for each layer the column-major
/// (out x in) weight followed by the bias. The per-sample entry points are a
/// straightforward loop implementation kept as the reference; the *_batch
/// entry points process one sample per column with Eigen and are what the
/// training kernels use.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> widths, Activation activation);

  /// Glorot-uniform (swish) or He-uniform (relu) weights, zero biases; the
  /// last layer's weights are multiplied by `output_scale`.
  static Mlp initialized(std::vector<std::size_t> widths, Activation activation, Rng& rng,
                         double output_scale = 1.0);

  std::size_t in_dim() const { return widths_.front(); }
  std::size_t out_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }

  std::span<const double> params() const { return params_; }
  // Any mutable access invalidates outstanding tapes.
  std::span<double> mutable_params() {
    ++version_;
    return params_;
  }
  void set_params(std::span<const double> p);
  std::uint64_t version() const { return version_; }

  struct Tape {
    std::uint64_t version = 0;
    std::vector<std::vector<double>> inputs;  // input of each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
  };

  std::vector<double> forward(std::span<const double> input, Tape* tape = nullptr) const;
  /// Accumulates d<output, cot>/d(params) into param_grad; writes the input gradient if non-empty.
  void backward(const Tape& tape, std::span<const double> cot, std::span<double> param_grad,
                std::span<double> input_grad = {}) const;

  struct DualTape {
    std::uint64_t version = 0;
    std::vector<std::vector<double>> x, xdot, z, zdot;
  };

  /// Output and Jacobian-vector product J(input) * tangent.
  void forward_dual(std::span<const double> input, std::span<const double> tangent,
                    std::span<double> out, std::span<double> out_tangent,
                    DualTape* tape = nullptr) const;
  /// Reverse pass through forward_dual: accumulates the parameter gradient of
  /// <out, out_bar> + <out_tangent, out_tangent_bar>.
  void backward_dual(const DualTape& tape, std::span<const double> out_bar,
                     std::span<const double> out_tangent_bar, std::span<double> param_grad) const;

  struct BatchTape {
    std::uint64_t version = 0;
    std::vector<Eigen::MatrixXd> x, xdot, z, zdot;
  };

  void forward_dual_batch(const Eigen::MatrixXd& input, const Eigen::MatrixXd& tangent,
                          Eigen::MatrixXd& out, Eigen::MatrixXd& out_tangent,
                          BatchTape& tape) const;
  void backward_dual_batch(const BatchTape& tape, const Eigen::MatrixXd& out_bar,
                           const Eigen::MatrixXd& out_tangent_bar,
                           std::span<double> param_grad) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + widths_[layer + 1] * widths_[layer];
  }
  void check_tape(std::uint64_t v) const;

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  Activation activation_ = Activation::swish;
  std::vector<double> params_;
  std::uint64_t version_ = 1;
};

// Scalar activation and its first two derivatives.
struct ActivationDerivs {
  double value, d1, d2;
};
ActivationDerivs activate(Activation a, double z);

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) {
  return z > 30.0 ? z : std::log1p(std::exp(z));
}

}  // namespace doob
