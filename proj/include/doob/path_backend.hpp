#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "doob/mlp.hpp"

namespace doob {

/// Scratch state between eval_batch and backward_batch.
struct BackendTape {
  std::vector<double> s;
  Mlp::BatchTape mlp;
};

/// Learned part of a Gaussian path: maps normalized time s = t/T in [0, 1] to
/// raw outputs r(s) = (mean perturbation, pre-softplus variance), each of the
/// state dimension, together with dr/ds.
class PathBackend {
 public:
  virtual ~PathBackend() = default;

  virtual std::string tag() const = 0;
  virtual std::size_t state_dim() const = 0;
  std::size_t raw_dim() const { return 2 * state_dim(); }

  virtual std::span<const double> params() const = 0;
  virtual void set_params(std::span<const double> p) = 0;
  std::size_t num_params() const { return params().size(); }
  virtual std::unique_ptr<PathBackend> clone() const = 0;

  virtual void eval(double s, std::span<double> raw, std::span<double> draw_ds) const = 0;
  // Accumulates the parameter gradient of <raw, raw_bar> + <draw_ds, draw_bar> into grad.
  virtual void backward(double s, std::span<const double> raw_bar,
                        std::span<const double> draw_bar, std::span<double> grad) const = 0;

  // One sample per column.
  virtual void eval_batch(std::span<const double> s, Eigen::MatrixXd& raw, Eigen::MatrixXd& draw_ds,
                          BackendTape& tape) const;
  virtual void backward_batch(const BackendTape& tape, const Eigen::MatrixXd& raw_bar,
                              const Eigen::MatrixXd& draw_bar, std::span<double> grad) const;
};

/// NNET(t, A, B): the network sees (s, A, B) and is differentiated in s by forward mode.
class MlpBackend final : public PathBackend {
 public:
  MlpBackend(Mlp net, std::vector<double> A, std::vector<double> B);

  /// Hidden widths `hidden`, input (s, A, B), output 2 * dim.
  static MlpBackend create(std::span<const double> A, std::span<const double> B,
                           const std::vector<std::size_t>& hidden, Activation act, Rng& rng,
                           double output_scale);

  std::string tag() const override { return "mlp"; }
  std::size_t state_dim() const override { return A_.size(); }
  std::span<const double> params() const override { return net_.params(); }
  void set_params(std::span<const double> p) override { net_.set_params(p); }
  std::unique_ptr<PathBackend> clone() const override;

  void eval(double s, std::span<double> raw, std::span<double> draw_ds) const override;
  void backward(double s, std::span<const double> raw_bar, std::span<const double> draw_bar,
                std::span<double> grad) const override;
  void eval_batch(std::span<const double> s, Eigen::MatrixXd& raw, Eigen::MatrixXd& draw_ds,
                  BackendTape& tape) const override;
  void backward_batch(const BackendTape& tape, const Eigen::MatrixXd& raw_bar,
                      const Eigen::MatrixXd& draw_bar, std::span<double> grad) const override;

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const std::vector<double>& A() const { return A_; }
  const std::vector<double>& B() const { return B_; }

 private:
  std::vector<double> input(double s) const;

  Mlp net_;
  std::vector<double> A_, B_;
};

enum class SplineKind { linear, cubic };

/// Knot values interpolated piecewise linearly or by a natural cubic spline.
/// Parameters are the knot values, knot-major: params[k * raw_dim + j].
class SplineBackend final : public PathBackend {
 public:
  SplineBackend(SplineKind kind, std::size_t state_dim, std::vector<double> knots);
  /// `n_knots` uniformly spaced knots on [0, 1], all values zero.
  static SplineBackend uniform(SplineKind kind, std::size_t state_dim, std::size_t n_knots = 20);

  std::string tag() const override {
    return kind_ == SplineKind::linear ? "spline_linear" : "spline_cubic";
  }
  std::size_t state_dim() const override { return dim_; }
  std::span<const double> params() const override { return values_; }
  void set_params(std::span<const double> p) override;
  std::unique_ptr<PathBackend> clone() const override;

  void eval(double s, std::span<double> raw, std::span<double> draw_ds) const override;
  void backward(double s, std::span<const double> raw_bar, std::span<const double> draw_bar,
                std::span<double> grad) const override;

  SplineKind kind() const { return kind_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Interpolation weights: raw_j(s) = sum_k w[k] values[k][j], d/ds likewise with dw.
  void basis(double s, std::vector<double>& w, std::vector<double>& dw) const;

 private:
  SplineKind kind_;
  std::size_t dim_;
  std::vector<double> knots_;
  std::vector<double> values_;
  // Natural-spline second derivatives as a linear map of the knot values (n x n, row-major).
  std::vector<double> second_deriv_map_;
};

}  // namespace doob
