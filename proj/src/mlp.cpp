#include "doob/mlp.hpp"

#include <cmath>

namespace doob {

std::string to_string(Activation a) { return a == Activation::swish ? "swish" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "swish") return Activation::swish;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

ActivationDerivs activate(Activation a, double z) {
  if (a == Activation::relu) {
    return z > 0.0 ? ActivationDerivs{z, 1.0, 0.0} : ActivationDerivs{0.0, 0.0, 0.0};
  }
  const double s = sigmoid(z);
  const double ds = s * (1.0 - s);
  return {z * s, s + z * ds, ds * (2.0 + z * (1.0 - 2.0 * s))};
}

Mlp::Mlp(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t w : widths_) {
    if (w == 0) throw std::invalid_argument("Mlp: zero layer width");
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(off);
    off += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  params_.assign(off, 0.0);
}

Mlp Mlp::initialized(std::vector<std::size_t> widths, Activation activation, Rng& rng,
                     double output_scale) {
  Mlp net(std::move(widths), activation);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double fan_in = static_cast<double>(net.widths_[l]);
    const double fan_out = static_cast<double>(net.widths_[l + 1]);
    double limit = activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                  : std::sqrt(6.0 / (fan_in + fan_out));
    if (l + 1 == net.num_layers()) limit *= output_scale;
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t n = net.widths_[l + 1] * net.widths_[l];
    for (std::size_t i = 0; i < n; ++i) net.params_[net.weight_offset(l) + i] = dist(rng);
  }
  return net;
}

void Mlp::set_params(std::span<const double> p) {
  if (p.size() != params_.size()) throw std::invalid_argument("Mlp::set_params: size mismatch");
  std::copy(p.begin(), p.end(), params_.begin());
  ++version_;
}

void Mlp::check_tape(std::uint64_t v) const {
  if (v != version_) throw StaleTape("Mlp: tape was recorded with different parameters");
}

std::vector<double> Mlp::forward(std::span<const double> input, Tape* tape) const {
  if (input.size() != in_dim()) throw std::invalid_argument("Mlp::forward: input size mismatch");
  if (tape != nullptr) {
    tape->version = version_;
    tape->inputs.clear();
    tape->pre.clear();
  }
  std::vector<double> x(input.begin(), input.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    std::vector<double> z(out);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < in; ++j) acc += w[j * out + i] * x[j];
      z[i] = acc;
    }
    if (tape != nullptr) {
      tape->inputs.push_back(x);
      tape->pre.push_back(z);
    }
    if (l + 1 < num_layers()) {
      for (double& v : z) v = activate(activation_, v).value;
    }
    x = std::move(z);
  }
  return x;
}

void Mlp::backward(const Tape& tape, std::span<const double> cot, std::span<double> param_grad,
                   std::span<double> input_grad) const {
  check_tape(tape.version);
  if (cot.size() != out_dim() || param_grad.size() != num_params()) {
    throw std::invalid_argument("Mlp::backward: size mismatch");
  }
  std::vector<double> zbar(cot.begin(), cot.end());
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    if (l + 1 < num_layers()) {
      for (std::size_t i = 0; i < out; ++i) zbar[i] *= activate(activation_, tape.pre[l][i]).d1;
    }
    const double* w = params_.data() + weight_offset(l);
    double* gw = param_grad.data() + weight_offset(l);
    double* gb = param_grad.data() + bias_offset(l);
    const auto& x = tape.inputs[l];
    std::vector<double> xbar(in, 0.0);
    for (std::size_t j = 0; j < in; ++j) {
      for (std::size_t i = 0; i < out; ++i) {
        gw[j * out + i] += zbar[i] * x[j];
        xbar[j] += w[j * out + i] * zbar[i];
      }
    }
    for (std::size_t i = 0; i < out; ++i) gb[i] += zbar[i];
    zbar = std::move(xbar);
  }
  if (!input_grad.empty()) {
    if (input_grad.size() != in_dim()) throw std::invalid_argument("Mlp::backward: input grad size");
    std::copy(zbar.begin(), zbar.end(), input_grad.begin());
  }
}

void Mlp::forward_dual(std::span<const double> input, std::span<const double> tangent,
                       std::span<double> out, std::span<double> out_tangent,
                       DualTape* tape) const {
  if (input.size() != in_dim() || tangent.size() != in_dim() || out.size() != out_dim() ||
      out_tangent.size() != out_dim()) {
    throw std::invalid_argument("Mlp::forward_dual: size mismatch");
  }
  if (tape != nullptr) {
    tape->version = version_;
    tape->x.clear();
    tape->xdot.clear();
    tape->z.clear();
    tape->zdot.clear();
  }
  std::vector<double> x(input.begin(), input.end()), xd(tangent.begin(), tangent.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = widths_[l], o = widths_[l + 1];
    const double* w = params_.data() + weight_offset(l);
    const double* b = params_.data() + bias_offset(l);
    std::vector<double> z(o), zd(o);
    for (std::size_t i = 0; i < o; ++i) {
      double acc = b[i], accd = 0.0;
      for (std::size_t j = 0; j < in; ++j) {
        acc += w[j * o + i] * x[j];
        accd += w[j * o + i] * xd[j];
      }
      z[i] = acc;
      zd[i] = accd;
    }
    if (tape != nullptr) {
      tape->x.push_back(x);
      tape->xdot.push_back(xd);
      tape->z.push_back(z);
      tape->zdot.push_back(zd);
    }
    if (l + 1 < num_layers()) {
      for (std::size_t i = 0; i < o; ++i) {
        const auto a = activate(activation_, z[i]);
        z[i] = a.value;
        zd[i] *= a.d1;
      }
    }
    x = std::move(z);
    xd = std::move(zd);
  }
  std::copy(x.begin(), x.end(), out.begin());
  std::copy(xd.begin(), xd.end(), out_tangent.begin());
}

void Mlp::backward_dual(const DualTape& tape, std::span<const double> out_bar,
                        std::span<const double> out_tangent_bar,
                        std::span<double> param_grad) const {
  check_tape(tape.version);
  if (out_bar.size() != out_dim() || out_tangent_bar.size() != out_dim() ||
      param_grad.size() != num_params()) {
    throw std::invalid_argument("Mlp::backward_dual: size mismatch");
  }
  // Cotangents of the layer outputs (post-activation) and their tangents.
  std::vector<double> abar(out_bar.begin(), out_bar.end());
  std::vector<double> adbar(out_tangent_bar.begin(), out_tangent_bar.end());
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = widths_[l], o = widths_[l + 1];
    std::vector<double> zbar(o), zdbar(o);
    if (l + 1 < num_layers()) {
      for (std::size_t i = 0; i < o; ++i) {
        const auto a = activate(activation_, tape.z[l][i]);
        // a = f(z), adot = f'(z) zdot
        zbar[i] = a.d1 * abar[i] + a.d2 * tape.zdot[l][i] * adbar[i];
        zdbar[i] = a.d1 * adbar[i];
      }
    } else {
      zbar = abar;
      zdbar = adbar;
    }
    const double* w = params_.data() + weight_offset(l);
    double* gw = param_grad.data() + weight_offset(l);
    double* gb = param_grad.data() + bias_offset(l);
    const auto& x = tape.x[l];
    const auto& xd = tape.xdot[l];
    std::vector<double> xbar(in, 0.0), xdbar(in, 0.0);
    for (std::size_t j = 0; j < in; ++j) {
      for (std::size_t i = 0; i < o; ++i) {
        gw[j * o + i] += zbar[i] * x[j] + zdbar[i] * xd[j];
        xbar[j] += w[j * o + i] * zbar[i];
        xdbar[j] += w[j * o + i] * zdbar[i];
      }
    }
    for (std::size_t i = 0; i < o; ++i) gb[i] += zbar[i];
    abar = std::move(xbar);
    adbar = std::move(xdbar);
  }
}

void Mlp::forward_dual_batch(const Eigen::MatrixXd& input, const Eigen::MatrixXd& tangent,
                             Eigen::MatrixXd& out, Eigen::MatrixXd& out_tangent,
                             BatchTape& tape) const {
  if (static_cast<std::size_t>(input.rows()) != in_dim() || input.rows() != tangent.rows() ||
      input.cols() != tangent.cols()) {
    throw std::invalid_argument("Mlp::forward_dual_batch: shape mismatch");
  }
  const std::size_t L = num_layers();
  tape.version = version_;
  tape.x.resize(L);
  tape.xdot.resize(L);
  tape.z.resize(L);
  tape.zdot.resize(L);
  tape.x[0] = input;
  tape.xdot[0] = tangent;
  for (std::size_t l = 0; l < L; ++l) {
    const auto in = static_cast<Eigen::Index>(widths_[l]);
    const auto o = static_cast<Eigen::Index>(widths_[l + 1]);
    Eigen::Map<const Eigen::MatrixXd> W(params_.data() + weight_offset(l), o, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset(l), o);
    tape.z[l].noalias() = W * tape.x[l];
    tape.z[l].colwise() += b;
    tape.zdot[l].noalias() = W * tape.xdot[l];
    if (l + 1 < L) {
      auto& xn = tape.x[l + 1];
      auto& xdn = tape.xdot[l + 1];
      xn.resize(o, input.cols());
      xdn.resize(o, input.cols());
      for (Eigen::Index c = 0; c < input.cols(); ++c) {
        for (Eigen::Index r = 0; r < o; ++r) {
          const auto a = activate(activation_, tape.z[l](r, c));
          xn(r, c) = a.value;
          xdn(r, c) = a.d1 * tape.zdot[l](r, c);
        }
      }
    }
  }
  out = tape.z[L - 1];
  out_tangent = tape.zdot[L - 1];
}

void Mlp::backward_dual_batch(const BatchTape& tape, const Eigen::MatrixXd& out_bar,
                              const Eigen::MatrixXd& out_tangent_bar,
                              std::span<double> param_grad) const {
  check_tape(tape.version);
  if (param_grad.size() != num_params()) {
    throw std::invalid_argument("Mlp::backward_dual_batch: gradient size mismatch");
  }
  const std::size_t L = num_layers();
  Eigen::MatrixXd abar = out_bar, adbar = out_tangent_bar;
  Eigen::MatrixXd zbar, zdbar;
  for (std::size_t l = L; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(widths_[l]);
    const auto o = static_cast<Eigen::Index>(widths_[l + 1]);
    if (l + 1 < L) {
      zbar.resize(o, abar.cols());
      zdbar.resize(o, abar.cols());
      for (Eigen::Index c = 0; c < abar.cols(); ++c) {
        for (Eigen::Index r = 0; r < o; ++r) {
          const auto a = activate(activation_, tape.z[l](r, c));
          zbar(r, c) = a.d1 * abar(r, c) + a.d2 * tape.zdot[l](r, c) * adbar(r, c);
          zdbar(r, c) = a.d1 * adbar(r, c);
        }
      }
    } else {
      zbar = abar;
      zdbar = adbar;
    }
    Eigen::Map<const Eigen::MatrixXd> W(params_.data() + weight_offset(l), o, in);
    Eigen::Map<Eigen::MatrixXd> gW(param_grad.data() + weight_offset(l), o, in);
    Eigen::Map<Eigen::VectorXd> gb(param_grad.data() + bias_offset(l), o);
    // Owned temporaries keep the summation order independent of gradient buffer alignment.
    Eigen::MatrixXd dW(o, in);
    dW.noalias() = zbar * tape.x[l].transpose();
    dW.noalias() += zdbar * tape.xdot[l].transpose();
    const Eigen::VectorXd db = zbar.rowwise().sum();
    gW += dW;
    gb += db;
    if (l > 0) {
      abar.noalias() = W.transpose() * zbar;
      adbar.noalias() = W.transpose() * zdbar;
    }
  }
}

}  // namespace doob
