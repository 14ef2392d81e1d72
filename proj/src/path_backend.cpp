#include "doob/path_backend.hpp"

#include <stdexcept>

namespace doob {

void PathBackend::eval_batch(std::span<const double> s, Eigen::MatrixXd& raw,
                             Eigen::MatrixXd& draw_ds, BackendTape& tape) const {
  const auto n = static_cast<Eigen::Index>(s.size());
  const auto r = static_cast<Eigen::Index>(raw_dim());
  tape.s.assign(s.begin(), s.end());
  raw.resize(r, n);
  draw_ds.resize(r, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    eval(s[c], {raw.col(c).data(), raw_dim()}, {draw_ds.col(c).data(), raw_dim()});
  }
}

void PathBackend::backward_batch(const BackendTape& tape, const Eigen::MatrixXd& raw_bar,
                                 const Eigen::MatrixXd& draw_bar, std::span<double> grad) const {
  for (std::size_t c = 0; c < tape.s.size(); ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    backward(tape.s[c], {raw_bar.col(col).data(), raw_dim()},
             {draw_bar.col(col).data(), raw_dim()}, grad);
  }
}

MlpBackend::MlpBackend(Mlp net, std::vector<double> A, std::vector<double> B)
    : net_(std::move(net)), A_(std::move(A)), B_(std::move(B)) {
  if (A_.size() != B_.size() || A_.empty()) throw std::invalid_argument("MlpBackend: A/B size");
  if (net_.in_dim() != 1 + 2 * A_.size() || net_.out_dim() != 2 * A_.size()) {
    throw std::invalid_argument("MlpBackend: network shape does not match state dimension");
  }
}

MlpBackend MlpBackend::create(std::span<const double> A, std::span<const double> B,
                              const std::vector<std::size_t>& hidden, Activation act, Rng& rng,
                              double output_scale) {
  const std::size_t d = A.size();
  std::vector<std::size_t> widths;
  widths.push_back(1 + 2 * d);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2 * d);
  return MlpBackend(Mlp::initialized(widths, act, rng, output_scale),
                    std::vector<double>(A.begin(), A.end()), std::vector<double>(B.begin(), B.end()));
}

std::unique_ptr<PathBackend> MlpBackend::clone() const {
  return std::make_unique<MlpBackend>(*this);
}

std::vector<double> MlpBackend::input(double s) const {
  std::vector<double> in;
  in.reserve(net_.in_dim());
  in.push_back(s);
  in.insert(in.end(), A_.begin(), A_.end());
  in.insert(in.end(), B_.begin(), B_.end());
  return in;
}

void MlpBackend::eval(double s, std::span<double> raw, std::span<double> draw_ds) const {
  const auto in = input(s);
  std::vector<double> tangent(in.size(), 0.0);
  tangent[0] = 1.0;
  net_.forward_dual(in, tangent, raw, draw_ds);
}

void MlpBackend::backward(double s, std::span<const double> raw_bar,
                          std::span<const double> draw_bar, std::span<double> grad) const {
  const auto in = input(s);
  std::vector<double> tangent(in.size(), 0.0);
  tangent[0] = 1.0;
  std::vector<double> out(net_.out_dim()), out_t(net_.out_dim());
  Mlp::DualTape tape;
  net_.forward_dual(in, tangent, out, out_t, &tape);
  net_.backward_dual(tape, raw_bar, draw_bar, grad);
}

void MlpBackend::eval_batch(std::span<const double> s, Eigen::MatrixXd& raw,
                            Eigen::MatrixXd& draw_ds, BackendTape& tape) const {
  const auto n = static_cast<Eigen::Index>(s.size());
  const auto in_dim = static_cast<Eigen::Index>(net_.in_dim());
  const auto d = static_cast<Eigen::Index>(A_.size());
  tape.s.assign(s.begin(), s.end());
  Eigen::MatrixXd input(in_dim, n), tangent = Eigen::MatrixXd::Zero(in_dim, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    input(0, c) = s[c];
    for (Eigen::Index j = 0; j < d; ++j) {
      input(1 + j, c) = A_[j];
      input(1 + d + j, c) = B_[j];
    }
    tangent(0, c) = 1.0;
  }
  net_.forward_dual_batch(input, tangent, raw, draw_ds, tape.mlp);
}

void MlpBackend::backward_batch(const BackendTape& tape, const Eigen::MatrixXd& raw_bar,
                                const Eigen::MatrixXd& draw_bar, std::span<double> grad) const {
  net_.backward_dual_batch(tape.mlp, raw_bar, draw_bar, grad);
}

}  // namespace doob
