#include "doob/metrics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "doob/assignment.hpp"

namespace doob {

namespace {

double config_energy(const Trajectory& traj, std::size_t i, const Potential& p) {
  return p.energy(traj.state(i).subspan(0, p.dim()));
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt_short(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

double max_energy(const Trajectory& traj, const Potential& p) {
  if (traj.size() == 0) throw std::invalid_argument("max_energy: empty trajectory");
  if (traj.dim < p.dim()) throw std::invalid_argument("max_energy: trajectory dim < potential dim");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < traj.size(); ++i) best = std::max(best, config_energy(traj, i, p));
  return best;
}

double ensemble_minmax(const Ensemble& ensemble, const Potential& p) {
  if (ensemble.paths.empty()) throw std::invalid_argument("ensemble_minmax: empty ensemble");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& path : ensemble.paths) best = std::min(best, max_energy(path, p));
  return best;
}

double path_log_likelihood(const Trajectory& traj, const ReferenceDynamics& dyn,
                           const std::optional<StartDensity>& start) {
  const std::size_t n = dyn.dim();
  if (traj.dim != n) throw std::invalid_argument("path_log_likelihood: dim mismatch");
  if (traj.size() == 0) throw std::invalid_argument("path_log_likelihood: empty trajectory");
  constexpr double log2pi = 1.8378770664093453;
  double ll = 0.0;
  if (start) {
    if (start->mean.size() != n || !(start->var > 0.0)) {
      throw std::invalid_argument("path_log_likelihood: bad start density");
    }
    const auto x0 = traj.front();
    for (std::size_t i = 0; i < n; ++i) {
      const double r = x0[i] - start->mean[i];
      ll += -0.5 * (log2pi + std::log(start->var) + r * r / start->var);
    }
  }
  const auto xi = dyn.xi_diag();
  std::vector<double> b(n);
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const double dt = traj.times[k + 1] - traj.times[k];
    if (!(dt > 0.0)) throw std::invalid_argument("path_log_likelihood: non-increasing times");
    const auto x = traj.state(k);
    const auto y = traj.state(k + 1);
    dyn.drift(traj.times[k], x, b);
    for (std::size_t i = 0; i < n; ++i) {
      const double var = dt * xi[i] * xi[i];
      const double r = y[i] - x[i] - dt * b[i];
      ll += -0.5 * (log2pi + std::log(var) + r * r / var);
    }
  }
  return ll;
}

void PointSet::push(std::span<const double> x) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) throw std::invalid_argument("PointSet::push: dim mismatch");
  data.insert(data.end(), x.begin(), x.end());
}

namespace {

void check_pair(const PointSet& p, const PointSet& q) {
  if (p.size() == 0 || q.size() == 0) throw std::invalid_argument("w1_marginal: empty sample set");
  if (p.dim != q.dim) throw std::invalid_argument("w1_marginal: dimension mismatch");
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

PointSet subsample(const PointSet& p, std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates, first n entries.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  PointSet out;
  out.dim = p.dim;
  out.data.reserve(n * p.dim);
  for (std::size_t i = 0; i < n; ++i) out.push(p.point(idx[i]));
  return out;
}

}  // namespace

std::vector<double> cost_matrix_serial(const PointSet& p, const PointSet& q) {
  check_pair(p, q);
  const std::size_t n = p.size(), m = q.size();
  std::vector<double> c(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] = distance(p.point(i), q.point(j));
  }
  return c;
}

std::vector<double> cost_matrix_parallel(const PointSet& p, const PointSet& q) {
  check_pair(p, q);
  const std::size_t n = p.size(), m = q.size();
  std::vector<double> c(n * m);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) c[i * m + j] = distance(p.point(i), q.point(j));
  }
  return c;
}

double w1_marginal(const PointSet& p, const PointSet& q) {
  check_pair(p, q);
  if (p.size() != q.size()) {
    throw std::invalid_argument("w1_marginal: sample counts differ; subsample the larger set");
  }
  const std::size_t n = p.size();
  const auto cost = cost_matrix_parallel(p, q);
  return solve_assignment(cost, n).cost / static_cast<double>(n);
}

double w1_marginal(const PointSet& p, const PointSet& q, Rng& rng) {
  check_pair(p, q);
  if (p.size() > q.size()) return w1_marginal(subsample(p, q.size(), rng), q);
  if (q.size() > p.size()) return w1_marginal(p, subsample(q, p.size(), rng));
  return w1_marginal(p, q);
}

PointSet states_at(const Ensemble& ensemble, std::size_t step, std::size_t n_coords) {
  PointSet out;
  for (const auto& path : ensemble.paths) {
    if (step >= path.size()) continue;
    const auto x = path.state(step);
    out.push(n_coords == 0 ? x : x.subspan(0, n_coords));
  }
  return out;
}

PointSet sample_model_marginal(const BridgeModel& model, double t, std::size_t n, Rng& rng) {
  const auto ms = model.marginals(t);
  const auto w = model.weights();
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  PointSet out;
  out.dim = model.dim();
  out.data.reserve(n * model.dim());
  std::vector<double> eps(model.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = model.K() == 1 ? 0 : pick(rng);
    fill_standard_normal(rng, eps);
    out.push(sample_marginal(ms[k], eps));
  }
  return out;
}

std::vector<W1Point> w1_series(const BridgeModel& model, const Ensemble& reference,
                               std::size_t n_steps, std::size_t stride, std::size_t n_samples,
                               std::uint64_t seed) {
  if (n_steps < 1 || stride < 1 || n_samples < 1) {
    throw std::invalid_argument("w1_series: n_steps, stride and n_samples must be >= 1");
  }
  const double T = model.boundary().T;
  std::vector<std::size_t> steps;
  for (std::size_t k = 0; k < n_steps; k += stride) steps.push_back(k);
  steps.push_back(n_steps);
  std::vector<W1Point> out;
  for (std::size_t k : steps) {
    Rng rng = stream_rng(seed, k);
    const double t = k == n_steps ? T : T * static_cast<double>(k) / static_cast<double>(n_steps);
    PointSet ref = states_at(reference, k, model.dim());
    if (ref.size() == 0) throw std::invalid_argument("w1_series: reference has no states at step " + std::to_string(k));
    const std::size_t n = std::min(n_samples, ref.size());
    if (ref.size() > n) ref = subsample(ref, n, rng);
    const PointSet q = sample_model_marginal(model, t, n, rng);
    out.push_back({k, t, w1_marginal(q, ref)});
  }
  return out;
}

double mean_w1(const std::vector<W1Point>& series) {
  if (series.empty()) throw std::invalid_argument("mean_w1: empty series");
  double s = 0.0;
  for (const auto& p : series) s += p.w1;
  return s / static_cast<double>(series.size());
}

std::vector<int> channel_labels(const Ensemble& ensemble, std::size_t axis) {
  std::vector<int> out;
  out.reserve(ensemble.paths.size());
  for (const auto& path : ensemble.paths) {
    if (axis >= path.dim) throw std::invalid_argument("channel_labels: axis out of range");
    out.push_back(path.state(path.size() / 2)[axis] >= 0.0 ? 1 : -1);
  }
  return out;
}

MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean_std: empty input");
  MeanStd r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(s / static_cast<double>(v.size() - 1));
  }
  return r;
}

ReportRow ensemble_report(const Ensemble& ensemble, const Potential& p, const ReferenceDynamics& dyn,
                          const std::optional<StartDensity>& start,
                          std::span<const double> target) {
  if (ensemble.paths.empty()) throw std::invalid_argument("ensemble_report: empty ensemble");
  const std::size_t n = ensemble.paths.size();
  std::vector<double> emax(n), ll(n), end_err(n, 0.0);
  bool same_length = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& path = ensemble.paths[i];
    emax[i] = max_energy(path, p);
    ll[i] = path_log_likelihood(path, dyn, start);
    same_length = same_length && path.size() == ensemble.paths.front().size();
    if (!target.empty()) {
      end_err[i] = distance(path.back().subspan(0, target.size()), target);
    }
  }
  ReportRow row;
  row.method = ensemble.method;
  row.evaluations = ensemble.gradient_evaluations;
  const auto es = mean_std(emax);
  row.max_energy_mean = es.mean;
  row.max_energy_std = es.std;
  row.minmax_energy = *std::min_element(emax.begin(), emax.end());
  const auto ls = mean_std(ll);
  row.log_likelihood_mean = ls.mean;
  row.log_likelihood_std = ls.std;
  row.max_log_likelihood = *std::max_element(ll.begin(), ll.end());
  row.likelihood_comparable = same_length && ensemble.method != "mcmc_variable";
  row.n_paths = n;
  row.failures = ensemble.failures.size();
  row.endpoint_error_mean = mean_std(end_err).mean;
  return row;
}

const std::array<std::string, 6>& table1_header() {
  static const std::array<std::string, 6> h = {"Method",        "# Evaluations",
                                               "Max Energy",    "MinMax Energy",
                                               "Log-Likelihood", "Max Log-Likelihood"};
  return h;
}

std::string ReportTable::to_csv() const {
  std::ostringstream os;
  os << "method,evaluations,max_energy_mean,max_energy_std,minmax_energy,log_likelihood_mean,"
        "log_likelihood_std,max_log_likelihood,likelihood_comparable,n_paths,failures,"
        "endpoint_error_mean\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.evaluations << ',' << fmt(r.max_energy_mean) << ','
       << fmt(r.max_energy_std) << ',' << fmt(r.minmax_energy) << ',' << fmt(r.log_likelihood_mean)
       << ',' << fmt(r.log_likelihood_std) << ',' << fmt(r.max_log_likelihood) << ','
       << (r.likelihood_comparable ? 1 : 0) << ',' << r.n_paths << ',' << r.failures << ','
       << fmt(r.endpoint_error_mean) << '\n';
  }
  return os.str();
}

std::string ReportTable::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = "doob-bridge/report";
  j["schema_version"] = kReportSchemaVersion;
  j["potential"] = potential;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json o;
    o["method"] = r.method;
    o["evaluations"] = r.evaluations;
    o["max_energy_mean"] = r.max_energy_mean;
    o["max_energy_std"] = r.max_energy_std;
    o["minmax_energy"] = r.minmax_energy;
    o["log_likelihood_mean"] = r.log_likelihood_mean;
    o["log_likelihood_std"] = r.log_likelihood_std;
    o["max_log_likelihood"] = r.max_log_likelihood;
    o["likelihood_comparable"] = r.likelihood_comparable;
    o["n_paths"] = r.n_paths;
    o["failures"] = r.failures;
    o["endpoint_error_mean"] = r.endpoint_error_mean;
    j["rows"].push_back(std::move(o));
  }
  return j.dump(2) + "\n";
}

ReportTable ReportTable::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("schema").get<std::string>() != "doob-bridge/report") {
    throw std::runtime_error("report: unexpected schema tag");
  }
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
    throw std::runtime_error("report: unsupported schema version");
  }
  ReportTable t;
  t.potential = j.at("potential").get<std::string>();
  for (const auto& o : j.at("rows")) {
    ReportRow r;
    r.method = o.at("method").get<std::string>();
    r.evaluations = o.at("evaluations").get<std::uint64_t>();
    r.max_energy_mean = o.at("max_energy_mean").get<double>();
    r.max_energy_std = o.at("max_energy_std").get<double>();
    r.minmax_energy = o.at("minmax_energy").get<double>();
    r.log_likelihood_mean = o.at("log_likelihood_mean").get<double>();
    r.log_likelihood_std = o.at("log_likelihood_std").get<double>();
    r.max_log_likelihood = o.at("max_log_likelihood").get<double>();
    r.likelihood_comparable = o.at("likelihood_comparable").get<bool>();
    r.n_paths = o.at("n_paths").get<std::size_t>();
    r.failures = o.at("failures").get<std::size_t>();
    r.endpoint_error_mean = o.at("endpoint_error_mean").get<double>();
    t.rows.push_back(std::move(r));
  }
  return t;
}

std::string ReportTable::to_markdown() const {
  std::ostringstream os;
  const auto& h = table1_header();
  os << '|';
  for (const auto& c : h) os << ' ' << c << " |";
  os << "\n|";
  for (std::size_t i = 0; i < h.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& r : rows) {
    os << "| " << r.method << " | " << r.evaluations << " | " << fmt_short(r.max_energy_mean)
       << " ± " << fmt_short(r.max_energy_std) << " | " << fmt_short(r.minmax_energy) << " | ";
    if (r.likelihood_comparable) {
      os << fmt_short(r.log_likelihood_mean) << " ± " << fmt_short(r.log_likelihood_std) << " | "
         << fmt_short(r.max_log_likelihood) << " |\n";
    } else {
      os << "- | - |\n";
    }
  }
  return os.str();
}

}  // namespace doob
