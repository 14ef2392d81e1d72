#include "doob/experiment.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "doob/io.hpp"
#include "doob/sampler.hpp"

namespace doob {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::sample: return "sample";
    case ExperimentKind::tps_baseline: return "tps_baseline";
    case ExperimentKind::compare: return "compare";
    case ExperimentKind::w1_study: return "w1_study";
    case ExperimentKind::spline_ablation: return "spline_ablation";
  }
  return "?";
}

namespace {

// ---------------------------------------------------------------------------
// Config validation

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(display(), "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = get(key);
    if (v == nullptr) throw SchemaError(field(key), "required field missing");
    return *v;
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    const json* v = def ? get(key) : &require(key);
    if (v == nullptr) return *def;
    if (!v->is_number()) throw SchemaError(field(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw SchemaError(field(key), "expected a finite number");
    return d;
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) {
    const double d = number(key, def);
    if (!(d > 0.0)) throw SchemaError(field(key), "must be > 0");
    return d;
  }

  double non_negative(const std::string& key, double def) {
    const double d = number(key, def);
    if (!(d >= 0.0)) throw SchemaError(field(key), "must be >= 0");
    return d;
  }

  std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> def = std::nullopt,
                        std::uint64_t min = 0) {
    const json* v = def ? get(key) : &require(key);
    if (v == nullptr) return *def;
    if (!v->is_number_integer() || (v->is_number_integer() && v->get<std::int64_t>() < 0 &&
                                    !v->is_number_unsigned())) {
      throw SchemaError(field(key), "expected a non-negative integer");
    }
    const auto n = v->get<std::uint64_t>();
    if (n < min) throw SchemaError(field(key), "must be >= " + std::to_string(min));
    return n;
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
    const json* v = def ? get(key) : &require(key);
    if (v == nullptr) return *def;
    if (!v->is_string()) throw SchemaError(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::string choice(const std::string& key, const std::vector<std::string>& allowed,
                     std::optional<std::string> def = std::nullopt) {
    const auto s = string(key, def);
    for (const auto& a : allowed) {
      if (a == s) return s;
    }
    std::string msg = "expected one of";
    for (const auto& a : allowed) msg += " '" + a + "'";
    throw SchemaError(field(key), msg + ", got '" + s + "'");
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = get(key);
    if (v == nullptr) return def;
    if (!v->is_boolean()) throw SchemaError(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::vector<double> numbers(const std::string& key, bool required = true) {
    const json* v = required ? &require(key) : get(key);
    if (v == nullptr) return {};
    if (!v->is_array()) throw SchemaError(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      if (!e.is_number() || !std::isfinite(e.get<double>())) {
        throw SchemaError(field(key) + "[" + std::to_string(i) + "]", "expected a finite number");
      }
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def) {
    const json* v = get(key);
    if (v == nullptr) return def;
    if (!v->is_array() || v->empty()) throw SchemaError(field(key), "expected a non-empty array");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0) {
        throw SchemaError(field(key) + "[" + std::to_string(i) + "]", "expected a positive integer");
      }
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> def) {
    const json* v = get(key);
    if (v == nullptr) return def;
    if (!v->is_array() || v->empty()) throw SchemaError(field(key), "expected a non-empty array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) {
        throw SchemaError(field(key) + "[" + std::to_string(i) + "]", "expected a string");
      }
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  // Nested object; an absent key yields an empty object.
  Reader sub(const std::string& key, bool required = false) {
    const json* v = required ? &require(key) : get(key);
    static const json empty = json::object();
    return Reader(v == nullptr ? empty : *v, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw SchemaError(field(it.key()), "unknown field");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "$" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ExperimentKind kind_from_string(const std::string& s) {
  if (s == "train") return ExperimentKind::train;
  if (s == "sample") return ExperimentKind::sample;
  if (s == "tps_baseline") return ExperimentKind::tps_baseline;
  if (s == "compare") return ExperimentKind::compare;
  if (s == "w1_study") return ExperimentKind::w1_study;
  return ExperimentKind::spline_ablation;
}

const std::vector<std::string> kBackendTags = {"mlp", "spline_linear", "spline_cubic"};

void parse_dynamics(Reader r, DynamicsSpec& d, std::size_t dim) {
  d.type = r.choice("type", {"first_order", "overdamped_langevin"}, std::string("first_order"));
  if (d.type == "first_order") {
    d.xi = r.positive("xi");
  } else {
    d.gamma = r.positive("gamma");
    d.kT = r.positive("kT");
    d.mass = r.numbers("mass");
    if (d.mass.size() != dim) {
      throw SchemaError(r.field("mass"), "expected " + std::to_string(dim) + " entries");
    }
    for (std::size_t i = 0; i < dim; ++i) {
      if (!(d.mass[i] > 0.0)) {
        throw SchemaError(r.field("mass") + "[" + std::to_string(i) + "]", "must be > 0");
      }
    }
  }
  r.finish();
}

void parse_boundary(Reader r, BoundaryPair& b, std::size_t dim) {
  b.A = r.numbers("A");
  b.B = r.numbers("B");
  if (b.A.size() != dim) throw SchemaError(r.field("A"), "expected " + std::to_string(dim) + " entries");
  if (b.B.size() != dim) throw SchemaError(r.field("B"), "expected " + std::to_string(dim) + " entries");
  b.T = r.positive("T");
  b.sigma_min_sq = r.positive("sigma_min_sq", 1e-4);
  r.finish();
}

void parse_model(Reader r, BackendSpec& b, MixtureSpec& m) {
  b.tag = r.choice("backend", kBackendTags, std::string("mlp"));
  b.hidden = r.counts("hidden", b.hidden);
  b.activation = activation_from_string(r.choice("activation", {"swish", "relu"}, std::string("swish")));
  b.output_scale = r.positive("output_scale", b.output_scale);
  b.knots = r.integer("knots", b.knots, 2);
  m.K = r.integer("K", 1, 1);
  m.tau = r.positive("tau", 1.0);
  m.freeze_logits = r.boolean("freeze_logits", false);
  m.initial_logits = r.numbers("logits", false);
  if (!m.initial_logits.empty() && m.initial_logits.size() != m.K) {
    throw SchemaError(r.field("logits"), "expected K entries");
  }
  m.init_spread = r.non_negative("init_spread", 0.0);
  r.finish();
}

void parse_training(Reader r, TrainingSpec& t) {
  t.iterations = r.integer("iterations", t.iterations, 1);
  t.batch_size = r.integer("batch_size", t.batch_size, 1);
  t.learning_rate = r.non_negative("learning_rate", t.learning_rate);
  t.lr_schedule = lr_schedule_from_string(r.choice("lr_schedule", {"constant", "cosine"}, std::string("constant")));
  t.grad_clip = r.non_negative("grad_clip", 0.0);
  if (r.has("t_margin")) t.t_margin = r.non_negative("t_margin", 0.0);
  t.ema_alpha = r.positive("ema_alpha", t.ema_alpha);
  if (t.ema_alpha > 1.0) throw SchemaError(r.field("ema_alpha"), "must be <= 1");
  t.chunk_size = r.integer("chunk_size", t.chunk_size, 1);
  r.finish();
}

void parse_sampling(Reader r, SamplingSpec& s) {
  s.n_paths = r.integer("n_paths", s.n_paths, 1);
  s.write_csv = r.boolean("write_csv", true);
  r.finish();
}

void parse_tps(Reader r, TpsSpec& t) {
  t.mode = r.choice("mode", {"fixed", "variable"}, std::string("variable")) == "fixed"
               ? TpsMode::fixed_length
               : TpsMode::variable_length;
  t.radius = r.positive("radius", t.radius);
  t.n_paths = r.integer("n_paths", t.n_paths, 1);
  t.max_steps = r.integer("max_steps", t.max_steps, 1);
  t.warmup_fraction = r.non_negative("warmup_fraction", t.warmup_fraction);
  t.init_noise_multiplier = r.positive("init_noise_multiplier", t.init_noise_multiplier);
  t.init_attempts = r.integer("init_attempts", t.init_attempts, 1);
  t.max_proposals = r.integer("max_proposals", t.max_proposals, 1);
  r.finish();
}

void parse_w1(Reader r, W1Spec& w, const fs::path& base) {
  w.n_samples = r.integer("n_samples", w.n_samples, 1);
  w.stride = r.integer("stride", w.stride, 1);
  const auto ref = r.string("reference", std::string());
  if (!ref.empty()) w.reference = base / ref;
  r.finish();
}

void parse_ablation(Reader r, AblationSpec& a) {
  a.backends = r.strings("backends", a.backends);
  for (std::size_t i = 0; i < a.backends.size(); ++i) {
    bool ok = false;
    for (const auto& t : kBackendTags) ok = ok || t == a.backends[i];
    if (!ok) throw SchemaError(r.field("backends") + "[" + std::to_string(i) + "]", "unknown backend");
  }
  Reader lr = r.sub("learning_rates");
  for (const auto& b : kBackendTags) {
    if (lr.has(b)) a.learning_rates[b] = lr.positive(b);
  }
  lr.finish();
  r.finish();
}

// ---------------------------------------------------------------------------
// Artifacts

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Run {
  ExperimentConfig cfg;
  RunSeeds seeds{};
  fs::path dir;
  std::ostream* log = nullptr;
  json manifest;
  std::shared_ptr<Potential> potential;
  std::shared_ptr<const ReferenceDynamics> dynamics;
  std::uint64_t training_evals = 0;
  std::uint64_t tps_evals = 0;
  ReportTable report;

  void artifact(const std::string& name) { manifest["artifacts"].push_back(name); }

  void save_manifest(const std::string& status, const std::string& error = {}) {
    manifest["status"] = status;
    if (!error.empty()) manifest["error"] = error;
    if (potential) {
      const auto c = potential->counters();
      manifest["counter_delta"] = {{"gradient", c.gradient}, {"energy", c.energy}};
    }
    manifest["evaluations"] = {{"training", training_evals},
                               {"tps", tps_evals},
                               {"total", training_evals + tps_evals}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  }
};

StartDensity start_density(const BoundaryPair& b) { return StartDensity{b.A, b.sigma_min_sq}; }

// Report metrics run on a separate potential copy so the run's counters only see the methods.
ReportRow report_row(Run& run, const Ensemble& e) {
  const auto probe_pot = run.potential->fresh_copy();
  const auto probe = run.dynamics->with_potential(probe_pot);
  return ensemble_report(e, *probe_pot, probe, start_density(run.cfg.boundary), run.cfg.boundary.B);
}

void write_report(Run& run) {
  run.report.potential = run.cfg.potential;
  write_text(run.dir / "report.csv", run.report.to_csv());
  write_text(run.dir / "report.json", run.report.to_json());
  write_text(run.dir / "report.md", run.report.to_markdown());
  run.artifact("report.csv");
  run.artifact("report.json");
  run.artifact("report.md");
}

void write_ensemble(Run& run, const Ensemble& e, const std::string& stem, bool csv) {
  write_ensemble_binary(e, run.dir / (stem + ".bin"));
  run.artifact(stem + ".bin");
  if (csv) {
    write_ensemble_csv(e, run.dir / (stem + ".csv"));
    run.artifact(stem + ".csv");
  }
  if (!e.failures.empty()) {
    std::ostringstream os;
    os << "path_id,step,message\n";
    for (const auto& f : e.failures) os << f.path_id << ',' << f.step << ",\"" << f.message << "\"\n";
    write_text(run.dir / (stem + "_failures.csv"), os.str());
    run.artifact(stem + "_failures.csv");
  }
}

void write_channels(Run& run, const Ensemble& e) {
  if (run.cfg.potential != "dual_channel" || e.paths.empty()) return;
  const auto labels = channel_labels(e, 1);
  std::ostringstream os;
  os << "path_id,midpoint_y,channel\n" << std::setprecision(17);
  std::size_t up = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = e.paths[i];
    os << i << ',' << p.state(p.size() / 2)[1] << ',' << labels[i] << '\n';
    up += labels[i] > 0 ? 1 : 0;
  }
  write_text(run.dir / "channels.csv", os.str());
  run.artifact("channels.csv");
  const double n = static_cast<double>(labels.size());
  run.manifest["channels"] = {{"positive_fraction", static_cast<double>(up) / n},
                              {"negative_fraction", static_cast<double>(labels.size() - up) / n}};
}

BridgeModel train_model(Run& run, const BackendSpec& backend, double lr, const std::string& suffix) {
  TrainConfig tc = make_train_config(run.cfg, run.dynamics);
  tc.backend = backend;
  tc.adam.learning_rate = lr;
  tc.seed = run.seeds.train;
  const std::size_t every = std::max<std::size_t>(1, tc.iterations / 10);
  auto on_step = [&](std::size_t step, double loss, double ema) {
    if ((step + 1) % every == 0 || step + 1 == tc.iterations) {
      *run.log << "[train" << suffix << "] step " << step + 1 << "/" << tc.iterations
               << " loss " << loss << " ema " << ema << "\n";
    }
  };
  try {
    auto [model, rep] = train(tc, on_step);
    run.training_evals += rep.gradient_evaluations;
    save_checkpoint(model, run.dir / ("checkpoint" + suffix + ".json"));
    write_loss_history(rep, run.dir / ("loss_history" + suffix + ".csv"));
    run.artifact("checkpoint" + suffix + ".json");
    run.artifact("loss_history" + suffix + ".csv");
    json t = {{"backend", backend.tag},
              {"iterations", tc.iterations},
              {"batch_size", tc.batch_size},
              {"learning_rate", lr},
              {"gradient_evaluations", rep.gradient_evaluations},
              {"wall_time_s", rep.wall_time_s},
              {"final_ema_loss", rep.ema_loss.back()},
              {"fallbacks", rep.fallbacks}};
    run.manifest["training" + suffix] = t;
    return model;
  } catch (const TrainingError& e) {
    save_checkpoint(e.partial_model(), run.dir / ("checkpoint" + suffix + "_partial.json"));
    run.artifact("checkpoint" + suffix + "_partial.json");
    // Evaluations spent before the failure still count.
    run.training_evals = run.potential->counters().gradient - run.tps_evals;
    throw;
  }
}

Ensemble sample_model(Run& run, const BridgeModel& model) {
  Ensemble e = generate_ensemble(model, run.cfg.sampling.n_paths, run.cfg.steps, run.seeds.sample);
  e.gradient_evaluations = run.training_evals;
  *run.log << "[sample] " << e.paths.size() << " paths, " << e.failures.size() << " failures\n";
  return e;
}

Ensemble run_shooting(Run& run, TpsMode mode, const std::string& stem) {
  TpsConfig tc = make_tps_config(run.cfg, run.dynamics);
  tc.mode = mode;
  const auto before = run.potential->counters().gradient;
  TpsResult r;
  try {
    r = run_tps(tc);
  } catch (...) {
    run.tps_evals += run.potential->counters().gradient - before;
    throw;
  }
  run.tps_evals += r.gradient_evaluations;
  *run.log << "[tps] " << r.ensemble.method << ": " << r.ensemble.paths.size() << " paths, "
           << r.gradient_evaluations << " evaluations, acceptance " << r.acceptance_rate << "\n";
  std::ostringstream chain;
  chain << "index,log_likelihood\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.chain_log_likelihood.size(); ++i) {
    chain << i << ',' << r.chain_log_likelihood[i] << '\n';
  }
  write_text(run.dir / (stem + "_chain.csv"), chain.str());
  std::ostringstream acf;
  acf << "lag,autocorrelation\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.log_likelihood_autocorrelation.size(); ++i) {
    acf << i << ',' << r.log_likelihood_autocorrelation[i] << '\n';
  }
  write_text(run.dir / (stem + "_autocorrelation.csv"), acf.str());
  run.artifact(stem + "_chain.csv");
  run.artifact(stem + "_autocorrelation.csv");
  run.manifest[stem] = {{"method", r.ensemble.method},
                        {"gradient_evaluations", r.gradient_evaluations},
                        {"proposals", r.proposals},
                        {"accepted", r.accepted},
                        {"acceptance_rate", r.acceptance_rate},
                        {"seed", tc.seed}};
  return std::move(r.ensemble);
}

Ensemble reference_ensemble(Run& run) {
  if (!run.cfg.w1.reference.empty()) {
    *run.log << "[w1] reference " << run.cfg.w1.reference.string() << "\n";
    return read_ensemble_binary(run.cfg.w1.reference);
  }
  Ensemble ref = run_shooting(run, TpsMode::fixed_length, "reference");
  write_ensemble(run, ref, "reference", false);
  run.report.rows.push_back(report_row(run, ref));
  return ref;
}

void write_w1_series(Run& run, const std::vector<std::string>& names,
                     const std::vector<std::vector<W1Point>>& series) {
  std::ostringstream os;
  os << "step,t";
  for (const auto& n : names) os << ",w1_" << n;
  os << '\n';
  for (std::size_t i = 0; i < series.front().size(); ++i) {
    os << series.front()[i].step << ',' << fmt(series.front()[i].t);
    for (const auto& s : series) os << ',' << fmt(s[i].w1);
    os << '\n';
  }
  write_text(run.dir / "w1_series.csv", os.str());
  run.artifact("w1_series.csv");
}

void execute(Run& run) {
  const auto& cfg = run.cfg;
  switch (cfg.kind) {
    case ExperimentKind::train: {
      BridgeModel model = train_model(run, cfg.backend, cfg.training.learning_rate, "");
      Ensemble e = sample_model(run, model);
      write_ensemble(run, e, "ensemble", cfg.sampling.write_csv);
      write_channels(run, e);
      run.report.rows.push_back(report_row(run, e));
      write_report(run);
      break;
    }
    case ExperimentKind::sample: {
      BridgeModel model = load_checkpoint(cfg.checkpoint);
      Ensemble e = sample_model(run, model);
      write_ensemble(run, e, "ensemble", cfg.sampling.write_csv);
      write_channels(run, e);
      run.report.rows.push_back(report_row(run, e));
      write_report(run);
      break;
    }
    case ExperimentKind::tps_baseline: {
      Ensemble e = run_shooting(run, cfg.tps.mode, "tps");
      write_ensemble(run, e, "ensemble", cfg.sampling.write_csv);
      write_channels(run, e);
      run.report.rows.push_back(report_row(run, e));
      write_report(run);
      break;
    }
    case ExperimentKind::w1_study: {
      const Ensemble ref = reference_ensemble(run);
      BridgeModel model = cfg.checkpoint.empty()
                              ? train_model(run, cfg.backend, cfg.training.learning_rate, "")
                              : load_checkpoint(cfg.checkpoint);
      Ensemble e = sample_model(run, model);
      write_ensemble(run, e, "ensemble", cfg.sampling.write_csv);
      run.report.rows.push_back(report_row(run, e));
      const auto series = w1_series(model, ref, cfg.steps, cfg.w1.stride, cfg.w1.n_samples, run.seeds.w1);
      write_w1_series(run, {model.backend_tag()}, {series});
      run.manifest["w1"] = {{"mean", mean_w1(series)},
                            {"first", series.front().w1},
                            {"last", series.back().w1},
                            {"n_samples", cfg.w1.n_samples},
                            {"stride", cfg.w1.stride}};
      *run.log << "[w1] mean " << mean_w1(series) << "\n";
      write_report(run);
      break;
    }
    case ExperimentKind::spline_ablation: {
      const Ensemble ref = reference_ensemble(run);
      std::vector<std::vector<W1Point>> all;
      std::ostringstream summary;
      summary << "backend,learning_rate,mean_w1,final_ema_loss,gradient_evaluations\n";
      for (const auto& tag : cfg.ablation.backends) {
        BackendSpec spec = cfg.backend;
        spec.tag = tag;
        const auto it = cfg.ablation.learning_rates.find(tag);
        const double lr = it == cfg.ablation.learning_rates.end() ? cfg.training.learning_rate : it->second;
        const auto before = run.training_evals;
        BridgeModel model = train_model(run, spec, lr, "_" + tag);
        auto series = w1_series(model, ref, cfg.steps, cfg.w1.stride, cfg.w1.n_samples, run.seeds.w1);
        const double m = mean_w1(series);
        *run.log << "[ablation] " << tag << " mean W1 " << m << "\n";
        summary << tag << ',' << fmt(lr) << ',' << fmt(m) << ','
                << fmt(run.manifest["training_" + tag]["final_ema_loss"].get<double>()) << ','
                << run.training_evals - before << '\n';
        run.manifest["ablation"][tag] = {{"mean_w1", m}, {"learning_rate", lr}};
        all.push_back(std::move(series));
      }
      write_w1_series(run, cfg.ablation.backends, all);
      write_text(run.dir / "ablation.csv", summary.str());
      run.artifact("ablation.csv");
      write_report(run);
      break;
    }
    case ExperimentKind::compare: {
      run.report = compare_dirs(cfg.dirs);
      write_report(run);
      break;
    }
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  ExperimentConfig cfg;
  cfg.raw = doc;
  Reader r(doc, "");
  cfg.kind = kind_from_string(r.choice(
      "kind", {"train", "sample", "tps_baseline", "compare", "w1_study", "spline_ablation"}));
  cfg.name = r.string("name");
  if (cfg.name.empty() || cfg.name.find('/') != std::string::npos) {
    throw SchemaError("name", "must be a non-empty name without '/'");
  }
  cfg.seed = r.integer("seed", 0);

  if (cfg.kind == ExperimentKind::compare) {
    const json& dirs = r.require("dirs");
    if (!dirs.is_array() || dirs.empty()) throw SchemaError("dirs", "expected a non-empty array");
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      if (!dirs[i].is_string()) throw SchemaError("dirs[" + std::to_string(i) + "]", "expected a string");
      cfg.dirs.push_back(base_dir / dirs[i].get<std::string>());
    }
    r.finish();
    return cfg;
  }

  cfg.potential = r.string("potential");
  bool known = false;
  for (const auto& n : potential_names()) known = known || n == cfg.potential;
  if (!known) throw SchemaError("potential", "unknown potential '" + cfg.potential + "'");
  const std::size_t dim = make_potential(cfg.potential)->dim();
  parse_dynamics(r.sub("dynamics", true), cfg.dynamics, dim);
  cfg.steps = r.integer("steps", std::nullopt, 1);

  if (cfg.kind == ExperimentKind::sample) {
    cfg.checkpoint = base_dir / r.string("checkpoint");
    parse_sampling(r.sub("sampling"), cfg.sampling);
    r.finish();
    return cfg;
  }

  parse_boundary(r.sub("boundary", true), cfg.boundary, dim);
  const bool trains = cfg.kind == ExperimentKind::train || cfg.kind == ExperimentKind::w1_study ||
                      cfg.kind == ExperimentKind::spline_ablation;
  const bool shoots = cfg.kind != ExperimentKind::train;
  if (trains) {
    parse_model(r.sub("model"), cfg.backend, cfg.mixture);
    parse_training(r.sub("training"), cfg.training);
    if (cfg.training.t_margin && 2.0 * *cfg.training.t_margin >= cfg.boundary.T) {
      throw SchemaError("training.t_margin", "must be < T/2");
    }
  }
  parse_sampling(r.sub("sampling"), cfg.sampling);
  if (shoots) parse_tps(r.sub("tps"), cfg.tps);
  if (cfg.kind == ExperimentKind::w1_study || cfg.kind == ExperimentKind::spline_ablation) {
    parse_w1(r.sub("w1"), cfg.w1, base_dir);
    if (cfg.kind == ExperimentKind::w1_study && r.has("checkpoint")) {
      cfg.checkpoint = base_dir / r.string("checkpoint");
    }
  }
  if (cfg.kind == ExperimentKind::spline_ablation) parse_ablation(r.sub("ablation"), cfg.ablation);
  r.finish();
  return cfg;
}

ExperimentConfig load_config(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw SchemaError("$", "cannot read config file '" + file.string() + "'");
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc, file.parent_path());
}

std::shared_ptr<const ReferenceDynamics> make_dynamics(const DynamicsSpec& spec, PotentialPtr potential) {
  if (spec.type == "first_order") {
    return std::make_shared<ReferenceDynamics>(first_order_toy(std::move(potential), spec.xi));
  }
  if (spec.type == "overdamped_langevin") {
    return std::make_shared<ReferenceDynamics>(
        overdamped_langevin(std::move(potential), spec.gamma, spec.mass, spec.kT));
  }
  throw std::invalid_argument("make_dynamics: unknown type '" + spec.type + "'");
}

TrainConfig make_train_config(const ExperimentConfig& cfg,
                              std::shared_ptr<const ReferenceDynamics> dynamics) {
  TrainConfig tc;
  tc.iterations = cfg.training.iterations;
  tc.batch_size = cfg.training.batch_size;
  tc.adam.learning_rate = cfg.training.learning_rate;
  tc.lr_schedule = cfg.training.lr_schedule;
  tc.seed = derive_seeds(cfg.seed).train;
  tc.backend = cfg.backend;
  tc.mixture = cfg.mixture;
  tc.boundary = cfg.boundary;
  tc.dynamics = std::move(dynamics);
  tc.t_margin = cfg.training.t_margin.value_or(0.5 * cfg.dt());
  tc.grad_clip = cfg.training.grad_clip;
  tc.ema_alpha = cfg.training.ema_alpha;
  tc.chunk_size = cfg.training.chunk_size;
  return tc;
}

TpsConfig make_tps_config(const ExperimentConfig& cfg, std::shared_ptr<const ReferenceDynamics> dynamics) {
  TpsConfig tc;
  tc.mode = cfg.tps.mode;
  tc.n_steps = cfg.steps;
  tc.max_steps = cfg.tps.max_steps;
  tc.set_a = StateSet{cfg.boundary.A, cfg.tps.radius};
  tc.set_b = StateSet{cfg.boundary.B, cfg.tps.radius};
  tc.dynamics = std::move(dynamics);
  tc.dt = cfg.dt();
  tc.n_paths = cfg.tps.n_paths;
  tc.seed = derive_seeds(cfg.seed).tps;
  tc.warmup_fraction = cfg.tps.warmup_fraction;
  tc.init_noise_multiplier = cfg.tps.init_noise_multiplier;
  tc.init_attempts = cfg.tps.init_attempts;
  tc.max_proposals = cfg.tps.max_proposals;
  return tc;
}

RunSeeds derive_seeds(std::uint64_t seed) {
  return RunSeeds{seed, splitmix64(seed ^ 0x5a4d504c45ULL), splitmix64(seed ^ 0x545053ULL),
                  splitmix64(seed ^ 0x5731ULL)};
}

int run_experiment(const fs::path& config_file, const RunOptions& options, std::ostream& log,
                   std::ostream& err) {
  Run run;
  try {
    run.cfg = load_config(config_file);
  } catch (const SchemaError& e) {
    err << "config error at " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  }
  if (options.seed) run.cfg.seed = *options.seed;
  if (options.threads) {
    if (*options.threads < 1) {
      err << "--threads must be >= 1\n";
      return 2;
    }
    omp_set_num_threads(*options.threads);
  }
  run.seeds = derive_seeds(run.cfg.seed);
  run.dir = options.out.value_or(fs::path("runs") / run.cfg.name);
  run.log = &log;

  try {
    fs::create_directories(run.dir);
    json echo = run.cfg.raw;
    echo["seed"] = run.cfg.seed;
    write_text(run.dir / "config.json", echo.dump(2) + "\n");
    run.manifest["name"] = run.cfg.name;
    run.manifest["kind"] = to_string(run.cfg.kind);
    run.manifest["seeds"] = {{"run", run.cfg.seed},
                             {"train", run.seeds.train},
                             {"sample", run.seeds.sample},
                             {"tps", run.seeds.tps},
                             {"w1", run.seeds.w1}};
    run.manifest["threads"] = omp_get_max_threads();
    run.manifest["artifacts"] = json::array({"config.json", "manifest.json"});
    run.manifest["formats"] = {{"checkpoint", kCheckpointVersion},
                               {"ensemble_binary", kEnsembleBinaryVersion},
                               {"report", kReportSchemaVersion}};
    if (run.cfg.kind != ExperimentKind::compare) {
      run.potential = make_potential(run.cfg.potential);
      run.dynamics = make_dynamics(run.cfg.dynamics, run.potential);
      run.manifest["potential"] = run.cfg.potential;
      run.manifest["steps"] = run.cfg.steps;
    }
    if (run.cfg.kind == ExperimentKind::sample) {
      run.cfg.boundary = load_checkpoint(run.cfg.checkpoint).boundary();
    }
    if (run.cfg.kind != ExperimentKind::compare) {
      const auto& b = run.cfg.boundary;
      run.manifest["boundary"] = {{"A", b.A}, {"B", b.B}, {"T", b.T}, {"sigma_min_sq", b.sigma_min_sq}};
    }
    const auto t0 = std::chrono::steady_clock::now();
    execute(run);
    run.manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.save_manifest("ok");
    log << "[done] artifacts in " << run.dir.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << "\n";
    try {
      run.save_manifest("failed", e.what());
    } catch (const std::exception& inner) {
      err << "could not write manifest: " << inner.what() << "\n";
    }
    return 1;
  }
}

ReportTable compare_dirs(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw std::runtime_error("compare: no directories given");
  ReportTable merged;
  json key;
  for (const auto& d : dirs) {
    const json manifest = json::parse(read_text(d / "manifest.json"));
    if (manifest.value("status", "") != "ok") {
      throw std::runtime_error("compare: run in '" + d.string() + "' did not complete");
    }
    const json this_key = {{"potential", manifest.at("potential")}, {"boundary", manifest.at("boundary")}};
    if (key.is_null()) {
      key = this_key;
    } else if (key != this_key) {
      throw std::runtime_error("compare: '" + d.string() +
                               "' has a different potential or boundary than '" + dirs.front().string() + "'");
    }
    const auto table = ReportTable::from_json(read_text(d / "report.json"));
    merged.potential = table.potential;
    for (const auto& row : table.rows) {
      bool dup = false;
      for (const auto& r : merged.rows) dup = dup || r.method == row.method;
      if (dup) throw std::runtime_error("compare: method '" + row.method + "' appears twice");
      merged.rows.push_back(row);
    }
  }
  return merged;
}

int run_compare(const std::vector<fs::path>& dirs, const std::optional<fs::path>& out,
                std::ostream& log, std::ostream& err) {
  try {
    const auto table = compare_dirs(dirs);
    log << table.to_markdown();
    if (out) {
      write_text(*out / "report.csv", table.to_csv());
      write_text(*out / "report.json", table.to_json());
      write_text(*out / "report.md", table.to_markdown());
    }
    return 0;
  } catch (const std::exception& e) {
    err << "compare failed: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace doob
