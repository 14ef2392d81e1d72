#include "doob/io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace doob {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'D', 'B', 'E', 'N'};

json component_json(const PathBackend& c) {
  json j;
  j["tag"] = c.tag();
  if (const auto* m = dynamic_cast<const MlpBackend*>(&c)) {
    j["widths"] = m->net().widths();
    j["activation"] = to_string(m->net().activation());
  } else if (const auto* s = dynamic_cast<const SplineBackend*>(&c)) {
    j["knots"] = s->knots();
  } else {
    throw std::runtime_error("checkpoint: unknown backend type");
  }
  j["params"] = std::vector<double>(c.params().begin(), c.params().end());
  return j;
}

std::unique_ptr<PathBackend> component_from_json(const json& j, const BoundaryPair& bc) {
  const auto tag = j.at("tag").get<std::string>();
  const auto params = j.at("params").get<std::vector<double>>();
  std::unique_ptr<PathBackend> out;
  if (tag == "mlp") {
    Mlp net(j.at("widths").get<std::vector<std::size_t>>(),
            activation_from_string(j.at("activation").get<std::string>()));
    out = std::make_unique<MlpBackend>(std::move(net), bc.A, bc.B);
  } else if (tag == "spline_linear" || tag == "spline_cubic") {
    out = std::make_unique<SplineBackend>(
        tag == "spline_linear" ? SplineKind::linear : SplineKind::cubic, bc.dim(),
        j.at("knots").get<std::vector<double>>());
  } else {
    throw std::runtime_error("checkpoint: unknown backend tag '" + tag + "'");
  }
  if (params.size() != out->num_params()) {
    throw std::runtime_error("checkpoint: parameter count mismatch for '" + tag + "'");
  }
  out->set_params(params);
  return out;
}

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("ensemble binary: truncated file");
  return v;
}

std::ofstream open_out(const std::filesystem::path& file, bool binary = false) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  return os;
}

}  // namespace

std::string checkpoint_to_json(const BridgeModel& model) {
  json j;
  j["format"] = "doob-bridge/checkpoint";
  j["version"] = kCheckpointVersion;
  const auto& bc = model.boundary();
  j["boundary"] = {{"A", bc.A}, {"B", bc.B}, {"T", bc.T}, {"sigma_min_sq", bc.sigma_min_sq}};
  j["xi"] = std::vector<double>(model.xi_diag().begin(), model.xi_diag().end());
  j["logits"] = model.logits();
  j["tau"] = model.tau();
  j["freeze_logits"] = model.freeze_logits();
  j["components"] = json::array();
  for (std::size_t k = 0; k < model.K(); ++k) j["components"].push_back(component_json(model.component(k)));
  return j.dump(1) + "\n";
}

BridgeModel checkpoint_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format").get<std::string>() != "doob-bridge/checkpoint") {
    throw std::runtime_error("checkpoint: wrong format tag");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  BoundaryPair bc;
  const auto& b = j.at("boundary");
  bc.A = b.at("A").get<std::vector<double>>();
  bc.B = b.at("B").get<std::vector<double>>();
  bc.T = b.at("T").get<double>();
  bc.sigma_min_sq = b.at("sigma_min_sq").get<double>();
  std::vector<std::unique_ptr<PathBackend>> comps;
  for (const auto& c : j.at("components")) comps.push_back(component_from_json(c, bc));
  return BridgeModel(bc, j.at("xi").get<std::vector<double>>(), std::move(comps),
                     j.at("logits").get<std::vector<double>>(), j.at("tau").get<double>(),
                     j.at("freeze_logits").get<bool>());
}

void save_checkpoint(const BridgeModel& model, const std::filesystem::path& file) {
  write_text(file, checkpoint_to_json(model));
}

BridgeModel load_checkpoint(const std::filesystem::path& file) {
  return checkpoint_from_json(read_text(file));
}

void write_loss_history(const TrainReport& report, const std::filesystem::path& file) {
  auto os = open_out(file);
  os << std::setprecision(17) << "step,raw_loss,ema_loss\n";
  for (std::size_t i = 0; i < report.raw_loss.size(); ++i) {
    os << i << ',' << report.raw_loss[i] << ',' << report.ema_loss[i] << '\n';
  }
}

void write_ensemble_csv(const Ensemble& ensemble, const std::filesystem::path& file) {
  auto os = open_out(file);
  const std::size_t dim = ensemble.paths.empty() ? 0 : ensemble.paths.front().dim;
  os << "path_id,step,t";
  for (std::size_t i = 0; i < dim; ++i) os << ",x" << i;
  os << '\n' << std::setprecision(17);
  for (std::size_t p = 0; p < ensemble.paths.size(); ++p) {
    const auto& path = ensemble.paths[p];
    for (std::size_t k = 0; k < path.size(); ++k) {
      os << p << ',' << k << ',' << path.times[k];
      for (double v : path.state(k)) os << ',' << v;
      os << '\n';
    }
  }
}

void write_ensemble_binary(const Ensemble& ensemble, const std::filesystem::path& file) {
  auto os = open_out(file, true);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kEnsembleBinaryVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ensemble.method.size()));
  os.write(ensemble.method.data(), static_cast<std::streamsize>(ensemble.method.size()));
  put<std::uint64_t>(os, ensemble.seed);
  put<std::uint64_t>(os, ensemble.gradient_evaluations);
  const std::uint64_t dim = ensemble.paths.empty() ? 0 : ensemble.paths.front().dim;
  put<std::uint64_t>(os, dim);
  put<std::uint64_t>(os, ensemble.paths.size());
  for (const auto& path : ensemble.paths) {
    put<std::uint64_t>(os, path.size());
    os.write(reinterpret_cast<const char*>(path.times.data()),
             static_cast<std::streamsize>(path.times.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(path.states.data()),
             static_cast<std::streamsize>(path.states.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("ensemble binary: write failed");
}

Ensemble read_ensemble_binary(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + file.string() + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("ensemble binary: bad magic");
  }
  if (get<std::uint32_t>(is) != kEnsembleBinaryVersion) {
    throw std::runtime_error("ensemble binary: unsupported version");
  }
  Ensemble e;
  e.method.resize(get<std::uint32_t>(is));
  is.read(e.method.data(), static_cast<std::streamsize>(e.method.size()));
  e.seed = get<std::uint64_t>(is);
  e.gradient_evaluations = get<std::uint64_t>(is);
  const auto dim = get<std::uint64_t>(is);
  const auto n = get<std::uint64_t>(is);
  for (std::uint64_t p = 0; p < n; ++p) {
    Trajectory t;
    t.dim = dim;
    t.method_tag = e.method;
    t.seed = e.seed;
    const auto len = get<std::uint64_t>(is);
    t.times.resize(len);
    t.states.resize(len * dim);
    is.read(reinterpret_cast<char*>(t.times.data()), static_cast<std::streamsize>(len * sizeof(double)));
    is.read(reinterpret_cast<char*>(t.states.data()),
            static_cast<std::streamsize>(len * dim * sizeof(double)));
    if (!is) throw std::runtime_error("ensemble binary: truncated file");
    e.paths.push_back(std::move(t));
  }
  return e;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  auto os = open_out(file);
  os << text;
  if (!os) throw std::runtime_error("write failed: '" + file.string() + "'");
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open '" + file.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace doob
