#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "gdaip/fileio.hpp"
#include "gdaip/metrics.hpp"
#include "gdaip/rng.hpp"
#include "gdaip/synth.hpp"

namespace gdaip::synth {
namespace {

using nlohmann::ordered_json;

constexpr double kCoreFraction = 0.05;

std::vector<int> bfs_hops(const mesh::Adjacency& adj, int start) {
  std::vector<int> hops(adj.vertex_count(), -1);
  std::deque<int> queue{start};
  hops[start] = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int w : adj.neighbors(v))
      if (hops[w] < 0) {
        hops[w] = hops[v] + 1;
        queue.push_back(w);
      }
  }
  return hops;
}

std::string two_digits(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return buf;
}

std::uint64_t u(int i) { return static_cast<std::uint64_t>(i); }

}  // namespace

void SynthSpec::validate() const {
  if (subdivisions < 0 || subdivisions > 7) throw InputError("subdivisions must lie in [0, 7]");
  if (n_roi < 1 || n_source_subjects < 1 || n_subjects < 1 || sessions < 1 || signal_dim < 1)
    throw InputError("synthetic counts must be positive");
  if (t_len < 32) throw InputError("t_len must be at least 32");
  if (!(roi_noise >= 0.0) || !(vertex_noise >= 0.0)) throw InputError("noise levels must be non-negative");
  if (!(perturbation >= 0.0 && perturbation <= 1.0)) throw InputError("perturbation must lie in [0, 1]");
  if (shift.smoothing_width < 1 || shift.smoothing_width >= t_len / 4)
    throw InputError("smoothing width must lie in [1, T/4)");
  if (!(shift.noise_sigma >= 0.0)) throw InputError("shift noise must be non-negative");
  if (!(shift.scale > 0.0)) throw InputError("shift scale must be positive");
}

mesh::Parcellation planted_atlas(const mesh::Adjacency& adj, int n_roi, std::uint64_t seed) {
  const int n = static_cast<int>(adj.vertex_count());
  if (n_roi < 1 || n_roi > n) throw InputError("n_roi must lie in [1, vertex count]");
  if (!mesh::is_connected(adj)) throw InputError("planted atlas needs a connected mesh");

  Rng rng(derive_seed(seed, "planted_atlas"));
  std::vector<int> seeds{static_cast<int>(rng.index(n))};
  std::vector<int> nearest = bfs_hops(adj, seeds[0]);
  while (static_cast<int>(seeds.size()) < n_roi) {
    const int next = static_cast<int>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
    seeds.push_back(next);
    const auto hops = bfs_hops(adj, next);
    for (int v = 0; v < n; ++v) nearest[v] = std::min(nearest[v], hops[v]);
  }

  mesh::Parcellation atlas{std::vector<int>(n, -1), n_roi};
  std::deque<int> queue;
  for (int r = 0; r < n_roi; ++r) {
    atlas.labels[seeds[r]] = r;
    queue.push_back(seeds[r]);
  }
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int w : adj.neighbors(v))
      if (atlas.labels[w] < 0) {
        atlas.labels[w] = atlas.labels[v];
        queue.push_back(w);
      }
  }
  return atlas;
}

mesh::Parcellation perturb_atlas(const mesh::Parcellation& atlas, const mesh::Adjacency& adj, double p,
                                 std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("perturbation strength must lie in [0, 1]");
  mesh::validate(atlas, adj.vertex_count());
  const int rounds = static_cast<int>(std::ceil(10.0 * p - 1e-12));
  if (rounds == 0) return atlas;

  std::vector<char> locked(atlas.size(), 0);
  for (int v : mesh::core_region(adj, atlas, kCoreFraction).labeled) locked[v] = 1;

  Rng rng(derive_seed(seed, "perturb_atlas"));
  mesh::Parcellation current = atlas;
  std::vector<int> choices;
  for (int round = 0; round < rounds; ++round) {
    mesh::Parcellation next = current;
    for (int v : mesh::boundary_vertices(adj, current)) {
      if (locked[v] || !rng.bernoulli(p)) continue;
      choices.clear();
      for (int w : adj.neighbors(v))
        if (current.labels[w] != current.labels[v]) choices.push_back(current.labels[w]);
      std::sort(choices.begin(), choices.end());
      choices.erase(std::unique(choices.begin(), choices.end()), choices.end());
      next.labels[v] = choices[rng.index(choices.size())];
    }
    current = std::move(next);
  }
  return current;
}

connectome::TimeSeries simulate_bold(const mesh::Parcellation& atlas, const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  mesh::validate(atlas);
  const int t_len = spec.t_len;
  const int lo = 2, hi = t_len / 4;
  const int needed = spec.signal_dim * atlas.n_roi;
  if (hi - lo < needed)
    throw InputError("T=" + std::to_string(t_len) + " leaves " + std::to_string(hi - lo) +
                     " frequency bins for " + std::to_string(needed) + " sinusoids");

  Rng rng(derive_seed(seed, "simulate_bold"));
  std::vector<int> bins(hi - lo);
  for (int i = 0; i < hi - lo; ++i) bins[i] = lo + i;
  for (int i = 0; i < needed; ++i) std::swap(bins[i], bins[i + rng.index(bins.size() - i)]);

  Matrix latent(t_len, atlas.n_roi);
  for (int r = 0; r < atlas.n_roi; ++r) {
    latent.col(r).setZero();
    for (int k = 0; k < spec.signal_dim; ++k) {
      const double f = bins[r * spec.signal_dim + k];
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (int t = 0; t < t_len; ++t) latent(t, r) += std::sin(2.0 * std::numbers::pi * f * t / t_len + phase);
    }
    double e = 0.0;
    for (int t = 0; t < t_len; ++t) {
      e = kArCoefficient * e + spec.roi_noise * rng.normal();
      latent(t, r) += e;
    }
  }

  connectome::TimeSeries ts{Matrix(t_len, static_cast<Eigen::Index>(atlas.size()))};
  for (std::size_t v = 0; v < atlas.size(); ++v)
    for (int t = 0; t < t_len; ++t) {
      const double noise = spec.vertex_noise > 0.0 ? spec.vertex_noise * rng.normal() : 0.0;
      ts.data(t, v) = static_cast<float>(latent(t, atlas.labels[v]) + noise);
    }
  return ts;
}

connectome::TimeSeries domain_shift(const connectome::TimeSeries& ts, const DomainShift& shift, std::uint64_t seed) {
  connectome::validate(ts);
  const Eigen::Index t_len = ts.t_len();
  if (shift.smoothing_width < 1 || shift.smoothing_width >= t_len / 4.0)
    throw InputError("smoothing width must lie in [1, T/4)");
  connectome::TimeSeries out = ts;
  if (shift.smoothing_width > 1) {
    const int before = (shift.smoothing_width - 1) / 2;
    const int after = shift.smoothing_width - 1 - before;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Eigen::Index a = std::max<Eigen::Index>(0, t - before);
      const Eigen::Index b = std::min<Eigen::Index>(t_len - 1, t + after);
      out.data.row(t) = ts.data.middleRows(a, b - a + 1).colwise().mean();
    }
  }
  if (shift.noise_sigma > 0.0) {
    Rng rng(derive_seed(seed, "domain_shift"));
    for (Eigen::Index v = 0; v < out.vertex_count(); ++v)
      for (Eigen::Index t = 0; t < t_len; ++t) out.data(t, v) += shift.noise_sigma * rng.normal();
  }
  if (shift.scale != 1.0) out.data *= shift.scale;
  if (shift.smoothing_width > 1 || shift.noise_sigma > 0.0 || shift.scale != 1.0)
    out.data = out.data.cast<float>().cast<double>();
  return out;
}

Corpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  Corpus c;
  c.spec = spec;
  c.mesh = mesh::icosphere(spec.subdivisions);
  c.adjacency = mesh::build_adjacency(c.mesh);
  c.reference = planted_atlas(c.adjacency, spec.n_roi, derive_seed(spec.seed, "reference_atlas"));
  for (int s = 0; s < spec.n_source_subjects; ++s)
    c.source.push_back(simulate_bold(c.reference, spec, derive_seed(spec.seed, "source_bold", {u(s)})));
  for (int s = 0; s < spec.n_subjects; ++s) {
    TargetSubject target;
    target.planted = perturb_atlas(c.reference, c.adjacency, spec.perturbation,
                                   derive_seed(spec.seed, "planted", {u(s)}));
    target.planted_dice = eval::dice(target.planted, c.reference).mean;
    for (int k = 0; k < spec.sessions; ++k) {
      const auto raw = simulate_bold(target.planted, spec, derive_seed(spec.seed, "target_bold", {u(s), u(k)}));
      target.sessions.push_back(domain_shift(raw, spec.shift, derive_seed(spec.seed, "shift", {u(s), u(k)})));
    }
    c.targets.push_back(std::move(target));
  }
  return c;
}

std::filesystem::path source_series_path(const std::filesystem::path& dir, int subject) {
  return dir / "source" / ("sub-" + two_digits(subject) + ".tsf");
}

std::filesystem::path planted_path(const std::filesystem::path& dir, int subject) {
  return dir / "target" / ("sub-" + two_digits(subject)) / "planted.labels";
}

std::filesystem::path target_series_path(const std::filesystem::path& dir, int subject, int session) {
  return dir / "target" / ("sub-" + two_digits(subject)) / ("ses-" + std::to_string(session) + ".tsf");
}

std::string spec_to_json(const SynthSpec& s) {
  ordered_json j;
  j["subdivisions"] = s.subdivisions;
  j["n_roi"] = s.n_roi;
  j["n_source_subjects"] = s.n_source_subjects;
  j["n_subjects"] = s.n_subjects;
  j["sessions"] = s.sessions;
  j["t_len"] = s.t_len;
  j["signal_dim"] = s.signal_dim;
  j["roi_noise"] = s.roi_noise;
  j["vertex_noise"] = s.vertex_noise;
  j["perturbation"] = s.perturbation;
  j["shift"]["smoothing_width"] = s.shift.smoothing_width;
  j["shift"]["noise_sigma"] = s.shift.noise_sigma;
  j["shift"]["scale"] = s.shift.scale;
  j["seed"] = s.seed;
  return j.dump(2);
}

SynthSpec spec_from_json(const std::string& text) {
  SynthSpec s;
  try {
    const auto j = ordered_json::parse(text);
    s.subdivisions = j.at("subdivisions").get<int>();
    s.n_roi = j.at("n_roi").get<int>();
    s.n_source_subjects = j.at("n_source_subjects").get<int>();
    s.n_subjects = j.at("n_subjects").get<int>();
    s.sessions = j.at("sessions").get<int>();
    s.t_len = j.at("t_len").get<int>();
    s.signal_dim = j.at("signal_dim").get<int>();
    s.roi_noise = j.at("roi_noise").get<double>();
    s.vertex_noise = j.at("vertex_noise").get<double>();
    s.perturbation = j.at("perturbation").get<double>();
    s.shift.smoothing_width = j.at("shift").at("smoothing_width").get<int>();
    s.shift.noise_sigma = j.at("shift").at("noise_sigma").get<double>();
    s.shift.scale = j.at("shift").at("scale").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& c) {
  ordered_json files = ordered_json::object();
  const auto emit = [&](const std::filesystem::path& path, const std::string& bytes) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    write_file_atomic(path, bytes);
    files[std::filesystem::relative(path, dir).generic_string()] = sha256_hex(bytes);
  };
  const auto text = [](auto writer) {
    std::ostringstream out;
    writer(out);
    return out.str();
  };

  emit(dir / "mesh.txt", text([&](std::ostream& o) { mesh::write_mesh(o, c.mesh); }));
  emit(dir / "reference.labels", text([&](std::ostream& o) { mesh::write_labels(o, c.reference); }));
  for (std::size_t s = 0; s < c.source.size(); ++s)
    emit(source_series_path(dir, static_cast<int>(s)), connectome::encode_timeseries(c.source[s]));
  ordered_json planted_dice = ordered_json::array();
  for (std::size_t s = 0; s < c.targets.size(); ++s) {
    const auto& t = c.targets[s];
    emit(planted_path(dir, static_cast<int>(s)), text([&](std::ostream& o) { mesh::write_labels(o, t.planted); }));
    for (std::size_t k = 0; k < t.sessions.size(); ++k)
      emit(target_series_path(dir, static_cast<int>(s), static_cast<int>(k)),
           connectome::encode_timeseries(t.sessions[k]));
    planted_dice.push_back(t.planted_dice);
  }

  ordered_json manifest;
  manifest["spec"] = ordered_json::parse(spec_to_json(c.spec));
  manifest["planted_dice"] = planted_dice;
  manifest["files"] = files;
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (!manifest.contains("spec")) throw InputError((dir / "manifest.json").string() + ": missing spec");
  Corpus c;
  c.spec = spec_from_json(manifest["spec"].dump());
  c.mesh = mesh::load_mesh(dir / "mesh.txt");
  c.adjacency = mesh::build_adjacency(c.mesh);
  c.reference = mesh::load_labels(dir / "reference.labels", c.spec.n_roi);
  mesh::validate(c.reference, c.mesh.vertex_count());
  for (int s = 0; s < c.spec.n_source_subjects; ++s)
    c.source.push_back(connectome::load_timeseries(source_series_path(dir, s)));
  for (int s = 0; s < c.spec.n_subjects; ++s) {
    TargetSubject t;
    t.planted = mesh::load_labels(planted_path(dir, s), c.spec.n_roi);
    mesh::validate(t.planted, c.mesh.vertex_count());
    t.planted_dice = eval::dice(t.planted, c.reference).mean;
    for (int k = 0; k < c.spec.sessions; ++k) t.sessions.push_back(connectome::load_timeseries(target_series_path(dir, s, k)));
    c.targets.push_back(std::move(t));
  }
  return c;
}

}  // namespace gdaip::synth
