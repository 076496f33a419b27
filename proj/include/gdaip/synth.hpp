#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gdaip/connectome.hpp"
#include "gdaip/mesh_graph.hpp"

namespace gdaip::synth {

inline constexpr double kArCoefficient = 0.3;

struct DomainShift {
  int smoothing_width = 1;   // centered moving average, 1 = none
  double noise_sigma = 0.0;  // additive Gaussian noise
  double scale = 1.0;        // global multiplier

  bool operator==(const DomainShift&) const = default;
};

struct SynthSpec {
  int subdivisions = 3;
  int n_roi = 20;
  int n_source_subjects = 10;  // unperturbed atlas, unshifted series; averaged into the group FC
  int n_subjects = 10;         // target subjects, each with its own planted atlas
  int sessions = 2;
  int t_len = 512;
  int signal_dim = 3;          // sinusoids per ROI
  double roi_noise = 0.5;      // innovation sigma of the per-ROI AR(1) component
  double vertex_noise = 1.0;
  double perturbation = 0.3;
  DomainShift shift;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

/// Farthest-point seeds under the hop metric, then a multi-source BFS Voronoi partition.
/// Throws InputError on a disconnected mesh or n_roi outside [1, V].
mesh::Parcellation planted_atlas(const mesh::Adjacency& adj, int n_roi, std::uint64_t seed);

/// ceil(10 p) synchronous rounds; in each round every boundary vertex outside the original
/// 5% core flips with probability p to a uniformly chosen neighboring ROI.
mesh::Parcellation perturb_atlas(const mesh::Parcellation& atlas, const mesh::Adjacency& adj, double p,
                                 std::uint64_t seed);

/// Per ROI: signal_dim unit sinusoids on distinct integer frequency bins in [2, T/4) with
/// random phases, plus AR(1) noise; each vertex adds N(0, vertex_noise^2). Values are
/// rounded to f32 so the series survive the TSF1 container unchanged.
connectome::TimeSeries simulate_bold(const mesh::Parcellation& atlas, const SynthSpec& spec, std::uint64_t seed);

/// Moving-average smoothing, additive noise, then global scale. Neutral parameters return
/// the input unchanged.
connectome::TimeSeries domain_shift(const connectome::TimeSeries& ts, const DomainShift& shift, std::uint64_t seed);

struct TargetSubject {
  mesh::Parcellation planted;
  std::vector<connectome::TimeSeries> sessions;  // shifted series
  double planted_dice = 0.0;                     // mean Dice of the planted atlas vs the reference
};

struct Corpus {
  SynthSpec spec;
  mesh::SurfaceMesh mesh;
  mesh::Adjacency adjacency;
  mesh::Parcellation reference;
  std::vector<connectome::TimeSeries> source;
  std::vector<TargetSubject> targets;
};

Corpus generate_corpus(const SynthSpec& spec);

// Directory layout: mesh.txt, reference.labels, source/sub-XX.tsf,
// target/sub-XX/planted.labels, target/sub-XX/ses-Y.tsf, manifest.json.
std::filesystem::path source_series_path(const std::filesystem::path& dir, int subject);
std::filesystem::path planted_path(const std::filesystem::path& dir, int subject);
std::filesystem::path target_series_path(const std::filesystem::path& dir, int subject, int session);

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

std::string spec_to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const std::string& text);

}  // namespace gdaip::synth
