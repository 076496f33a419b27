#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gdaip/connectome.hpp"
#include "gdaip/gat.hpp"
#include "gdaip/metrics.hpp"
#include "gdaip/synth.hpp"
#include "gdaip/trainer.hpp"

namespace gdaip::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";

/// Worker count: `requested` if positive, else GDAIP_THREADS, else hardware concurrency.
int thread_count(int requested = 0);

/// Runs body(0..n-1) on up to `threads` workers. The first exception is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

struct Features {
  connectome::FcMatrix group_fc;
  connectome::FcMatrix individual_fc;
  connectome::JointPca pca;
};

Features build_features(const connectome::FcMatrix& group_fc, const connectome::TimeSeries& target, int d,
                        bool fisher);

struct GraphFiles {
  mesh::Adjacency adjacency;
  Matrix source_features;
  Matrix target_features;

  model::BrainGraph source_graph() const { return {adjacency, source_features}; }
  model::BrainGraph target_graph() const { return {adjacency, target_features}; }
};

/// Writes adjacency.txt, group_fc.mat, individual_fc.mat, source_features.mat and
/// target_features.mat; returns relative path -> SHA-256.
std::map<std::string, std::string> write_graph_dir(const std::filesystem::path& dir, const mesh::Adjacency& adj,
                                                   const Features& features);
/// Checks every file before reading any of them.
GraphFiles load_graph_dir(const std::filesystem::path& dir);

struct ExperimentConfig {
  train::TrainConfig train;
  int pca_dim = 50;
  bool fisher = false;
  bool source_only_baseline = true;
  int threads = 0;
};

struct TargetRun {
  int subject = 0;
  int session = 0;
  std::uint64_t seed = 0;
  mesh::Parcellation gdaip;
  mesh::Parcellation source_only;
  model::ModelParams params;
  double dice_gdaip = 0.0;
  double dice_source_only = 0.0;
  double dice_reference = 0.0;
  double homogeneity_gdaip = 0.0;
  double homogeneity_reference = 0.0;
  double seconds = 0.0;
};

struct ExperimentResult {
  std::vector<TargetRun> runs;  // subject-major, session-minor
  eval::ConsistencyReport consistency;
  eval::TTestResult homogeneity_test;  // paired over subjects, GDAIP vs reference
  double mean_dice_gdaip = 0.0;
  double mean_dice_source_only = 0.0;
  double mean_dice_reference = 0.0;
  double mean_homogeneity_gdaip = 0.0;
  double mean_homogeneity_reference = 0.0;
  double seconds = 0.0;
  int threads = 1;
};

/// Seed of the training run for one target session.
std::uint64_t run_seed(std::uint64_t root, int subject, int session);

/// Trains GDAIP (and the source-only ablation) for every target session of the corpus.
ExperimentResult run_experiment(const synth::Corpus& corpus, const ExperimentConfig& config,
                                const std::function<void(const TargetRun&)>& on_run = {});

std::string experiment_json(const ExperimentResult& result, const ExperimentConfig& config);

struct PipelineOutputs {
  mesh::Parcellation prediction;
  eval::MetricsReport metrics;
  std::map<std::string, std::string> checksums;
};

/// Graph build, training, prediction and evaluation of one target session, written under
/// `out`: graph/, checkpoint.gdpc, history.csv, predicted.labels, metrics.json,
/// metrics.csv, manifest.json.
PipelineOutputs run_target_pipeline(const synth::Corpus& corpus, int subject, int session,
                                    const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace gdaip::pipeline
