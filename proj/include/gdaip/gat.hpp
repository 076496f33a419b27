#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gdaip/autodiff.hpp"
#include "gdaip/common.hpp"
#include "gdaip/mesh_graph.hpp"

namespace gdaip::model {

inline constexpr int kLayerCount = 3;
inline constexpr double kAttentionSlope = 0.2;

struct ModelDims {
  int input_dim = 50;
  int heads = 4;
  int head_dim = 50;
  int n_roi = 0;
  double tau = 0.05;

  int hidden_dim() const { return heads * head_dim; }
  int layer_input_dim(int layer) const { return layer == 0 ? input_dim : hidden_dim(); }
  bool operator==(const ModelDims&) const = default;
};

struct GatLayerParams {
  std::vector<Matrix> weights;    // per head, in_dim x head_dim
  std::vector<Matrix> attention;  // per head, (2 * head_dim) x 1: [source half; neighbor half]
};

struct ModelParams {
  ModelDims dims;
  std::array<GatLayerParams, kLayerCount> layers;
  Matrix prototypes;  // n_roi x hidden_dim, unnormalized

  /// Every parameter block in checkpoint order: per layer all head weights then all
  /// attention vectors, then the prototypes.
  std::vector<const Matrix*> blocks() const;
  std::vector<Matrix*> blocks();
};

/// Throws ConfigError if block shapes disagree with `dims`.
void validate(const ModelParams& params);

/// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)) for every block.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

struct BrainGraph {
  mesh::Adjacency adjacency;
  Matrix features;  // N x d
};

/// Attention support of each vertex: its neighbors plus itself, ascending.
std::shared_ptr<const ad::SparsePattern> attention_neighborhoods(const mesh::Adjacency& adj);

/// Parameter nodes of a model bound onto a tape.
struct ParamNodes {
  std::array<std::vector<ad::NodeId>, kLayerCount> weights;
  std::array<std::vector<ad::NodeId>, kLayerCount> attention;
  ad::NodeId prototypes;

  std::vector<ad::NodeId> all() const;        // checkpoint order
  std::vector<ad::NodeId> extractor() const;  // everything except prototypes
};

ParamNodes bind_params(ad::Tape& tape, const ModelParams& params);
void read_params(const ad::Tape& tape, const ParamNodes& nodes, ModelParams& params);

/// One multi-head layer. Head weights are concatenated into a single projection, each head
/// attends over its column slice, and the heads are concatenated. ELU when `activate`.
ad::NodeId build_gat_layer(ad::Tape& tape, ad::NodeId x, const std::vector<ad::NodeId>& weights,
                           const std::vector<ad::NodeId>& attention,
                           const std::shared_ptr<const ad::SparsePattern>& pattern, int head_dim, bool activate);
/// Three layers, ELU between layers, none after the last.
ad::NodeId build_extractor(ad::Tape& tape, ad::NodeId x, const ParamNodes& nodes, const ModelDims& dims,
                           const std::shared_ptr<const ad::SparsePattern>& pattern);
/// Cosine-prototype classifier: softmax_r(<w_r / |w_r|, f_i / |f_i|> / tau).
ad::NodeId build_classifier(ad::Tape& tape, ad::NodeId features, ad::NodeId prototypes, double tau);

Matrix gat_layer(const Matrix& features, const mesh::Adjacency& adj, const GatLayerParams& params, bool activate);
Matrix extract_features(const BrainGraph& graph, const ModelParams& params);
Matrix classify(const Matrix& features, const Matrix& prototypes, double tau);
/// Class probabilities of every vertex under the model.
Matrix predict_probabilities(const BrainGraph& graph, const ModelParams& params);
/// Row-wise argmax, ties to the lowest class index.
std::vector<int> argmax_rows(const Matrix& probs);
mesh::Parcellation predict_parcellation(const BrainGraph& graph, const ModelParams& params);

// Checkpoint: "GDPC", u32 version, u32 d, u32 heads, u32 head_dim, u32 n_roi, f64 tau,
// then every block of ModelParams::blocks() as row-major f64, all little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::string_view bytes, std::string_view source = "<buffer>");
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace gdaip::model
