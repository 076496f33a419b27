#include "gdaip/gat.hpp"

#include <cmath>
#include <string>

#include "gdaip/rng.hpp"

namespace gdaip::model {

std::vector<const Matrix*> ModelParams::blocks() const {
  std::vector<const Matrix*> out;
  for (const auto& layer : layers) {
    for (const auto& w : layer.weights) out.push_back(&w);
    for (const auto& a : layer.attention) out.push_back(&a);
  }
  out.push_back(&prototypes);
  return out;
}

std::vector<Matrix*> ModelParams::blocks() {
  std::vector<Matrix*> out;
  for (auto& layer : layers) {
    for (auto& w : layer.weights) out.push_back(&w);
    for (auto& a : layer.attention) out.push_back(&a);
  }
  out.push_back(&prototypes);
  return out;
}

void validate(const ModelParams& params) {
  const ModelDims& d = params.dims;
  if (d.input_dim <= 0 || d.heads <= 0 || d.head_dim <= 0 || d.n_roi <= 0 || !(d.tau > 0.0))
    throw ConfigError("invalid model dimensions");
  auto check = [](const Matrix& m, Eigen::Index r, Eigen::Index c, const std::string& what) {
    if (m.rows() != r || m.cols() != c)
      throw ConfigError(what + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                        ", expected " + std::to_string(r) + "x" + std::to_string(c));
  };
  for (int l = 0; l < kLayerCount; ++l) {
    const auto& layer = params.layers[l];
    if (static_cast<int>(layer.weights.size()) != d.heads || static_cast<int>(layer.attention.size()) != d.heads)
      throw ConfigError("layer " + std::to_string(l + 1) + " head count mismatch");
    for (int h = 0; h < d.heads; ++h) {
      const std::string tag = "layer " + std::to_string(l + 1) + " head " + std::to_string(h);
      check(layer.weights[h], d.layer_input_dim(l), d.head_dim, tag + " weight");
      check(layer.attention[h], 2 * d.head_dim, 1, tag + " attention");
    }
  }
  check(params.prototypes, d.n_roi, d.hidden_dim(), "prototypes");
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p;
  p.dims = dims;
  Rng rng(derive_seed(seed, "model_init"));
  auto fill = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
    return m;
  };
  for (int l = 0; l < kLayerCount; ++l) {
    const int in = dims.layer_input_dim(l);
    auto& layer = p.layers[l];
    for (int h = 0; h < dims.heads; ++h) layer.weights.push_back(fill(in, dims.head_dim, in, dims.head_dim));
    for (int h = 0; h < dims.heads; ++h) layer.attention.push_back(fill(2 * dims.head_dim, 1, 2 * dims.head_dim, 1));
  }
  p.prototypes = fill(dims.n_roi, dims.hidden_dim(), dims.hidden_dim(), dims.n_roi);
  validate(p);
  return p;
}

std::shared_ptr<const ad::SparsePattern> attention_neighborhoods(const mesh::Adjacency& adj) {
  auto pat = std::make_shared<ad::SparsePattern>();
  const int n = static_cast<int>(adj.vertex_count());
  pat->offsets.reserve(n + 1);
  pat->indices.reserve(adj.indices().size() + n);
  pat->offsets.push_back(0);
  for (int i = 0; i < n; ++i) {
    bool self_added = false;
    for (int j : adj.neighbors(i)) {
      if (!self_added && j > i) {
        pat->indices.push_back(i);
        self_added = true;
      }
      if (j != i) pat->indices.push_back(j);
    }
    if (!self_added) pat->indices.push_back(i);
    pat->offsets.push_back(pat->indices.size());
  }
  return pat;
}

std::vector<ad::NodeId> ParamNodes::all() const {
  std::vector<ad::NodeId> out = extractor();
  out.push_back(prototypes);
  return out;
}

std::vector<ad::NodeId> ParamNodes::extractor() const {
  std::vector<ad::NodeId> out;
  for (int l = 0; l < kLayerCount; ++l) {
    out.insert(out.end(), weights[l].begin(), weights[l].end());
    out.insert(out.end(), attention[l].begin(), attention[l].end());
  }
  return out;
}

namespace {

ParamNodes bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
  validate(params);
  auto add = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.input(m); };
  ParamNodes nodes;
  for (int l = 0; l < kLayerCount; ++l) {
    for (const auto& w : params.layers[l].weights) nodes.weights[l].push_back(add(w));
    for (const auto& a : params.layers[l].attention) nodes.attention[l].push_back(add(a));
  }
  nodes.prototypes = add(params.prototypes);
  return nodes;
}

}  // namespace

ParamNodes bind_params(ad::Tape& tape, const ModelParams& params) { return bind(tape, params, true); }

void read_params(const ad::Tape& tape, const ParamNodes& nodes, ModelParams& params) {
  const auto ids = nodes.all();
  auto blocks = params.blocks();
  if (ids.size() != blocks.size()) throw ConfigError("parameter node count mismatch");
  for (std::size_t k = 0; k < ids.size(); ++k) *blocks[k] = tape.value(ids[k]);
}

ad::NodeId build_gat_layer(ad::Tape& tape, ad::NodeId x, const std::vector<ad::NodeId>& weights,
                           const std::vector<ad::NodeId>& attention,
                           const std::shared_ptr<const ad::SparsePattern>& pattern, int head_dim, bool activate) {
  if (weights.size() != attention.size() || weights.empty()) throw ConfigError("head count mismatch");
  const ad::NodeId projection = tape.dense(x, tape.head_concat(weights));
  std::vector<ad::NodeId> heads;
  for (std::size_t h = 0; h < weights.size(); ++h) {
    heads.push_back(tape.neighbor_attention(projection, attention[h], pattern, kAttentionSlope,
                                            static_cast<int>(h) * head_dim, head_dim));
  }
  const ad::NodeId out = tape.head_concat(std::move(heads));
  return activate ? tape.exponential_linear(out) : out;
}

ad::NodeId build_extractor(ad::Tape& tape, ad::NodeId x, const ParamNodes& nodes, const ModelDims& dims,
                           const std::shared_ptr<const ad::SparsePattern>& pattern) {
  ad::NodeId h = x;
  for (int l = 0; l < kLayerCount; ++l)
    h = build_gat_layer(tape, h, nodes.weights[l], nodes.attention[l], pattern, dims.head_dim, l + 1 < kLayerCount);
  return h;
}

ad::NodeId build_classifier(ad::Tape& tape, ad::NodeId features, ad::NodeId prototypes, double tau) {
  const ad::NodeId f = tape.row_l2_normalize(features);
  const ad::NodeId w = tape.row_l2_normalize(prototypes);
  return tape.temperature_softmax(tape.dense(f, w, /*transpose_weight=*/true), tau);
}

namespace {

void require_features(const Matrix& features, const mesh::Adjacency& adj, Eigen::Index width) {
  if (features.rows() != static_cast<Eigen::Index>(adj.vertex_count()))
    throw ConfigError("feature rows " + std::to_string(features.rows()) + " != graph vertices " +
                      std::to_string(adj.vertex_count()));
  if (features.cols() != width)
    throw ConfigError("feature width " + std::to_string(features.cols()) + " != model input width " +
                      std::to_string(width));
}

}  // namespace

Matrix gat_layer(const Matrix& features, const mesh::Adjacency& adj, const GatLayerParams& params, bool activate) {
  if (params.weights.empty()) throw ConfigError("layer has no heads");
  const Eigen::Index head_dim = params.weights.front().cols();
  require_features(features, adj, params.weights.front().rows());
  ad::Tape tape;
  const ad::NodeId x = tape.input(features);
  std::vector<ad::NodeId> w, a;
  for (const auto& m : params.weights) w.push_back(tape.input(m));
  for (const auto& m : params.attention) a.push_back(tape.input(m));
  const ad::NodeId out =
      build_gat_layer(tape, x, w, a, attention_neighborhoods(adj), static_cast<int>(head_dim), activate);
  tape.forward();
  return tape.value(out);
}

Matrix extract_features(const BrainGraph& graph, const ModelParams& params) {
  require_features(graph.features, graph.adjacency, params.dims.input_dim);
  ad::Tape tape;
  const ad::NodeId x = tape.input(graph.features);
  const ParamNodes nodes = bind(tape, params, false);
  const ad::NodeId out = build_extractor(tape, x, nodes, params.dims, attention_neighborhoods(graph.adjacency));
  tape.forward();
  return tape.value(out);
}

Matrix classify(const Matrix& features, const Matrix& prototypes, double tau) {
  if (features.cols() != prototypes.cols()) throw ConfigError("feature and prototype widths differ");
  ad::Tape tape;
  const ad::NodeId out = build_classifier(tape, tape.input(features), tape.input(prototypes), tau);
  tape.forward();
  return tape.value(out);
}

Matrix predict_probabilities(const BrainGraph& graph, const ModelParams& params) {
  return classify(extract_features(graph, params), params.prototypes, params.dims.tau);
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows(), 0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
    }
    out[i] = best;
  }
  return out;
}

mesh::Parcellation predict_parcellation(const BrainGraph& graph, const ModelParams& params) {
  return mesh::Parcellation{argmax_rows(predict_probabilities(graph, params)), params.dims.n_roi};
}

}  // namespace gdaip::model
