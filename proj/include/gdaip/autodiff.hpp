#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "gdaip/common.hpp"

namespace gdaip::ad {

/// The closed set of operators the parcellation model is built from.
enum class OpKind : std::uint8_t {
  parameter,
  input,
  dense_linear,
  leaky_rectifier,
  exponential_linear,
  neighbor_attention,
  row_l2_normalize,
  temperature_softmax,
  cross_entropy_mean,
  entropy_mean,
  scalar_add,
  scalar_scale,
  gradient_reverse,
  head_concat,
  sum,
};

inline constexpr OpKind kAllOpKinds[] = {
    OpKind::parameter,          OpKind::input,           OpKind::dense_linear,
    OpKind::leaky_rectifier,    OpKind::exponential_linear, OpKind::neighbor_attention,
    OpKind::row_l2_normalize,   OpKind::temperature_softmax, OpKind::cross_entropy_mean,
    OpKind::entropy_mean,       OpKind::scalar_add,      OpKind::scalar_scale,
    OpKind::gradient_reverse,   OpKind::head_concat,     OpKind::sum,
};

std::string_view op_name(OpKind kind);

struct NodeId {
  int index = -1;
  bool valid() const { return index >= 0; }
  bool operator==(const NodeId&) const = default;
};

/// Row-wise sparsity pattern: row i's softmax support is indices[offsets[i], offsets[i+1]).
struct SparsePattern {
  std::vector<std::size_t> offsets;
  std::vector<int> indices;

  std::size_t rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const int> row(std::size_t i) const {
    return {indices.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }
};

/// Reverse-mode tape over a static graph. Nodes are appended in topological order;
/// forward() evaluates them in that order and backward() visits them in reverse.
/// Parameter and input values live on the tape and may be rebound between passes.
class Tape {
 public:
  NodeId parameter(Matrix value);
  NodeId input(Matrix value);

  /// x * w, or x * w^T when `transpose_weight` is set. No bias.
  NodeId dense(NodeId x, NodeId weight, bool transpose_weight = false);
  NodeId leaky_rectifier(NodeId x, double slope);
  NodeId exponential_linear(NodeId x, double alpha = 1.0);

  /// Fused single-head graph attention on columns [offset, offset + width) of `z`:
  /// e_ij = leaky(a_src . z_i + a_dst . z_j), alpha_ij = softmax over pattern row i,
  /// out_i = sum_j alpha_ij z_j. `attention` is a (2 * width) x 1 column.
  NodeId neighbor_attention(NodeId z, NodeId attention, std::shared_ptr<const SparsePattern> pattern,
                            double slope, int offset, int width);

  /// x_i / (||x_i|| + eps) per row.
  NodeId row_l2_normalize(NodeId x, double eps = 1e-12);
  /// Row-wise softmax of logits / tau, max-subtracted.
  NodeId temperature_softmax(NodeId logits, double tau);
  /// -mean over `rows` of log(max(p[row, label], eps)). Scalar.
  NodeId cross_entropy_mean(NodeId probs, std::vector<int> rows, std::vector<int> labels, double eps = 1e-12);
  /// -mean over `rows` of sum_r p log p, with 0 log 0 = 0. Scalar.
  NodeId entropy_mean(NodeId probs, std::vector<int> rows);
  NodeId scalar_add(NodeId a, NodeId b);
  NodeId scalar_scale(NodeId a, double factor);
  /// Identity forward; backward multiplies the incoming adjoint by -kappa.
  NodeId gradient_reverse(NodeId x, double kappa);
  /// Column-wise concatenation.
  NodeId head_concat(std::vector<NodeId> parts);
  /// Sum of all entries. Scalar.
  NodeId sum(NodeId x);

  void forward();
  /// Zeroes every gradient buffer, seeds d(loss)/d(loss) = 1 and back-propagates.
  void backward(NodeId loss);

  const Matrix& value(NodeId id) const { return node(id).value; }
  const Matrix& grad(NodeId id) const { return node(id).grad; }
  /// Mutable storage of a parameter or input node; its shape must be kept.
  Matrix& mutable_value(NodeId id);
  void set_value(NodeId id, const Matrix& value);

  OpKind kind(NodeId id) const { return node(id).kind; }
  /// Output shape, known at construction time.
  Eigen::Index rows(NodeId id) const { return node(id).rows; }
  Eigen::Index cols(NodeId id) const { return node(id).cols; }
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeId> parameters() const;

  /// Attention coefficients of a neighbor_attention node, aligned with its pattern.
  const std::vector<double>& attention_weights(NodeId id) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    bool requires_grad = false;
    Matrix value;
    Matrix grad;

    double scalar = 0.0;  // slope, alpha, tau, kappa, factor or eps depending on kind
    bool transpose = false;
    int offset = 0;
    int width = 0;
    std::shared_ptr<const SparsePattern> pattern;
    std::vector<int> selected_rows;
    std::vector<int> labels;

    // Forward caches used by backward.
    std::vector<double> edge_logit;   // pre-activation attention logits
    std::vector<double> edge_weight;  // softmax coefficients
    Vector row_norm;
  };

  const Node& node(NodeId id) const;
  Node& node(NodeId id);
  NodeId push(Node n);
  bool any_requires_grad(const std::vector<NodeId>& ids) const;
  void evaluate(Node& n);
  void propagate(Node& n);

  std::vector<Node> nodes_;
};

/// Max over all coordinates of `wrt` of |analytic - numeric| / max(1, |numeric|), using
/// central differences of step h on the value of `loss`. `numeric_scale` multiplies the
/// numeric derivative before comparison (used for gradient reversal, where the expected
/// analytic gradient is -kappa times the forward derivative).
double max_gradient_error(Tape& tape, NodeId loss, std::span<const NodeId> wrt, double h,
                          double numeric_scale = 1.0);

struct GradCheckSpec {
  std::uint64_t seed = 1;
  int rows = 5;
  int cols = 4;
  double h = 1e-5;
  double tau = 0.05;
  double kappa = 1.0;
  /// Probability inputs of the loss ops are set to uniform rows instead of random ones.
  bool uniform_probabilities = false;
};

/// Builds a random instance exercising `kind` and returns its finite-difference error.
/// Samples within max(1e-6, 2h) of a kink are redrawn.
double grad_check(OpKind kind, const GradCheckSpec& spec = {});

}  // namespace gdaip::ad
