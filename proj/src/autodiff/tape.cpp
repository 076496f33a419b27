#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gdaip/autodiff.hpp"

namespace gdaip::ad {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::parameter: return "parameter";
    case OpKind::input: return "input";
    case OpKind::dense_linear: return "dense-linear";
    case OpKind::leaky_rectifier: return "leaky-rectifier";
    case OpKind::exponential_linear: return "exponential-linear";
    case OpKind::neighbor_attention: return "neighbor-attention-softmax-aggregate";
    case OpKind::row_l2_normalize: return "row-l2-normalize";
    case OpKind::temperature_softmax: return "temperature-softmax";
    case OpKind::cross_entropy_mean: return "cross-entropy-mean";
    case OpKind::entropy_mean: return "entropy-mean";
    case OpKind::scalar_add: return "scalar-add";
    case OpKind::scalar_scale: return "scalar-scale";
    case OpKind::gradient_reverse: return "gradient-reverse";
    case OpKind::head_concat: return "head-concat";
    case OpKind::sum: return "sum";
  }
  return "unknown";
}

namespace {

// Contiguous slice of a row-major buffer; Eigen vectorizes its reductions.
using ConstMap = Eigen::Map<const Eigen::VectorXd>;
using Map = Eigen::Map<Eigen::VectorXd>;

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
  if (id.index < 0 || id.index >= static_cast<int>(nodes_.size())) throw ShapeError("invalid node id");
  return nodes_[id.index];
}

Tape::Node& Tape::node(NodeId id) {
  if (id.index < 0 || id.index >= static_cast<int>(nodes_.size())) throw ShapeError("invalid node id");
  return nodes_[id.index];
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<int>(nodes_.size()) - 1};
}

bool Tape::any_requires_grad(const std::vector<NodeId>& ids) const {
  return std::any_of(ids.begin(), ids.end(), [&](NodeId id) { return node(id).requires_grad; });
}

NodeId Tape::parameter(Matrix value) {
  Node n{.kind = OpKind::parameter};
  n.rows = value.rows();
  n.cols = value.cols();
  n.requires_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::input(Matrix value) {
  Node n{.kind = OpKind::input};
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::dense(NodeId x, NodeId weight, bool transpose_weight) {
  const Node& a = node(x);
  const Node& w = node(weight);
  const Eigen::Index inner = transpose_weight ? w.cols : w.rows;
  const Eigen::Index out = transpose_weight ? w.rows : w.cols;
  if (a.cols != inner)
    throw ShapeError("dense-linear: input " + shape_str(a.rows, a.cols) + " vs weight " +
                     shape_str(w.rows, w.cols) + (transpose_weight ? " (transposed)" : ""));
  Node n{.kind = OpKind::dense_linear, .inputs = {x, weight}};
  n.rows = a.rows;
  n.cols = out;
  n.transpose = transpose_weight;
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

NodeId Tape::leaky_rectifier(NodeId x, double slope) {
  const Node& a = node(x);
  Node n{.kind = OpKind::leaky_rectifier, .inputs = {x}, .rows = a.rows, .cols = a.cols};
  n.scalar = slope;
  n.requires_grad = a.requires_grad;
  return push(std::move(n));
}

NodeId Tape::exponential_linear(NodeId x, double alpha) {
  const Node& a = node(x);
  Node n{.kind = OpKind::exponential_linear, .inputs = {x}, .rows = a.rows, .cols = a.cols};
  n.scalar = alpha;
  n.requires_grad = a.requires_grad;
  return push(std::move(n));
}

NodeId Tape::neighbor_attention(NodeId z, NodeId attention, std::shared_ptr<const SparsePattern> pattern,
                                double slope, int offset, int width) {
  const Node& zn = node(z);
  const Node& an = node(attention);
  if (!pattern || static_cast<Eigen::Index>(pattern->rows()) != zn.rows)
    throw ShapeError("neighbor-attention: pattern rows do not match " + shape_str(zn.rows, zn.cols));
  if (width <= 0 || offset < 0 || offset + width > zn.cols)
    throw ShapeError("neighbor-attention: column slice out of range");
  if (an.rows != 2 * width || an.cols != 1)
    throw ShapeError("neighbor-attention: attention vector must be " + shape_str(2 * width, 1));
  for (int j : pattern->indices) {
    if (j < 0 || j >= zn.rows) throw ShapeError("neighbor-attention: pattern index out of range");
  }
  for (std::size_t i = 0; i < pattern->rows(); ++i) {
    if (pattern->row(i).empty()) throw ShapeError("neighbor-attention: empty softmax support");
  }
  Node n{.kind = OpKind::neighbor_attention, .inputs = {z, attention}, .rows = zn.rows, .cols = width};
  n.scalar = slope;
  n.offset = offset;
  n.width = width;
  n.pattern = std::move(pattern);
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

NodeId Tape::row_l2_normalize(NodeId x, double eps) {
  const Node& a = node(x);
  Node n{.kind = OpKind::row_l2_normalize, .inputs = {x}, .rows = a.rows, .cols = a.cols};
  n.scalar = eps;
  n.requires_grad = a.requires_grad;
  return push(std::move(n));
}

NodeId Tape::temperature_softmax(NodeId logits, double tau) {
  if (!(tau > 0.0)) throw ShapeError("temperature-softmax: tau must be positive");
  const Node& a = node(logits);
  Node n{.kind = OpKind::temperature_softmax, .inputs = {logits}, .rows = a.rows, .cols = a.cols};
  n.scalar = tau;
  n.requires_grad = a.requires_grad;
  return push(std::move(n));
}

NodeId Tape::cross_entropy_mean(NodeId probs, std::vector<int> rows, std::vector<int> labels, double eps) {
  const Node& p = node(probs);
  if (rows.size() != labels.size()) throw ShapeError("cross-entropy-mean: rows and labels differ in length");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= p.rows) throw ShapeError("cross-entropy-mean: row out of range");
    if (labels[k] < 0 || labels[k] >= p.cols) throw ShapeError("cross-entropy-mean: label out of range");
  }
  Node n{.kind = OpKind::cross_entropy_mean, .inputs = {probs}, .rows = 1, .cols = 1};
  n.scalar = eps;
  n.selected_rows = std::move(rows);
  n.labels = std::move(labels);
  n.requires_grad = p.requires_grad;
  return push(std::move(n));
}

NodeId Tape::entropy_mean(NodeId probs, std::vector<int> rows) {
  const Node& p = node(probs);
  for (int r : rows) {
    if (r < 0 || r >= p.rows) throw ShapeError("entropy-mean: row out of range");
  }
  Node n{.kind = OpKind::entropy_mean, .inputs = {probs}, .rows = 1, .cols = 1};
  n.selected_rows = std::move(rows);
  n.requires_grad = p.requires_grad;
  return push(std::move(n));
}

NodeId Tape::scalar_add(NodeId a, NodeId b) {
  if (node(a).rows != 1 || node(a).cols != 1 || node(b).rows != 1 || node(b).cols != 1)
    throw ShapeError("scalar-add: operands must be 1x1");
  Node n{.kind = OpKind::scalar_add, .inputs = {a, b}, .rows = 1, .cols = 1};
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

NodeId Tape::scalar_scale(NodeId a, double factor) {
  if (node(a).rows != 1 || node(a).cols != 1) throw ShapeError("scalar-scale: operand must be 1x1");
  Node n{.kind = OpKind::scalar_scale, .inputs = {a}, .rows = 1, .cols = 1};
  n.scalar = factor;
  n.requires_grad = node(a).requires_grad;
  return push(std::move(n));
}

NodeId Tape::gradient_reverse(NodeId x, double kappa) {
  if (!(kappa >= 0.0)) throw ShapeError("gradient-reverse: kappa must be non-negative");
  const Node& a = node(x);
  Node n{.kind = OpKind::gradient_reverse, .inputs = {x}, .rows = a.rows, .cols = a.cols};
  n.scalar = kappa;
  n.requires_grad = a.requires_grad;
  return push(std::move(n));
}

NodeId Tape::head_concat(std::vector<NodeId> parts) {
  if (parts.empty()) throw ShapeError("head-concat: no inputs");
  const Eigen::Index rows = node(parts.front()).rows;
  Eigen::Index cols = 0;
  for (NodeId p : parts) {
    if (node(p).rows != rows) throw ShapeError("head-concat: row counts differ");
    cols += node(p).cols;
  }
  Node n{.kind = OpKind::head_concat, .inputs = std::move(parts), .rows = rows, .cols = cols};
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  Node n{.kind = OpKind::sum, .inputs = {x}, .rows = 1, .cols = 1};
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

Matrix& Tape::mutable_value(NodeId id) {
  Node& n = node(id);
  if (n.kind != OpKind::parameter && n.kind != OpKind::input)
    throw ShapeError("only parameter and input nodes can be rebound");
  return n.value;
}

void Tape::set_value(NodeId id, const Matrix& value) {
  Matrix& slot = mutable_value(id);
  if (value.rows() != slot.rows() || value.cols() != slot.cols())
    throw ShapeError("rebinding changes shape " + shape_str(slot.rows(), slot.cols()) + " -> " +
                     shape_str(value.rows(), value.cols()));
  slot = value;
}

std::vector<NodeId> Tape::parameters() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::parameter) out.push_back(NodeId{static_cast<int>(i)});
  }
  return out;
}

const std::vector<double>& Tape::attention_weights(NodeId id) const {
  const Node& n = node(id);
  if (n.kind != OpKind::neighbor_attention) throw ShapeError("not an attention node");
  return n.edge_weight;
}

void Tape::forward() {
  for (Node& n : nodes_) evaluate(n);
}

void Tape::evaluate(Node& n) {
  auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.inputs[k].index].value; };
  switch (n.kind) {
    case OpKind::parameter:
    case OpKind::input:
      return;
    case OpKind::dense_linear:
      if (n.transpose)
        n.value.noalias() = in(0) * in(1).transpose();
      else
        n.value.noalias() = in(0) * in(1);
      return;
    case OpKind::leaky_rectifier: {
      const double slope = n.scalar;
      n.value = in(0).unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
      return;
    }
    case OpKind::exponential_linear: {
      const double alpha = n.scalar;
      // max(x, 0) + alpha * (e^min(x, 0) - 1) keeps the whole expression vectorized.
      const auto x = in(0).array();
      n.value = (x.max(0.0) + alpha * (x.min(0.0).exp() - 1.0)).matrix();
      return;
    }
    case OpKind::neighbor_attention: {
      const Matrix& z = in(0);
      const double* a_src = in(1).data();
      const double* a_dst = a_src + n.width;
      const int w = n.width;
      const Eigen::Index stride = z.cols();
      const double* zs = z.data() + n.offset;
      const SparsePattern& pat = *n.pattern;
      Vector src(n.rows), dst(n.rows);
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const ConstMap zi(zs + i * stride, w);
        src(i) = ConstMap(a_src, w).dot(zi);
        dst(i) = ConstMap(a_dst, w).dot(zi);
      }
      n.edge_logit.resize(pat.indices.size());
      n.edge_weight.resize(pat.indices.size());
      n.value.setZero(n.rows, w);
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const std::size_t begin = pat.offsets[i], end = pat.offsets[i + 1];
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t e = begin; e < end; ++e) {
          const double u = src(i) + dst(pat.indices[e]);
          n.edge_logit[e] = u;
          const double l = u > 0.0 ? u : n.scalar * u;
          n.edge_weight[e] = l;
          peak = std::max(peak, l);
        }
        for (std::size_t e = begin; e < end; ++e) n.edge_weight[e] -= peak;
      }
      // One vectorized exp over every edge instead of a scalar call per edge. The copy into Eigen-owned
      // storage fixes the alignment, so the scalar/packet split (and the rounding) never depends on the heap.
      auto weights = Eigen::Map<Eigen::ArrayXd>(n.edge_weight.data(), static_cast<Eigen::Index>(n.edge_weight.size()));
      const Eigen::ArrayXd exped = Eigen::ArrayXd(weights).exp();
      weights = exped;
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const std::size_t begin = pat.offsets[i], end = pat.offsets[i + 1];
        double total = 0.0;
        for (std::size_t e = begin; e < end; ++e) total += n.edge_weight[e];
        double* out = n.value.data() + i * w;
        for (std::size_t e = begin; e < end; ++e) {
          const double c = n.edge_weight[e] /= total;
          Map(out, w).noalias() += c * ConstMap(zs + pat.indices[e] * stride, w);
        }
      }
      return;
    }
    case OpKind::row_l2_normalize: {
      const Matrix& x = in(0);
      n.row_norm = x.rowwise().norm();
      n.value.resize(n.rows, n.cols);
      for (Eigen::Index i = 0; i < n.rows; ++i) n.value.row(i) = x.row(i) / (n.row_norm(i) + n.scalar);
      return;
    }
    case OpKind::temperature_softmax: {
      const Matrix& x = in(0);
      n.value.resize(n.rows, n.cols);
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const double peak = x.row(i).maxCoeff();
        auto row = n.value.row(i);
        row = ((x.row(i).array() - peak) / n.scalar).exp().matrix();
        row /= row.sum();
      }
      return;
    }
    case OpKind::cross_entropy_mean: {
      const Matrix& p = in(0);
      double total = 0.0;
      for (std::size_t k = 0; k < n.selected_rows.size(); ++k)
        total -= std::log(std::max(p(n.selected_rows[k], n.labels[k]), n.scalar));
      n.value.resize(1, 1);
      n.value(0, 0) = n.selected_rows.empty() ? 0.0 : total / static_cast<double>(n.selected_rows.size());
      return;
    }
    case OpKind::entropy_mean: {
      const Matrix& p = in(0);
      double total = 0.0;
      for (int r : n.selected_rows) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
          const double v = p(r, c);
          if (v > 0.0) total -= v * std::log(v);
        }
      }
      n.value.resize(1, 1);
      n.value(0, 0) = n.selected_rows.empty() ? 0.0 : total / static_cast<double>(n.selected_rows.size());
      return;
    }
    case OpKind::scalar_add:
      n.value = in(0) + in(1);
      return;
    case OpKind::scalar_scale:
      n.value = n.scalar * in(0);
      return;
    case OpKind::gradient_reverse:
      n.value = in(0);
      return;
    case OpKind::head_concat: {
      n.value.resize(n.rows, n.cols);
      Eigen::Index col = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Matrix& part = in(k);
        n.value.middleCols(col, part.cols()) = part;
        col += part.cols();
      }
      return;
    }
    case OpKind::sum:
      n.value.resize(1, 1);
      n.value(0, 0) = in(0).sum();
      return;
  }
}

void Tape::backward(NodeId loss) {
  Node& l = node(loss);
  if (l.rows != 1 || l.cols != 1) throw ShapeError("backward: loss node must be scalar");
  for (Node& n : nodes_) {
    if (n.requires_grad)
      n.grad.setZero(n.rows, n.cols);
    else
      n.grad.resize(0, 0);
  }
  if (!l.requires_grad) return;
  l.grad(0, 0) = 1.0;
  for (int i = loss.index; i >= 0; --i) {
    if (nodes_[i].requires_grad) propagate(nodes_[i]);
  }
}

void Tape::propagate(Node& n) {
  auto in_node = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k].index]; };
  const Matrix& g = n.grad;
  switch (n.kind) {
    case OpKind::parameter:
    case OpKind::input:
      return;
    case OpKind::dense_linear: {
      Node& x = in_node(0);
      Node& w = in_node(1);
      if (x.requires_grad) {
        if (n.transpose)
          x.grad.noalias() += g * w.value;
        else
          x.grad.noalias() += g * w.value.transpose();
      }
      if (w.requires_grad) {
        if (n.transpose)
          w.grad.noalias() += g.transpose() * x.value;
        else
          w.grad.noalias() += x.value.transpose() * g;
      }
      return;
    }
    case OpKind::leaky_rectifier: {
      Node& x = in_node(0);
      const double slope = n.scalar;
      x.grad.array() += g.array() * x.value.array().unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
      return;
    }
    case OpKind::exponential_linear: {
      Node& x = in_node(0);
      const double alpha = n.scalar;
      // For x <= 0 the derivative alpha * e^x equals value + alpha.
      const double* xv = x.value.data();
      const double* yv = n.value.data();
      const double* gv = g.data();
      double* out = x.grad.data();
      // Arithmetic mask instead of a branch so the loop vectorizes.
      for (Eigen::Index k = 0; k < g.size(); ++k) {
        const double positive = xv[k] > 0.0;
        out[k] += gv[k] * (positive + (1.0 - positive) * (yv[k] + alpha));
      }
      return;
    }
    case OpKind::neighbor_attention: {
      Node& zn = in_node(0);
      Node& an = in_node(1);
      const Matrix& z = zn.value;
      const double* a_src = an.value.data();
      const double* a_dst = a_src + n.width;
      const int w = n.width;
      const Eigen::Index stride = z.cols();
      const double* zs = z.data() + n.offset;
      const SparsePattern& pat = *n.pattern;
      Vector d_src = Vector::Zero(n.rows), d_dst = Vector::Zero(n.rows);
      // Row-major buffer for the z-slice gradient; folded into zn.grad at the end.
      Matrix dz;
      const bool need_dz = zn.requires_grad;
      if (need_dz) dz.setZero(n.rows, w);
      std::vector<double> d_weight;
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const std::size_t begin = pat.offsets[i], end = pat.offsets[i + 1];
        const double* gi = g.data() + i * w;
        d_weight.assign(end - begin, 0.0);
        double mix = 0.0;
        for (std::size_t e = begin; e < end; ++e) {
          const int j = pat.indices[e];
          const double* zj = zs + j * stride;
          const double dw = ConstMap(gi, w).dot(ConstMap(zj, w));
          d_weight[e - begin] = dw;
          mix += n.edge_weight[e] * dw;
          if (need_dz) Map(dz.data() + j * w, w).noalias() += n.edge_weight[e] * ConstMap(gi, w);
        }
        for (std::size_t e = begin; e < end; ++e) {
          const double de = n.edge_weight[e] * (d_weight[e - begin] - mix);
          const double du = de * (n.edge_logit[e] > 0.0 ? 1.0 : n.scalar);
          d_src(i) += du;
          d_dst(pat.indices[e]) += du;
        }
      }
      if (an.requires_grad) {
        double* ga_src = an.grad.data();
        double* ga_dst = ga_src + w;
        for (Eigen::Index i = 0; i < n.rows; ++i) {
          const double* zi = zs + i * stride;
          const double s = d_src(i), d = d_dst(i);
          for (int k = 0; k < w; ++k) {
            ga_src[k] += s * zi[k];
            ga_dst[k] += d * zi[k];
          }
        }
      }
      if (zn.requires_grad) {
        double* gz = zn.grad.data() + n.offset;
        for (Eigen::Index i = 0; i < n.rows; ++i) {
          const double* dzi = dz.data() + i * w;
          double* gzi = gz + i * stride;
          const double s = d_src(i), d = d_dst(i);
          for (int k = 0; k < w; ++k) gzi[k] += dzi[k] + s * a_src[k] + d * a_dst[k];
        }
      }
      return;
    }
    case OpKind::row_l2_normalize: {
      Node& x = in_node(0);
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const double norm = n.row_norm(i);
        const double denom = norm + n.scalar;
        x.grad.row(i) += g.row(i) / denom;
        if (norm > 0.0) {
          const double proj = g.row(i).dot(x.value.row(i));
          x.grad.row(i) -= x.value.row(i) * (proj / (norm * denom * denom));
        }
      }
      return;
    }
    case OpKind::temperature_softmax: {
      Node& x = in_node(0);
      for (Eigen::Index i = 0; i < n.rows; ++i) {
        const auto p = n.value.row(i);
        const double mix = g.row(i).dot(p);
        x.grad.row(i).array() += p.array() * (g.row(i).array() - mix) / n.scalar;
      }
      return;
    }
    case OpKind::cross_entropy_mean: {
      Node& p = in_node(0);
      if (n.selected_rows.empty()) return;
      const double scale = g(0, 0) / static_cast<double>(n.selected_rows.size());
      for (std::size_t k = 0; k < n.selected_rows.size(); ++k) {
        const double v = p.value(n.selected_rows[k], n.labels[k]);
        if (v > n.scalar) p.grad(n.selected_rows[k], n.labels[k]) -= scale / v;
      }
      return;
    }
    case OpKind::entropy_mean: {
      Node& p = in_node(0);
      if (n.selected_rows.empty()) return;
      const double scale = g(0, 0) / static_cast<double>(n.selected_rows.size());
      for (int r : n.selected_rows) {
        for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
          const double v = p.value(r, c);
          if (v > 0.0) p.grad(r, c) -= scale * (std::log(v) + 1.0);
        }
      }
      return;
    }
    case OpKind::scalar_add:
      for (std::size_t k = 0; k < 2; ++k) {
        if (in_node(k).requires_grad) in_node(k).grad += g;
      }
      return;
    case OpKind::scalar_scale:
      in_node(0).grad += n.scalar * g;
      return;
    case OpKind::gradient_reverse:
      in_node(0).grad -= n.scalar * g;
      return;
    case OpKind::head_concat: {
      Eigen::Index col = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& part = in_node(k);
        if (part.requires_grad) part.grad += g.middleCols(col, part.cols);
        col += part.cols;
      }
      return;
    }
    case OpKind::sum:
      in_node(0).grad.array() += g(0, 0);
      return;
  }
}

}  // namespace gdaip::ad
