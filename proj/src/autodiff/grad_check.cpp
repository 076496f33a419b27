#include <algorithm>
#include <cmath>
#include <vector>

#include "gdaip/autodiff.hpp"
#include "gdaip/rng.hpp"

namespace gdaip::ad {

double max_gradient_error(Tape& tape, NodeId loss, std::span<const NodeId> wrt, double h, double numeric_scale) {
  tape.forward();
  tape.backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(wrt.size());
  for (NodeId id : wrt) analytic.push_back(tape.grad(id));

  double worst = 0.0;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Matrix& value = tape.mutable_value(wrt[k]);
    for (Eigen::Index i = 0; i < value.rows(); ++i) {
      for (Eigen::Index j = 0; j < value.cols(); ++j) {
        const double saved = value(i, j);
        value(i, j) = saved + h;
        tape.forward();
        const double plus = tape.value(loss)(0, 0);
        value(i, j) = saved - h;
        tape.forward();
        const double minus = tape.value(loss)(0, 0);
        value(i, j) = saved;
        const double numeric = numeric_scale * (plus - minus) / (2.0 * h);
        const double err = std::abs(analytic[k](i, j) - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
      }
    }
  }
  tape.forward();
  return worst;
}

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Entries kept at least `margin` away from zero, so no kink lies within the FD stencil.
Matrix away_from_zero(Rng& rng, Eigen::Index rows, Eigen::Index cols, double margin) {
  Matrix m = random_matrix(rng, rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    while (std::abs(m.data()[i]) < margin) m.data()[i] = rng.uniform(-1.0, 1.0);
  }
  return m;
}

Matrix probability_rows(Rng& rng, Eigen::Index rows, Eigen::Index cols, bool uniform) {
  if (uniform) return Matrix::Constant(rows, cols, 1.0 / static_cast<double>(cols));
  return random_matrix(rng, rows, cols, 0.1, 1.0);
}

// Scalar readout with random weights so every output coordinate matters differently.
NodeId readout(Tape& tape, NodeId x, Rng& rng) {
  NodeId r = tape.input(random_matrix(rng, tape.cols(x), 1));
  return tape.sum(tape.dense(x, r));
}

std::shared_ptr<SparsePattern> random_pattern(Rng& rng, int n) {
  std::vector<std::vector<int>> rows(n);
  for (int i = 0; i < n; ++i) rows[i].push_back(i);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.bernoulli(0.4)) {
        rows[i].push_back(j);
        rows[j].push_back(i);
      }
    }
  }
  auto pat = std::make_shared<SparsePattern>();
  pat->offsets.push_back(0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    pat->indices.insert(pat->indices.end(), r.begin(), r.end());
    pat->offsets.push_back(pat->indices.size());
  }
  return pat;
}

}  // namespace

double grad_check(OpKind kind, const GradCheckSpec& spec) {
  Rng rng(derive_seed(spec.seed, "grad_check", {static_cast<std::uint64_t>(kind)}));
  const double margin = std::max(1e-6, 2.0 * spec.h);
  const int r = spec.rows, c = spec.cols;
  Tape tape;
  std::vector<NodeId> wrt;
  NodeId loss;
  double numeric_scale = 1.0;

  switch (kind) {
    case OpKind::parameter:
    case OpKind::input:
    case OpKind::dense_linear: {
      NodeId x = kind == OpKind::input ? tape.input(random_matrix(rng, r, c)) : tape.parameter(random_matrix(rng, r, c));
      NodeId w = tape.parameter(random_matrix(rng, c, 3));
      NodeId wt = tape.parameter(random_matrix(rng, 2, 3));
      NodeId y = tape.dense(tape.dense(x, w), wt, /*transpose_weight=*/true);
      loss = readout(tape, y, rng);
      wrt = {w, wt};
      if (kind != OpKind::input) wrt.push_back(x);
      break;
    }
    case OpKind::leaky_rectifier: {
      NodeId x = tape.parameter(away_from_zero(rng, r, c, margin));
      loss = readout(tape, tape.leaky_rectifier(x, 0.2), rng);
      wrt = {x};
      break;
    }
    case OpKind::exponential_linear: {
      NodeId x = tape.parameter(away_from_zero(rng, r, c, margin));
      loss = readout(tape, tape.exponential_linear(x), rng);
      wrt = {x};
      break;
    }
    case OpKind::neighbor_attention: {
      const int n = std::max(r, 2);
      const int width = std::max(c, 1);
      auto pat = random_pattern(rng, n);
      Matrix z, a;
      // Redraw until no attention logit sits on the leaky-rectifier kink.
      for (;;) {
        z = random_matrix(rng, n, 2 * width);
        a = random_matrix(rng, 2 * width, 1);
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
          const double si = a.col(0).head(width).dot(z.row(i).segment(width, width).transpose());
          for (std::size_t e = pat->offsets[i]; e < pat->offsets[i + 1]; ++e) {
            const int j = pat->indices[e];
            const double u = si + a.col(0).tail(width).dot(z.row(j).segment(width, width).transpose());
            if (std::abs(u) < margin) ok = false;
          }
        }
        if (ok) break;
      }
      NodeId zn = tape.parameter(z);
      NodeId an = tape.parameter(a);
      loss = readout(tape, tape.neighbor_attention(zn, an, pat, 0.2, width, width), rng);
      wrt = {zn, an};
      break;
    }
    case OpKind::row_l2_normalize: {
      NodeId x = tape.parameter(random_matrix(rng, r, c));
      loss = readout(tape, tape.row_l2_normalize(x), rng);
      wrt = {x};
      break;
    }
    case OpKind::temperature_softmax: {
      NodeId x = tape.parameter(random_matrix(rng, r, c));
      loss = readout(tape, tape.temperature_softmax(x, spec.tau), rng);
      wrt = {x};
      break;
    }
    case OpKind::cross_entropy_mean: {
      NodeId p = tape.parameter(probability_rows(rng, r, c, spec.uniform_probabilities));
      std::vector<int> rows, labels;
      for (int i = 0; i < r; i += 2) {
        rows.push_back(i);
        labels.push_back(static_cast<int>(rng.index(c)));
      }
      loss = tape.cross_entropy_mean(p, rows, labels);
      wrt = {p};
      break;
    }
    case OpKind::entropy_mean: {
      NodeId p = tape.parameter(probability_rows(rng, r, c, spec.uniform_probabilities));
      std::vector<int> rows;
      for (int i = 0; i < r; ++i) {
        if (i % 3 != 1) rows.push_back(i);
      }
      loss = tape.entropy_mean(p, rows);
      wrt = {p};
      break;
    }
    case OpKind::scalar_add: {
      NodeId x = tape.parameter(random_matrix(rng, r, c));
      NodeId y = tape.parameter(random_matrix(rng, r, c));
      loss = tape.scalar_add(readout(tape, x, rng), readout(tape, tape.exponential_linear(y), rng));
      wrt = {x, y};
      break;
    }
    case OpKind::scalar_scale: {
      NodeId x = tape.parameter(random_matrix(rng, r, c));
      loss = tape.scalar_scale(readout(tape, tape.row_l2_normalize(x), rng), -0.7);
      wrt = {x};
      break;
    }
    case OpKind::gradient_reverse: {
      NodeId x = tape.parameter(random_matrix(rng, r, c));
      loss = readout(tape, tape.gradient_reverse(x, spec.kappa), rng);
      wrt = {x};
      numeric_scale = -spec.kappa;
      break;
    }
    case OpKind::head_concat: {
      NodeId x = tape.parameter(random_matrix(rng, r, 2));
      NodeId y = tape.parameter(random_matrix(rng, r, c));
      loss = readout(tape, tape.head_concat({x, y, x}), rng);
      wrt = {x, y};
      break;
    }
    case OpKind::sum: {
      NodeId x = tape.parameter(random_matrix(rng, r, c));
      loss = tape.sum(tape.exponential_linear(x));
      wrt = {x};
      break;
    }
  }
  return max_gradient_error(tape, loss, wrt, spec.h, numeric_scale);
}

}  // namespace gdaip::ad
