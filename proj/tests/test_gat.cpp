#include <gtest/gtest.h>

#include "gdaip/gat.hpp"
#include "oracles.hpp"

using namespace gdaip;
using namespace gdaip::model;

namespace {

ModelDims small_dims(int d = 6, int n_roi = 4) {
  ModelDims dims;
  dims.input_dim = d;
  dims.heads = 2;
  dims.head_dim = 3;
  dims.n_roi = n_roi;
  return dims;
}

// Dense masked softmax over neighbors plus self, every head, concatenated.
Matrix dense_layer(const Matrix& f, const mesh::Adjacency& adj, const GatLayerParams& p, bool activate) {
  const Eigen::Index n = f.rows();
  std::vector<Matrix> outs;
  for (std::size_t h = 0; h < p.weights.size(); ++h) {
    const Matrix z = f * p.weights[h];
    const Eigen::Index w = z.cols();
    Matrix out = Matrix::Zero(n, w);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<long double> logit(n, -std::numeric_limits<long double>::infinity());
      long double peak = -std::numeric_limits<long double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i && !adj.adjacent(static_cast<int>(i), static_cast<int>(j))) continue;
        long double e = 0;
        for (Eigen::Index k = 0; k < w; ++k) e += p.attention[h](k, 0) * z(i, k) + p.attention[h](w + k, 0) * z(j, k);
        logit[j] = e > 0 ? e : 0.2L * e;
        peak = std::max(peak, logit[j]);
      }
      long double total = 0;
      for (Eigen::Index j = 0; j < n; ++j) total += std::exp(logit[j] - peak);
      for (Eigen::Index j = 0; j < n; ++j) {
        const long double a = std::exp(logit[j] - peak) / total;
        for (Eigen::Index k = 0; k < w; ++k) out(i, k) += static_cast<double>(a * z(j, k));
      }
    }
    outs.push_back(out);
  }
  Matrix cat(n, static_cast<Eigen::Index>(outs.size()) * outs[0].cols());
  for (std::size_t h = 0; h < outs.size(); ++h) cat.middleCols(h * outs[0].cols(), outs[0].cols()) = outs[h];
  if (activate) cat = cat.unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
  return cat;
}

Matrix direct_classify(const Matrix& f, const Matrix& w, double tau) {
  Matrix out(f.rows(), w.rows());
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    std::vector<long double> s(w.rows());
    long double total = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      long double dot = 0, nf = 0, nw = 0;
      for (Eigen::Index k = 0; k < f.cols(); ++k) {
        dot += static_cast<long double>(f(i, k)) * w(r, k);
        nf += static_cast<long double>(f(i, k)) * f(i, k);
        nw += static_cast<long double>(w(r, k)) * w(r, k);
      }
      s[r] = std::exp(dot / (std::sqrt(nf) * std::sqrt(nw)) / tau);
      total += s[r];
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r) out(i, r) = static_cast<double>(s[r] / total);
  }
  return out;
}

mesh::Adjacency cycle(int n) {
  std::vector<std::vector<int>> lists(n);
  for (int i = 0; i < n; ++i) {
    lists[i].push_back((i + 1) % n);
    lists[(i + 1) % n].push_back(i);
  }
  return mesh::Adjacency::from_lists(lists);
}

}  // namespace

TEST(InitParams, ShapesAndBounds) {
  const ModelDims dims = small_dims();
  const auto p = init_params(dims, 5);
  validate(p);
  EXPECT_EQ(p.layers[0].weights[0].rows(), 6);
  EXPECT_EQ(p.layers[1].weights[1].rows(), 6);
  EXPECT_EQ(p.layers[2].attention[0].rows(), 6);
  EXPECT_EQ(p.prototypes.rows(), 4);
  EXPECT_EQ(p.prototypes.cols(), 6);
  const double s = std::sqrt(6.0 / (6 + 3));
  EXPECT_LE(p.layers[0].weights[0].cwiseAbs().maxCoeff(), s);
  EXPECT_EQ(init_params(dims, 5).prototypes, p.prototypes);
  EXPECT_NE(init_params(dims, 6).prototypes, p.prototypes);
  EXPECT_EQ(p.blocks().size(), 3u * 4u + 1u);
}

TEST(InitParams, DefaultDimsMatchTheArchitecture) {
  ModelDims dims;
  dims.n_roi = 20;
  const auto p = init_params(dims, 1);
  EXPECT_EQ(dims.hidden_dim(), 200);
  EXPECT_EQ(p.layers[0].weights.size(), 4u);
  EXPECT_EQ(p.layers[0].weights[0].rows(), 50);
  EXPECT_EQ(p.layers[0].weights[0].cols(), 50);
  EXPECT_EQ(p.layers[1].weights[0].rows(), 200);
  EXPECT_EQ(p.prototypes.cols(), 200);
}

TEST(GatLayer, IsolatedVertexPassesItsProjection) {
  Rng rng(1);
  const auto p = init_params(small_dims(), 1);
  const auto adj = mesh::Adjacency::from_lists({{}});
  const Matrix f = oracle::random_matrix(rng, 1, 6);
  const Matrix out = gat_layer(f, adj, p.layers[0], true);
  for (int h = 0; h < 2; ++h) {
    const Matrix z = f * p.layers[0].weights[h];
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(out(0, h * 3 + k), z(0, k) > 0 ? z(0, k) : std::expm1(z(0, k)), 1e-14);
  }
}

TEST(GatLayer, ZeroAttentionAveragesTheNeighborhood) {
  Rng rng(2);
  auto p = init_params(small_dims(), 2);
  for (auto& a : p.layers[0].attention) a.setZero();
  const auto adj = cycle(5);
  const Matrix f = oracle::random_matrix(rng, 5, 6);
  const Matrix out = gat_layer(f, adj, p.layers[0], false);
  const Matrix z = f * p.layers[0].weights[0];
  for (int i = 0; i < 5; ++i) {
    const Matrix mean = (z.row(i) + z.row((i + 1) % 5) + z.row((i + 4) % 5)) / 3.0;
    EXPECT_LT((out.row(i).head(3) - mean).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(GatLayer, MatchesDenseOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto adj = oracle::random_graph(rng, 6, 0.3);
    auto p = init_params(small_dims(), 100 + trial);
    for (auto& a : p.layers[0].attention) a *= 5.0;  // sharper attention
    const Matrix f = oracle::random_matrix(rng, 6, 6);
    for (bool act : {false, true})
      ASSERT_LT((gat_layer(f, adj, p.layers[0], act) - dense_layer(f, adj, p.layers[0], act)).cwiseAbs().maxCoeff(),
                1e-10);
  }
}

TEST(ExtractFeatures, MatchesLayerByLayerOracle) {
  Rng rng(4);
  const auto adj = oracle::random_graph(rng, 9, 0.2);
  const auto p = init_params(small_dims(), 4);
  const BrainGraph g{adj, oracle::random_matrix(rng, 9, 6)};
  Matrix h = g.features;
  for (int l = 0; l < kLayerCount; ++l) h = dense_layer(h, adj, p.layers[l], l + 1 < kLayerCount);
  EXPECT_LT((extract_features(g, p) - h).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ExtractFeatures, TapeAndDirectPathsAgree) {
  Rng rng(5);
  const auto adj = oracle::random_graph(rng, 12, 0.2);
  const auto p = init_params(small_dims(), 5);
  const BrainGraph g{adj, oracle::random_matrix(rng, 12, 6)};
  ad::Tape tape;
  const auto nodes = bind_params(tape, p);
  const auto x = tape.input(g.features);
  const auto f = build_extractor(tape, x, nodes, p.dims, attention_neighborhoods(adj));
  const auto probs = build_classifier(tape, f, nodes.prototypes, p.dims.tau);
  tape.forward();
  EXPECT_LT((tape.value(f) - extract_features(g, p)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((tape.value(probs) - predict_probabilities(g, p)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExtractFeatures, SingleVertexAndSymmetricGraph) {
  const auto p = init_params(small_dims(), 6);
  const BrainGraph one{mesh::Adjacency::from_lists({{}}), Matrix::Constant(1, 6, 0.3)};
  EXPECT_EQ(extract_features(one, p).rows(), 1);
  const BrainGraph ring{cycle(7), Matrix::Constant(7, 6, 0.3)};
  const Matrix f = extract_features(ring, p);
  for (int i = 1; i < 7; ++i) EXPECT_LT((f.row(i) - f.row(0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ExtractFeatures, WidthMismatchIsAConfigError) {
  const auto p = init_params(small_dims(), 7);
  const BrainGraph g{cycle(4), Matrix::Zero(4, 5)};
  EXPECT_THROW(extract_features(g, p), ConfigError);
}

TEST(ExtractFeatures, PermutationEquivariant) {
  Rng rng(8);
  const int n = 10;
  const auto adj = oracle::random_graph(rng, n, 0.2);
  const auto p = init_params(small_dims(), 8);
  const Matrix x = oracle::random_matrix(rng, n, 6);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
  // Vertex v of the original becomes perm[v].
  std::vector<std::vector<int>> lists(n);
  Matrix px(n, 6);
  for (int v = 0; v < n; ++v) {
    px.row(perm[v]) = x.row(v);
    for (int j : adj.neighbors(v)) lists[perm[v]].push_back(perm[j]);
  }
  const Matrix a = extract_features({adj, x}, p);
  const Matrix b = extract_features({mesh::Adjacency::from_lists(lists), px}, p);
  for (int v = 0; v < n; ++v) EXPECT_LT((a.row(v) - b.row(perm[v])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Classify, ParallelPrototypeExample) {
  Matrix w = Matrix::Zero(3, 3);
  w(0, 0) = w(1, 1) = w(2, 2) = 2.0;
  Matrix f = Matrix::Zero(1, 3);
  f(0, 1) = 0.7;
  const Matrix p = classify(f, w, 0.05);
  const double expect = std::exp(20.0) / (std::exp(20.0) + 2.0);
  EXPECT_NEAR(p(0, 1), expect, 1e-12);
}

TEST(Classify, IdenticalPrototypesGiveUniformRows) {
  Rng rng(9);
  Matrix w(4, 5);
  const Matrix row = oracle::random_matrix(rng, 1, 5);
  for (int r = 0; r < 4; ++r) w.row(r) = row;
  const Matrix p = classify(oracle::random_matrix(rng, 3, 5), w, 0.05);
  EXPECT_LT((p.array() - 0.25).abs().maxCoeff(), 1e-12);
}

TEST(Classify, MatchesDirectFormula) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix f = oracle::random_matrix(rng, 5, 7), w = oracle::random_matrix(rng, 4, 7);
    const double tau = rng.uniform(0.05, 1.0);
    ASSERT_LT((classify(f, w, tau) - direct_classify(f, w, tau)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Classify, RowsAreDistributionsAndScaleInvariant) {
  Rng rng(11);
  const Matrix f = oracle::random_matrix(rng, 8, 5), w = oracle::random_matrix(rng, 3, 5);
  const Matrix p = classify(f, w, 0.05);
  for (int i = 0; i < 8; ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    EXPECT_GE(p.row(i).minCoeff(), 0.0);
  }
  Matrix fs = f, ws = w;
  for (int i = 0; i < 8; ++i) fs.row(i) *= rng.uniform(0.01, 100.0);
  for (int r = 0; r < 3; ++r) ws.row(r) *= rng.uniform(0.01, 100.0);
  EXPECT_LT((classify(fs, ws, 0.05) - p).cwiseAbs().maxCoeff(), 1e-12);

  const Matrix sharper = classify(f, w, 0.025);
  for (int i = 0; i < 8; ++i) EXPECT_GE(sharper.row(i).maxCoeff(), p.row(i).maxCoeff());
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_rows(Matrix::Constant(3, 4, 0.25)), (std::vector<int>{0, 0, 0}));
  Matrix p(2, 3);
  p << 0.1, 0.7, 0.2, 0.3, 0.3, 0.4;
  EXPECT_EQ(argmax_rows(p), (std::vector<int>{1, 2}));
}

TEST(Checkpoint, RoundTripsByteIdentical) {
  ModelDims dims = small_dims();
  dims.tau = 0.07;
  const auto p = init_params(dims, 12);
  const std::string bytes = encode_checkpoint(p);
  EXPECT_EQ(bytes.substr(0, 4), "GDPC");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.dims, dims);
  const auto a = p.blocks(), b = back.blocks();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k], *b[k]);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptionIsReported) {
  const std::string bytes = encode_checkpoint(init_params(small_dims(), 13));
  std::string bad = bytes;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad, "ckpt");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), InputError);
  EXPECT_THROW(decode_checkpoint(bytes + "extra"), InputError);
  std::string version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_checkpoint(version), InputError);
}
