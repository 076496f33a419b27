#pragma once

#include <algorithm>
#include <cmath>

#include "gdaip/gat.hpp"
#include "gdaip/mesh_graph.hpp"
#include "gdaip/rng.hpp"
#include "gdaip/synth.hpp"
#include "gdaip/trainer.hpp"

namespace support {

using gdaip::Matrix;

// Features are a noisy one-hot code of the label, so a good classifier exists.
inline Matrix label_features(gdaip::Rng& rng, const gdaip::mesh::Parcellation& atlas, int d, double noise) {
  Matrix f(static_cast<Eigen::Index>(atlas.size()), d);
  for (Eigen::Index i = 0; i < f.rows(); ++i)
    for (int k = 0; k < d; ++k) f(i, k) = (k % atlas.n_roi == atlas.labels[i] ? 1.0 : 0.0) + noise * rng.normal();
  return f;
}

struct SmallProblem {
  gdaip::train::DomainBatch batch;
  gdaip::mesh::Parcellation atlas;
};

inline SmallProblem small_problem(std::uint64_t seed, int subdivisions = 1, int n_roi = 3, int d = 4,
                                  double core_fraction = 0.05, double noise = 0.3) {
  gdaip::Rng rng(seed);
  const auto adj = gdaip::mesh::build_adjacency(gdaip::mesh::icosphere(subdivisions));
  const auto atlas = gdaip::synth::planted_atlas(adj, n_roi, seed);
  auto source = label_features(rng, atlas, d, noise);
  auto target = label_features(rng, atlas, d, 2 * noise);
  SmallProblem p{gdaip::train::DomainBatch::from_atlas({adj, source}, {adj, target}, atlas, core_fraction), atlas};
  return p;
}

inline gdaip::model::ModelDims small_dims(const gdaip::train::DomainBatch& batch, double tau = 0.05) {
  gdaip::model::ModelDims dims;
  dims.input_dim = static_cast<int>(batch.source.features.cols());
  dims.heads = 2;
  dims.head_dim = 3;
  dims.n_roi = batch.n_roi;
  dims.tau = tau;
  return dims;
}

struct SignContractError {
  double prototypes = 0.0;  // normwise relative error of the prototype gradient vs -lambda dH
  double extractor = 0.0;   // same for every extractor block vs +lambda dH
  int sign_mismatches = 0;  // coordinates with a clear expected sign that came out reversed
};

// Backpropagates only the routed entropy term of the training objective, then compares it
// with central differences of the plain entropy (no reversal node on the path).
inline SignContractError sign_contract(const gdaip::train::DomainBatch& batch, const gdaip::model::ModelParams& params,
                                       double lambda, double h = 1e-5) {
  using namespace gdaip;
  train::TrainConfig routed_cfg;
  routed_cfg.lambda_mme = lambda;
  ad::Tape routed;
  const auto g = train::build_loss_graph(routed, batch, routed_cfg, params);
  routed.forward();
  routed.backward(g.routed_ent);

  train::TrainConfig plain_cfg = routed_cfg;
  plain_cfg.lambda_mme = 0.0;
  ad::Tape plain;
  const auto p = train::build_loss_graph(plain, batch, plain_cfg, params);

  const auto routed_ids = g.params.all();
  const auto plain_ids = p.params.all();
  double err_p = 0, norm_p = 0, err_e = 0, norm_e = 0;
  int mismatches = 0;
  for (std::size_t b = 0; b < plain_ids.size(); ++b) {
    const bool is_proto = plain_ids[b] == p.params.prototypes;
    const double factor = is_proto ? -lambda : lambda;
    Matrix& value = plain.mutable_value(plain_ids[b]);
    const Matrix& analytic = routed.grad(routed_ids[b]);
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + h;
      plain.forward();
      const double up = plain.value(p.ent)(0, 0);
      value.data()[k] = saved - h;
      plain.forward();
      const double down = plain.value(p.ent)(0, 0);
      value.data()[k] = saved;
      const double expect = factor * (up - down) / (2 * h);
      const double diff = analytic.data()[k] - expect;
      (is_proto ? err_p : err_e) += diff * diff;
      (is_proto ? norm_p : norm_e) += expect * expect;
      if (std::abs(expect) > 1e-6 && analytic.data()[k] * expect < 0) ++mismatches;
    }
  }
  return {std::sqrt(err_p / std::max(norm_p, 1e-300)), std::sqrt(err_e / std::max(norm_e, 1e-300)), mismatches};
}

}  // namespace support
