#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdaip/common.hpp"
#include "gdaip/gat.hpp"
#include "gdaip/mesh_graph.hpp"

namespace gdaip::train {

struct TrainConfig {
  int steps = 4000;
  double lr0 = 0.01;
  int lr_halving_period = 1000;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double lambda_mme = 0.1;
  double tau = 0.05;
  double core_fraction = 0.05;
  std::uint64_t seed = 0;
  /// Ablation: train on the source graph only (no target labels, no entropy term).
  bool source_only = false;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// lr0 * 0.5^floor(step / lr_halving_period).
double learning_rate(const TrainConfig& config, int step);

/// Sets one `key=value` field; throws InputError on unknown keys or unparsable values.
void apply_setting(TrainConfig& config, std::string_view key, std::string_view value);
/// Text format: one `key=value` per line, '#' comments and blank lines ignored.
TrainConfig parse_config(std::istream& in, std::string_view source = "<stream>");
void write_config(std::ostream& out, const TrainConfig& config);

struct DomainBatch {
  model::BrainGraph source;
  std::vector<int> source_labels;  // every source vertex
  model::BrainGraph target;
  mesh::CoreRegionSet target_core;  // labeled core vertices and unlabeled complement
  int n_roi = 0;

  /// Source labels are the atlas itself; target labels are the atlas restricted to its core.
  static DomainBatch from_atlas(model::BrainGraph source, model::BrainGraph target, const mesh::Parcellation& atlas,
                                double core_fraction);
  void validate() const;
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  double cls_loss = 0.0;
  double ent_loss = 0.0;  // NaN when the target graph is not part of training
  std::optional<double> val_dice;
};

struct TrainHistory {
  std::vector<StepRecord> records;

  /// CSV with header step,lr,cls_loss,ent_loss[,val_dice].
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  model::ModelParams params;
  TrainHistory history;
};

/// Mean -log p over the source rows plus mean -log p over the labeled target rows, each
/// term averaged separately. Row k of each prediction matrix pairs with label k.
double cls_loss(const Matrix& pred_source, std::span<const int> y_source, const Matrix& pred_target_labeled,
                std::span<const int> y_target_labeled);
/// Mean Shannon entropy of the rows.
double ent_loss(const Matrix& pred_target_unlabeled);

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum, double weight_decay);

struct TrainOptions {
  /// Ground-truth target parcellation; when set, each step records Dice of the current
  /// target prediction against it.
  std::optional<mesh::Parcellation> validation_truth;
  std::function<void(const StepRecord&)> on_step;
};

/// Nodes of the training objective on a tape.
struct LossGraph {
  model::ParamNodes params;
  ad::NodeId source_probs;
  ad::NodeId target_probs;  // invalid for source-only training
  ad::NodeId cls;           // source CE plus labeled-target CE
  ad::NodeId ent;           // mean entropy of the unlabeled target rows
  ad::NodeId routed_ent;    // -lambda * H behind the gradient-reverse node; invalid if lambda is 0
  ad::NodeId total;
};

/// Binds `params` onto `tape` and builds the objective used by train().
LossGraph build_loss_graph(ad::Tape& tape, const DomainBatch& batch, const TrainConfig& config,
                           const model::ModelParams& params);

/// Full-graph training. Loss = L_cls - lambda_mme * H, where H is the mean entropy of the
/// unlabeled target predictions computed behind a gradient-reverse node (kappa = 1): the
/// prototypes ascend the entropy while the extractor descends it. Throws DivergenceError if
/// L_cls becomes non-finite.
TrainResult train(const DomainBatch& batch, const TrainConfig& config, const TrainOptions& options = {});

}  // namespace gdaip::train
