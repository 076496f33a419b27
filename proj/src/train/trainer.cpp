#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "gdaip/fileio.hpp"
#include "gdaip/metrics.hpp"
#include "gdaip/trainer.hpp"

namespace gdaip::train {
namespace {

std::vector<int> all_rows(Eigen::Index n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

void check_labels(std::span<const int> labels, Eigen::Index classes) {
  for (int y : labels)
    if (y < 0 || y >= classes) throw InputError("label " + std::to_string(y) + " outside [0, " +
                                                std::to_string(classes) + ")");
}

}  // namespace

DomainBatch DomainBatch::from_atlas(model::BrainGraph source, model::BrainGraph target,
                                    const mesh::Parcellation& atlas, double core_fraction) {
  mesh::validate(atlas, source.adjacency.vertex_count());
  mesh::validate(atlas, target.adjacency.vertex_count());
  DomainBatch b;
  b.target_core = mesh::core_region(target.adjacency, atlas, core_fraction);
  b.source_labels = atlas.labels;
  b.n_roi = atlas.n_roi;
  b.source = std::move(source);
  b.target = std::move(target);
  return b;
}

void DomainBatch::validate() const {
  const auto ns = source.adjacency.vertex_count();
  const auto nt = target.adjacency.vertex_count();
  if (n_roi < 1) throw InputError("n_roi must be positive");
  if (static_cast<std::size_t>(source.features.rows()) != ns)
    throw ConfigError("source features have " + std::to_string(source.features.rows()) + " rows for " +
                      std::to_string(ns) + " vertices");
  if (static_cast<std::size_t>(target.features.rows()) != nt)
    throw ConfigError("target features have " + std::to_string(target.features.rows()) + " rows for " +
                      std::to_string(nt) + " vertices");
  if (source.features.cols() != target.features.cols())
    throw ConfigError("source and target feature widths differ");
  if (source_labels.size() != ns) throw InputError("source label count does not match the source graph");
  check_labels(source_labels, n_roi);
  check_labels(target_core.labels, n_roi);
  if (target_core.labels.size() != target_core.labeled.size())
    throw InputError("target core labels and vertices differ in length");
  std::vector<char> seen(nt, 0);
  for (const auto* set : {&target_core.labeled, &target_core.unlabeled})
    for (int v : *set) {
      if (v < 0 || static_cast<std::size_t>(v) >= nt) throw InputError("target vertex index out of range");
      if (seen[v]) throw InputError("target vertex " + std::to_string(v) + " is both labeled and unlabeled");
      seen[v] = 1;
    }
  if (target_core.labeled.size() + target_core.unlabeled.size() != nt)
    throw InputError("labeled and unlabeled target sets do not cover the target graph");
}

void TrainHistory::write_csv(std::ostream& out) const {
  const bool with_dice = !records.empty() && records.front().val_dice.has_value();
  out << "step,lr,cls_loss,ent_loss" << (with_dice ? ",val_dice" : "") << '\n';
  for (const auto& r : records) {
    out << r.step << ',' << format_double(r.lr) << ',' << format_double(r.cls_loss) << ','
        << format_double(r.ent_loss);
    if (with_dice) out << ',' << format_double(r.val_dice.value_or(std::numeric_limits<double>::quiet_NaN()));
    out << '\n';
  }
}

double cls_loss(const Matrix& pred_source, std::span<const int> y_source, const Matrix& pred_target_labeled,
                std::span<const int> y_target_labeled) {
  ad::Tape tape;
  const auto ps = tape.input(pred_source);
  auto loss = tape.cross_entropy_mean(ps, all_rows(pred_source.rows()), {y_source.begin(), y_source.end()});
  if (!y_target_labeled.empty()) {
    const auto pt = tape.input(pred_target_labeled);
    loss = tape.scalar_add(loss, tape.cross_entropy_mean(pt, all_rows(pred_target_labeled.rows()),
                                                         {y_target_labeled.begin(), y_target_labeled.end()}));
  }
  tape.forward();
  return tape.value(loss)(0, 0);
}

double ent_loss(const Matrix& pred_target_unlabeled) {
  ad::Tape tape;
  const auto p = tape.input(pred_target_unlabeled);
  const auto loss = tape.entropy_mean(p, all_rows(pred_target_unlabeled.rows()));
  tape.forward();
  return tape.value(loss)(0, 0);
}

void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum, double weight_decay) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols() || velocity.rows() != param.rows() ||
      velocity.cols() != param.cols())
    throw ShapeError("sgd_step: parameter, gradient and velocity shapes differ");
  velocity = momentum * velocity + grad + weight_decay * param;
  param -= lr * velocity;
}

LossGraph build_loss_graph(ad::Tape& tape, const DomainBatch& batch, const TrainConfig& config,
                           const model::ModelParams& params) {
  const model::ModelDims& dims = params.dims;
  LossGraph g;
  g.params = model::bind_params(tape, params);
  const auto source_pattern = model::attention_neighborhoods(batch.source.adjacency);

  const auto xs = tape.input(batch.source.features);
  const auto fs = model::build_extractor(tape, xs, g.params, dims, source_pattern);
  g.source_probs = model::build_classifier(tape, fs, g.params.prototypes, dims.tau);
  g.cls = tape.cross_entropy_mean(g.source_probs, all_rows(batch.source.features.rows()), batch.source_labels);
  g.total = g.cls;
  if (config.source_only) return g;

  const auto target_pattern = batch.target.adjacency == batch.source.adjacency
                                  ? source_pattern
                                  : model::attention_neighborhoods(batch.target.adjacency);
  const auto xt = tape.input(batch.target.features);
  const auto ft = model::build_extractor(tape, xt, g.params, dims, target_pattern);
  g.target_probs = model::build_classifier(tape, ft, g.params.prototypes, dims.tau);
  if (!batch.target_core.labeled.empty())
    g.cls = tape.scalar_add(
        g.cls, tape.cross_entropy_mean(g.target_probs, batch.target_core.labeled, batch.target_core.labels));
  g.total = g.cls;
  if (config.lambda_mme > 0.0 && !batch.target_core.unlabeled.empty()) {
    // Reversed features feed a second classifier pass, so descending -lambda * H moves
    // the prototypes up the entropy and the extractor down it.
    const auto reversed = tape.gradient_reverse(ft, 1.0);
    const auto pu = model::build_classifier(tape, reversed, g.params.prototypes, dims.tau);
    g.ent = tape.entropy_mean(pu, batch.target_core.unlabeled);
    g.routed_ent = tape.scalar_scale(g.ent, -config.lambda_mme);
    g.total = tape.scalar_add(g.cls, g.routed_ent);
  } else {
    g.ent = tape.entropy_mean(g.target_probs, batch.target_core.unlabeled);
  }
  return g;
}

TrainResult train(const DomainBatch& batch, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  batch.validate();
  if (options.validation_truth) mesh::validate(*options.validation_truth, batch.target.adjacency.vertex_count());

  model::ModelDims dims;
  dims.input_dim = static_cast<int>(batch.source.features.cols());
  dims.n_roi = batch.n_roi;
  dims.tau = config.tau;
  TrainResult result{model::init_params(dims, config.seed), {}};
  if (config.steps == 0) return result;

  ad::Tape tape;
  const LossGraph graph = build_loss_graph(tape, batch, config, result.params);
  const auto& nodes = graph.params;
  const auto cls = graph.cls;
  const auto ent = graph.ent;
  const auto pt = graph.target_probs;
  const auto total = graph.total;

  const auto params = nodes.all();
  std::vector<Matrix> velocity;
  velocity.reserve(params.size());
  for (auto id : params) velocity.push_back(Matrix::Zero(tape.value(id).rows(), tape.value(id).cols()));

  result.history.records.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    tape.forward();
    StepRecord rec;
    rec.step = step;
    rec.lr = learning_rate(config, step);
    rec.cls_loss = tape.value(cls)(0, 0);
    rec.ent_loss = ent.valid() ? tape.value(ent)(0, 0) : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(rec.cls_loss)) throw DivergenceError(step, "classification loss is not finite");
    if (options.validation_truth && pt.valid()) {
      const mesh::Parcellation pred{model::argmax_rows(tape.value(pt)), batch.n_roi};
      rec.val_dice = eval::dice(pred, *options.validation_truth).mean;
    }
    tape.backward(total);
    for (std::size_t k = 0; k < params.size(); ++k)
      sgd_step(tape.mutable_value(params[k]), tape.grad(params[k]), velocity[k], rec.lr, config.momentum,
               config.weight_decay);
    if (options.on_step) options.on_step(rec);
    result.history.records.push_back(std::move(rec));
  }
  model::read_params(tape, nodes, result.params);
  return result;
}

}  // namespace gdaip::train
