#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gdaip/connectome.hpp"
#include "gdaip/fileio.hpp"
#include "gdaip/gat.hpp"
#include "gdaip/metrics.hpp"
#include "gdaip/pipeline.hpp"
#include "gdaip/synth.hpp"
#include "gdaip/trainer.hpp"

namespace fs = std::filesystem;
using namespace gdaip;

namespace {

enum ExitCode { kOk = 0, kInput = 2, kDivergence = 3, kIo = 4 };

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string labels_text(const mesh::Parcellation& atlas) {
  std::ostringstream out;
  mesh::write_labels(out, atlas);
  return out.str();
}

train::TrainConfig load_train_config(const std::string& path, const std::vector<std::string>& overrides) {
  train::TrainConfig config;
  if (!path.empty()) {
    std::istringstream in(read_file(path));
    config = train::parse_config(in, path);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    train::apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

struct SynthArgs {
  synth::SynthSpec spec;
  std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic corpus with planted atlases");
  c->add_option("--out", a.out, "Corpus directory")->required();
  c->add_option("--seed", a.spec.seed);
  c->add_option("--subdivisions", a.spec.subdivisions);
  c->add_option("--n-roi", a.spec.n_roi);
  c->add_option("--source-subjects", a.spec.n_source_subjects);
  c->add_option("--subjects", a.spec.n_subjects);
  c->add_option("--sessions", a.spec.sessions);
  c->add_option("--t-len", a.spec.t_len);
  c->add_option("--signal-dim", a.spec.signal_dim);
  c->add_option("--roi-noise", a.spec.roi_noise);
  c->add_option("--vertex-noise", a.spec.vertex_noise);
  c->add_option("--perturbation", a.spec.perturbation);
  c->add_option("--shift-width", a.spec.shift.smoothing_width);
  c->add_option("--shift-noise", a.spec.shift.noise_sigma);
  c->add_option("--shift-scale", a.spec.shift.scale);
  c->callback([&a] {
    const auto corpus = synth::generate_corpus(a.spec);
    synth::write_corpus(a.out, corpus);
    for (std::size_t s = 0; s < corpus.targets.size(); ++s)
      std::printf("subject %zu planted dice vs reference %.4f\n", s, corpus.targets[s].planted_dice);
  });
}

struct FingerprintArgs {
  std::string ts, out;
  bool fisher = false;
};

void add_fingerprint(CLI::App& app, FingerprintArgs& a) {
  auto* c = app.add_subcommand("fingerprint", "Vertex-wise Pearson FC of one time-series file");
  c->add_option("--ts", a.ts, "TSF1 time series")->required();
  c->add_option("--out", a.out, "MAT1 output")->required();
  c->add_flag("--fisher", a.fisher, "Fisher z-transform the correlations");
  c->callback([&a] {
    auto fc = connectome::pearson_fc(connectome::load_timeseries(a.ts));
    if (a.fisher) fc = connectome::fisher_z(fc);
    connectome::save_matrix(a.out, fc.values);
    if (!fc.degenerate.empty()) std::fprintf(stderr, "warning: %zu zero-variance vertices\n", fc.degenerate.size());
  });
}

struct GraphArgs {
  std::string mesh, target, out;
  std::vector<std::string> sources;
  int d = 50;
  bool fisher = false;
};

void add_graph(CLI::App& app, GraphArgs& a) {
  auto* c = app.add_subcommand("graph", "Build source and target brain graphs");
  c->add_option("--mesh", a.mesh)->required();
  c->add_option("--source", a.sources, "Source-group time series (repeatable)")->required();
  c->add_option("--target", a.target, "Target time series")->required();
  c->add_option("--d", a.d, "PCA dimension");
  c->add_flag("--fisher", a.fisher);
  c->add_option("--out", a.out, "Graph directory")->required();
  c->callback([&a] {
    const auto adj = mesh::build_adjacency(mesh::load_mesh(a.mesh));
    std::vector<connectome::FcMatrix> fcs;
    for (const auto& path : a.sources) {
      fcs.push_back(connectome::pearson_fc(connectome::load_timeseries(path)));
      if (fcs.back().values.rows() != static_cast<Eigen::Index>(adj.vertex_count()))
        throw ConfigError(path + ": vertex count does not match the mesh");
    }
    const auto features =
        pipeline::build_features(connectome::group_average(fcs), connectome::load_timeseries(a.target), a.d, a.fisher);
    if (features.pca.padded_components > 0)
      std::fprintf(stderr, "warning: %d PCA components padded with zeros\n", features.pca.padded_components);
    pipeline::write_graph_dir(a.out, adj, features);
  });
}

struct TrainArgs {
  std::string graph, atlas, config, truth, out;
  std::vector<std::string> overrides;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a parcellation model on a graph directory");
  c->add_option("--graph", a.graph)->required();
  c->add_option("--atlas", a.atlas, "Reference atlas labels")->required();
  c->add_option("--config", a.config, "key=value training config");
  c->add_option("--set", a.overrides, "Config override key=value (repeatable)");
  c->add_option("--truth", a.truth, "Target ground truth for per-step validation Dice");
  c->add_option("--out", a.out)->required();
  c->callback([&a] {
    const auto config = load_train_config(a.config, a.overrides);
    const auto graph = pipeline::load_graph_dir(a.graph);
    const auto atlas = mesh::load_labels(a.atlas);
    train::TrainOptions options;
    if (!a.truth.empty()) options.validation_truth = mesh::load_labels(a.truth, atlas.n_roi);
    const auto batch =
        train::DomainBatch::from_atlas(graph.source_graph(), graph.target_graph(), atlas, config.core_fraction);
    make_dir(a.out);
    const auto start = std::chrono::steady_clock::now();
    const auto result = train::train(batch, config, options);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::map<std::string, std::string> sums;
    const auto emit = [&](const std::string& name, const std::string& bytes) {
      write_file_atomic(fs::path(a.out) / name, bytes);
      sums[name] = sha256_hex(bytes);
    };
    emit("checkpoint.gdpc", model::encode_checkpoint(result.params));
    std::ostringstream history;
    result.history.write_csv(history);
    emit("history.csv", history.str());
    std::ostringstream config_text;
    train::write_config(config_text, config);
    nlohmann::ordered_json manifest;
    manifest["tool_version"] = pipeline::kToolVersion;
    manifest["command"] = "train";
    manifest["graph"] = a.graph;
    manifest["atlas"] = a.atlas;
    manifest["train_config"] = config_text.str();
    manifest["seed"] = config.seed;
    manifest["checksums"] = sums;
    manifest["timings_seconds"] = {{"train", seconds}};
    write_file_atomic(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  });
}

struct PredictArgs {
  std::string graph, checkpoint, domain = "target", out;
};

void add_predict(CLI::App& app, PredictArgs& a) {
  auto* c = app.add_subcommand("predict", "Predict a parcellation from a checkpoint");
  c->add_option("--graph", a.graph)->required();
  c->add_option("--checkpoint", a.checkpoint)->required();
  c->add_option("--domain", a.domain)->check(CLI::IsMember({"source", "target"}));
  c->add_option("--out", a.out, "Label file")->required();
  c->callback([&a] {
    const auto graph = pipeline::load_graph_dir(a.graph);
    const auto params = model::load_checkpoint(a.checkpoint);
    const auto g = a.domain == "source" ? graph.source_graph() : graph.target_graph();
    if (params.dims.input_dim != g.features.cols())
      throw ConfigError("checkpoint expects " + std::to_string(params.dims.input_dim) + " features, graph has " +
                        std::to_string(g.features.cols()));
    write_file_atomic(a.out, labels_text(model::predict_parcellation(g, params)));
  });
}

struct EvaluateArgs {
  std::string pred, truth, ts, out, csv;
  int n_roi = 0;
  std::vector<std::string> sessions;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* c = app.add_subcommand("evaluate", "Dice, consistency and homogeneity report");
  c->add_option("--pred", a.pred, "Predicted labels");
  c->add_option("--truth", a.truth, "Ground-truth labels for Dice");
  c->add_option("--ts", a.ts, "Time series for homogeneity");
  c->add_option("--n-roi", a.n_roi, "ROI count (default: max label + 1 over the inputs)");
  c->add_option("--session", a.sessions, "subject:session:labels for consistency (repeatable)");
  c->add_option("--out", a.out, "JSON report")->required();
  c->add_option("--csv", a.csv, "Flat CSV export");
  c->callback([&a] {
    std::optional<int> n_roi;
    if (a.n_roi > 0) n_roi = a.n_roi;
    const auto load = [&](const std::string& path) { return mesh::load_labels(path, n_roi); };
    const auto unify = [](mesh::Parcellation& x, mesh::Parcellation& y) {
      x.n_roi = y.n_roi = std::max(x.n_roi, y.n_roi);
    };
    eval::MetricsReport report;
    std::optional<mesh::Parcellation> pred;
    if (!a.pred.empty()) pred = load(a.pred);
    if (!a.truth.empty()) {
      if (!pred) throw InputError("--truth requires --pred");
      auto truth = load(a.truth);
      if (!n_roi) unify(*pred, truth);
      report.dice = eval::dice(*pred, truth);
    }
    if (!a.ts.empty()) {
      if (!pred) throw InputError("--ts requires --pred");
      report.homogeneity = eval::homogeneity(*pred, connectome::load_timeseries(a.ts));
    }
    if (!a.sessions.empty()) {
      std::map<eval::SessionKey, mesh::Parcellation> parcellations;
      int max_roi = 0;
      for (const auto& spec : a.sessions) {
        const auto first = spec.find(':');
        const auto second = first == std::string::npos ? first : spec.find(':', first + 1);
        if (second == std::string::npos) throw InputError("--session expects subject:session:path, got '" + spec + "'");
        eval::SessionKey key;
        try {
          key = {std::stoi(spec.substr(0, first)), std::stoi(spec.substr(first + 1, second - first - 1))};
        } catch (const std::exception&) {
          throw InputError("--session expects integer subject and session, got '" + spec + "'");
        }
        auto labels = load(spec.substr(second + 1));
        max_roi = std::max(max_roi, labels.n_roi);
        if (!parcellations.emplace(key, std::move(labels)).second)
          throw InputError("duplicate session " + spec.substr(0, second));
      }
      for (auto& [_, p] : parcellations) p.n_roi = max_roi;
      report.consistency = eval::consistency(parcellations);
    }
    if (!report.dice && !report.homogeneity && !report.consistency)
      throw InputError("nothing to evaluate: give --truth, --ts or --session");
    write_file_atomic(a.out, eval::to_json(report));
    if (!a.csv.empty()) write_file_atomic(a.csv, eval::to_csv(report));
  });
}

struct MergeArgs {
  std::string left, right, out;
  int left_n_roi = 0;
};

void add_merge(CLI::App& app, MergeArgs& a) {
  auto* c = app.add_subcommand("merge", "Concatenate hemisphere label files");
  c->add_option("--left", a.left)->required();
  c->add_option("--right", a.right)->required();
  c->add_option("--left-n-roi", a.left_n_roi, "ROI count of the first hemisphere (offset of the second)")
      ->required();
  c->add_option("--out", a.out)->required();
  c->callback([&a] {
    if (a.left_n_roi < 1) throw InputError("--left-n-roi must be positive");
    const auto left = mesh::load_labels(a.left, a.left_n_roi);
    const auto right = mesh::load_labels(a.right);
    mesh::validate(left);
    mesh::Parcellation merged{left.labels, a.left_n_roi + right.n_roi};
    for (int label : right.labels) merged.labels.push_back(label + a.left_n_roi);
    write_file_atomic(a.out, labels_text(merged));
  });
}

struct PipelineArgs {
  std::string corpus, config, out;
  std::vector<std::string> overrides;
  int subject = 0, session = 0, d = 50, threads = 0;
  bool fisher = false, all = false, no_ablation = false;
};

void add_pipeline(CLI::App& app, PipelineArgs& a) {
  auto* c = app.add_subcommand("pipeline", "Graph, train, predict and evaluate on a synthetic corpus");
  c->add_option("--corpus", a.corpus)->required();
  c->add_option("--subject", a.subject);
  c->add_option("--session", a.session);
  c->add_flag("--all", a.all, "Run every target session plus the source-only ablation");
  c->add_flag("--no-ablation", a.no_ablation, "With --all, skip the source-only ablation");
  c->add_option("--threads", a.threads, "Worker threads for --all (default GDAIP_THREADS)");
  c->add_option("--config", a.config);
  c->add_option("--set", a.overrides);
  c->add_option("--d", a.d);
  c->add_flag("--fisher", a.fisher);
  c->add_option("--out", a.out)->required();
  c->callback([&a] {
    pipeline::ExperimentConfig config;
    config.train = load_train_config(a.config, a.overrides);
    config.pca_dim = a.d;
    config.fisher = a.fisher;
    config.threads = a.threads;
    config.source_only_baseline = !a.no_ablation;
    const auto corpus = synth::load_corpus(a.corpus);
    make_dir(a.out);
    if (!a.all) {
      const auto result = pipeline::run_target_pipeline(corpus, a.subject, a.session, config, a.out);
      std::printf("dice %.4f homogeneity %.4f\n", result.metrics.dice->mean, result.metrics.homogeneity->mean);
      return;
    }
    const auto result = pipeline::run_experiment(corpus, config, [](const pipeline::TargetRun& run) {
      std::fprintf(stderr, "subject %d session %d dice %.4f (%.1fs)\n", run.subject, run.session, run.dice_gdaip,
                   run.seconds);
    });
    for (const auto& run : result.runs) {
      const std::string stem = "sub-" + std::to_string(run.subject) + "_ses-" + std::to_string(run.session);
      write_file_atomic(fs::path(a.out) / (stem + "_gdaip.labels"), labels_text(run.gdaip));
      if (config.source_only_baseline)
        write_file_atomic(fs::path(a.out) / (stem + "_source_only.labels"), labels_text(run.source_only));
    }
    write_file_atomic(fs::path(a.out) / "experiment.json", pipeline::experiment_json(result, config));
    std::printf("mean dice gdaip %.4f source-only %.4f reference %.4f\n", result.mean_dice_gdaip,
                result.mean_dice_source_only, result.mean_dice_reference);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-attention individual brain parcellation with minimax-entropy adaptation"};
  app.require_subcommand(1);
  SynthArgs synth_args;
  FingerprintArgs fingerprint_args;
  GraphArgs graph_args;
  TrainArgs train_args;
  PredictArgs predict_args;
  EvaluateArgs evaluate_args;
  MergeArgs merge_args;
  PipelineArgs pipeline_args;
  add_synth(app, synth_args);
  add_fingerprint(app, fingerprint_args);
  add_graph(app, graph_args);
  add_train(app, train_args);
  add_predict(app, predict_args);
  add_evaluate(app, evaluate_args);
  add_merge(app, merge_args);
  add_pipeline(app, pipeline_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDivergence;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInput;
  }
  return kOk;
}
