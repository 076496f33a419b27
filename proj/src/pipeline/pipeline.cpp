#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gdaip/fileio.hpp"
#include "gdaip/pipeline.hpp"
#include "gdaip/rng.hpp"

namespace gdaip::pipeline {
namespace {

using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string config_text(const train::TrainConfig& config) {
  std::ostringstream out;
  train::write_config(out, config);
  return out.str();
}

std::string labels_text(const mesh::Parcellation& atlas) {
  std::ostringstream out;
  mesh::write_labels(out, atlas);
  return out.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

}  // namespace

int thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GDAIP_THREADS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw InputError("GDAIP_THREADS must be a positive integer");
    return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto work = [&] {
    for (std::size_t i; !failed && (i = next++) < n;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
}

Features build_features(const connectome::FcMatrix& group_fc, const connectome::TimeSeries& target, int d,
                        bool fisher) {
  Features f;
  f.group_fc = group_fc;
  f.individual_fc = connectome::pearson_fc(target);
  if (f.individual_fc.values.rows() != group_fc.values.rows())
    throw ConfigError("target series and group FC have different vertex counts");
  f.pca = fisher ? connectome::joint_pca(connectome::fisher_z(f.group_fc), connectome::fisher_z(f.individual_fc), d)
                 : connectome::joint_pca(f.group_fc, f.individual_fc, d);
  return f;
}

std::map<std::string, std::string> write_graph_dir(const std::filesystem::path& dir, const mesh::Adjacency& adj,
                                                   const Features& features) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::map<std::string, std::string> sums;
  const auto emit = [&](const std::string& name, const std::string& bytes) {
    write_file_atomic(dir / name, bytes);
    sums[name] = sha256_hex(bytes);
  };
  std::ostringstream adj_text;
  mesh::write_adjacency(adj_text, adj);
  emit("adjacency.txt", adj_text.str());
  emit("group_fc.mat", connectome::encode_matrix(features.group_fc.values));
  emit("individual_fc.mat", connectome::encode_matrix(features.individual_fc.values));
  emit("source_features.mat", connectome::encode_matrix(features.pca.source));
  emit("target_features.mat", connectome::encode_matrix(features.pca.target));
  return sums;
}

GraphFiles load_graph_dir(const std::filesystem::path& dir) {
  for (const char* name :
       {"adjacency.txt", "group_fc.mat", "individual_fc.mat", "source_features.mat", "target_features.mat"})
    if (!std::filesystem::is_regular_file(dir / name))
      throw IoError("graph directory " + dir.string() + " lacks " + name);
  GraphFiles g;
  std::istringstream adj_text(read_file(dir / "adjacency.txt"));
  g.adjacency = mesh::read_adjacency(adj_text, (dir / "adjacency.txt").string());
  g.source_features = connectome::load_matrix(dir / "source_features.mat");
  g.target_features = connectome::load_matrix(dir / "target_features.mat");
  const auto n = static_cast<Eigen::Index>(g.adjacency.vertex_count());
  if (g.source_features.rows() != n || g.target_features.rows() != n)
    throw ConfigError("feature matrices in " + dir.string() + " do not match the adjacency vertex count");
  if (g.source_features.cols() != g.target_features.cols())
    throw ConfigError("source and target feature widths differ in " + dir.string());
  return g;
}

std::uint64_t run_seed(std::uint64_t root, int subject, int session) {
  return derive_seed(root, "target_run", {static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(session)});
}

ExperimentResult run_experiment(const synth::Corpus& corpus, const ExperimentConfig& config,
                                const std::function<void(const TargetRun&)>& on_run) {
  const auto start = Clock::now();
  config.train.validate();
  ExperimentResult result;
  result.threads = thread_count(config.threads);

  std::vector<connectome::FcMatrix> source_fcs(corpus.source.size());
  parallel_for(source_fcs.size(), result.threads,
               [&](std::size_t i) { source_fcs[i] = connectome::pearson_fc(corpus.source[i]); });
  const auto group_fc = connectome::group_average(source_fcs);
  source_fcs.clear();

  const int sessions = corpus.spec.sessions;
  const std::size_t n_runs = corpus.targets.size() * static_cast<std::size_t>(sessions);
  result.runs.resize(n_runs);
  std::mutex callback_mutex;
  // Each GDAIP run and each ablation run is a separate task so workers stay balanced.
  const std::size_t tasks = n_runs * (config.source_only_baseline ? 2 : 1);
  parallel_for(tasks, result.threads, [&](std::size_t task) {
    const auto task_start = Clock::now();
    const std::size_t index = task % n_runs;
    const bool ablation = task >= n_runs;
    const int subject = static_cast<int>(index) / sessions;
    const int session = static_cast<int>(index) % sessions;
    const auto& target = corpus.targets[subject];
    const auto& ts = target.sessions[session];

    const auto features = build_features(group_fc, ts, config.pca_dim, config.fisher);
    auto batch = train::DomainBatch::from_atlas({corpus.adjacency, features.pca.source},
                                                {corpus.adjacency, features.pca.target}, corpus.reference,
                                                config.train.core_fraction);
    train::TrainConfig tc = config.train;
    tc.seed = run_seed(config.train.seed, subject, session);
    tc.source_only = ablation;
    const auto trained = train::train(batch, tc);
    const auto prediction = model::predict_parcellation(batch.target, trained.params);

    TargetRun& run = result.runs[index];
    if (ablation) {
      run.source_only = prediction;
      run.dice_source_only = eval::dice(prediction, target.planted).mean;
      return;
    }
    run.subject = subject;
    run.session = session;
    run.seed = tc.seed;
    run.gdaip = prediction;
    run.params = trained.params;
    run.dice_gdaip = eval::dice(prediction, target.planted).mean;
    run.dice_reference = eval::dice(corpus.reference, target.planted).mean;
    run.homogeneity_gdaip = eval::homogeneity(prediction, ts).mean;
    run.homogeneity_reference = eval::homogeneity(corpus.reference, ts).mean;
    run.seconds = seconds_since(task_start);
    if (on_run) {
      std::lock_guard lock(callback_mutex);
      on_run(run);
    }
  });

  std::map<eval::SessionKey, mesh::Parcellation> predictions;
  std::vector<double> dg, ds, dr, hg, hr;
  std::vector<double> subject_hg(corpus.targets.size(), 0.0), subject_hr(corpus.targets.size(), 0.0);
  for (const auto& run : result.runs) {
    predictions[{run.subject, run.session}] = run.gdaip;
    dg.push_back(run.dice_gdaip);
    dr.push_back(run.dice_reference);
    if (config.source_only_baseline) ds.push_back(run.dice_source_only);
    hg.push_back(run.homogeneity_gdaip);
    hr.push_back(run.homogeneity_reference);
    subject_hg[run.subject] += run.homogeneity_gdaip / sessions;
    subject_hr[run.subject] += run.homogeneity_reference / sessions;
  }
  if (corpus.targets.size() >= 2 && sessions >= 2) result.consistency = eval::consistency(predictions);
  if (corpus.targets.size() >= 2) result.homogeneity_test = eval::paired_t_test(subject_hg, subject_hr);
  result.mean_dice_gdaip = mean(dg);
  result.mean_dice_source_only = config.source_only_baseline ? mean(ds) : std::numeric_limits<double>::quiet_NaN();
  result.mean_dice_reference = mean(dr);
  result.mean_homogeneity_gdaip = mean(hg);
  result.mean_homogeneity_reference = mean(hr);
  result.seconds = seconds_since(start);
  return result;
}

std::string experiment_json(const ExperimentResult& r, const ExperimentConfig& config) {
  const auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  ordered_json j;
  j["tool_version"] = kToolVersion;
  j["train_config"] = config_text(config.train);
  j["pca_dim"] = config.pca_dim;
  j["fisher"] = config.fisher;
  j["threads"] = r.threads;
  j["seconds"] = r.seconds;
  j["mean_dice"] = {{"gdaip", num(r.mean_dice_gdaip)},
                    {"source_only", num(r.mean_dice_source_only)},
                    {"reference", num(r.mean_dice_reference)}};
  j["mean_homogeneity"] = {{"gdaip", num(r.mean_homogeneity_gdaip)}, {"reference", num(r.mean_homogeneity_reference)}};
  j["homogeneity_paired_t"] = {{"t", num(r.homogeneity_test.t)}, {"p", num(r.homogeneity_test.p)}};
  j["consistency"] = {{"intra_mean", num(r.consistency.intra_mean)},
                      {"inter_mean", num(r.consistency.inter_mean)},
                      {"t", num(r.consistency.test.t)},
                      {"p", num(r.consistency.test.p)}};
  auto runs = ordered_json::array();
  for (const auto& run : r.runs)
    runs.push_back({{"subject", run.subject},
                    {"session", run.session},
                    {"seed", run.seed},
                    {"dice_gdaip", num(run.dice_gdaip)},
                    {"dice_source_only", num(run.dice_source_only)},
                    {"dice_reference", num(run.dice_reference)},
                    {"homogeneity_gdaip", num(run.homogeneity_gdaip)},
                    {"homogeneity_reference", num(run.homogeneity_reference)},
                    {"seconds", run.seconds}});
  j["runs"] = runs;
  return j.dump(2) + "\n";
}

PipelineOutputs run_target_pipeline(const synth::Corpus& corpus, int subject, int session,
                                    const ExperimentConfig& config, const std::filesystem::path& out) {
  const auto start = Clock::now();
  if (subject < 0 || subject >= static_cast<int>(corpus.targets.size()))
    throw InputError("subject " + std::to_string(subject) + " not in corpus");
  if (session < 0 || session >= corpus.spec.sessions)
    throw InputError("session " + std::to_string(session) + " not in corpus");
  config.train.validate();
  const auto& target = corpus.targets[subject];
  const auto& ts = target.sessions[session];

  std::vector<connectome::FcMatrix> source_fcs;
  for (const auto& s : corpus.source) source_fcs.push_back(connectome::pearson_fc(s));
  const auto features = build_features(connectome::group_average(source_fcs), ts, config.pca_dim, config.fisher);
  source_fcs.clear();

  PipelineOutputs result;
  std::map<std::string, double> timings;
  for (auto& [name, sum] : write_graph_dir(out / "graph", corpus.adjacency, features))
    result.checksums["graph/" + name] = sum;
  timings["graph"] = seconds_since(start);

  const auto train_start = Clock::now();
  auto batch = train::DomainBatch::from_atlas({corpus.adjacency, features.pca.source},
                                              {corpus.adjacency, features.pca.target}, corpus.reference,
                                              config.train.core_fraction);
  train::TrainOptions options;
  options.validation_truth = target.planted;
  const auto trained = train::train(batch, config.train, options);
  timings["train"] = seconds_since(train_start);

  const auto emit = [&](const std::string& name, const std::string& bytes) {
    write_file_atomic(out / name, bytes);
    result.checksums[name] = sha256_hex(bytes);
  };
  emit("checkpoint.gdpc", model::encode_checkpoint(trained.params));
  std::ostringstream history;
  trained.history.write_csv(history);
  emit("history.csv", history.str());

  result.prediction = model::predict_parcellation(batch.target, trained.params);
  emit("predicted.labels", labels_text(result.prediction));
  result.metrics.dice = eval::dice(result.prediction, target.planted);
  result.metrics.homogeneity = eval::homogeneity(result.prediction, ts);
  emit("metrics.json", eval::to_json(result.metrics));
  emit("metrics.csv", eval::to_csv(result.metrics));
  timings["total"] = seconds_since(start);

  ordered_json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = "pipeline";
  manifest["corpus_spec"] = ordered_json::parse(synth::spec_to_json(corpus.spec));
  manifest["subject"] = subject;
  manifest["session"] = session;
  manifest["train_config"] = config_text(config.train);
  manifest["pca_dim"] = config.pca_dim;
  manifest["fisher"] = config.fisher;
  manifest["seed"] = config.train.seed;
  manifest["checksums"] = result.checksums;
  manifest["timings_seconds"] = timings;
  write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace gdaip::pipeline
