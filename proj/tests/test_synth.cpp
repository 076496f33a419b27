#include <gtest/gtest.h>

#include <filesystem>

#include "gdaip/connectome.hpp"
#include "gdaip/fileio.hpp"
#include "gdaip/metrics.hpp"
#include "gdaip/synth.hpp"
#include "oracles.hpp"

using namespace gdaip;
using namespace gdaip::synth;

namespace {

const mesh::Adjacency& sphere3() {
  static const auto adj = mesh::build_adjacency(mesh::icosphere(3));
  return adj;
}

SynthSpec tiny_spec() {
  SynthSpec s;
  s.subdivisions = 1;
  s.n_roi = 4;
  s.n_source_subjects = 2;
  s.n_subjects = 2;
  s.sessions = 2;
  s.t_len = 64;
  s.shift = {3, 0.5, 2.0};
  s.seed = 17;
  return s;
}

}  // namespace

TEST(PlantedAtlas, Extremes) {
  const auto adj = mesh::build_adjacency(mesh::icosphere(0));
  const auto one = planted_atlas(adj, 1, 1);
  EXPECT_EQ(one.labels, std::vector<int>(12, 0));
  const auto all = planted_atlas(adj, 12, 1);
  std::vector<int> sorted = all.labels;
  std::sort(sorted.begin(), sorted.end());
  for (int v = 0; v < 12; ++v) EXPECT_EQ(sorted[v], v);
  EXPECT_THROW(planted_atlas(adj, 13, 1), InputError);
  EXPECT_THROW(planted_atlas(mesh::Adjacency::from_lists({{1}, {0}, {}}), 2, 1), InputError);
}

TEST(PlantedAtlas, RoisAreConnectedAndNonEmpty) {
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    const auto atlas = planted_atlas(sphere3(), 20, seed);
    EXPECT_TRUE(oracle::classes_connected(sphere3(), atlas.labels, 20));
    std::vector<int> count(20, 0);
    for (int l : atlas.labels) ++count[l];
    EXPECT_GT(*std::min_element(count.begin(), count.end()), 0);
    EXPECT_EQ(planted_atlas(sphere3(), 20, seed), atlas);
  }
}

TEST(PerturbAtlas, ZeroStrengthIsIdentity) {
  const auto atlas = planted_atlas(sphere3(), 20, 1);
  EXPECT_EQ(perturb_atlas(atlas, sphere3(), 0.0, 5), atlas);
}

TEST(PerturbAtlas, ChangesAreLocalAndCoresSurvive) {
  const auto atlas = planted_atlas(sphere3(), 20, 2);
  const auto core = mesh::core_region(sphere3(), atlas, 0.05);
  for (double p : {0.1, 0.3, 0.6}) {
    const auto moved = perturb_atlas(atlas, sphere3(), p, 7);
    const int rounds = static_cast<int>(std::ceil(10 * p));
    for (int r = 0; r < 20; ++r) {
      const auto d = mesh::distance_to_boundary(sphere3(), atlas, r);
      for (std::size_t k = 0; k < d.vertices.size(); ++k) {
        if (moved.labels[d.vertices[k]] != atlas.labels[d.vertices[k]]) {
          EXPECT_LE(d.hops[k], rounds);
        }
      }
    }
    for (int v : core.labeled) EXPECT_EQ(moved.labels[v], atlas.labels[v]);
    std::vector<int> count(20, 0);
    for (int l : moved.labels) ++count[l];
    EXPECT_GT(*std::min_element(count.begin(), count.end()), 0);
  }
}

TEST(PerturbAtlas, ModerateStrengthGivesPartialOverlap) {
  const auto atlas = planted_atlas(sphere3(), 20, 3);
  const double d = eval::dice(perturb_atlas(atlas, sphere3(), 0.3, 8), atlas).mean;
  EXPECT_GT(d, 0.0);
  EXPECT_LT(d, 1.0);
}

TEST(SimulateBold, NoiselessRoisAreHomogeneous) {
  SynthSpec s;
  s.vertex_noise = 0.0;
  const auto atlas = planted_atlas(sphere3(), 20, 4);
  const auto ts = simulate_bold(atlas, s, 9);
  EXPECT_EQ(ts.t_len(), 512);
  EXPECT_EQ(ts.vertex_count(), 642);
  for (std::size_t v = 1; v < atlas.size(); ++v) {
    const auto first = std::find(atlas.labels.begin(), atlas.labels.end(), atlas.labels[v]) - atlas.labels.begin();
    ASSERT_EQ(ts.data.col(v), ts.data.col(first));
  }
  EXPECT_NEAR(eval::homogeneity(atlas, ts).mean, 1.0, 1e-12);
}

TEST(SimulateBold, DistinctSinusoidBanksAreUncorrelated) {
  SynthSpec s;
  s.vertex_noise = 0.0;
  s.roi_noise = 0.0;
  const mesh::Parcellation two{{0, 1}, 2};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ts = simulate_bold(two, s, seed);
    EXPECT_LT(std::abs(oracle::pearson(oracle::column(ts.data, 0), oracle::column(ts.data, 1))), 0.05);
  }
}

TEST(SimulateBold, DeterministicAndValidated) {
  SynthSpec s;
  s.t_len = 64;
  const auto atlas = planted_atlas(sphere3(), 4, 5);
  EXPECT_EQ(simulate_bold(atlas, s, 1).data, simulate_bold(atlas, s, 1).data);
  EXPECT_NE(simulate_bold(atlas, s, 1).data, simulate_bold(atlas, s, 2).data);
  s.t_len = 16;
  EXPECT_THROW(simulate_bold(atlas, s, 1), InputError);
  s.t_len = 64;  // 14 bins for 20 ROIs x 3 sinusoids
  EXPECT_THROW(simulate_bold(planted_atlas(sphere3(), 20, 5), s, 1), InputError);
}

TEST(DomainShift, NeutralIsIdentityAndScaleKeepsFc) {
  SynthSpec s;
  s.t_len = 128;
  const auto atlas = planted_atlas(mesh::build_adjacency(mesh::icosphere(1)), 4, 6);
  const auto ts = simulate_bold(atlas, s, 3);
  EXPECT_EQ(domain_shift(ts, {}, 1).data, ts.data);
  const auto scaled = domain_shift(ts, {1, 0.0, 2.0}, 1);
  EXPECT_LT((connectome::pearson_fc(scaled).values - connectome::pearson_fc(ts).values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(domain_shift(ts, {40, 0.0, 1.0}, 1), InputError);
}

TEST(DomainShift, SmoothingIsACenteredMovingAverage) {
  connectome::TimeSeries ts{Matrix(40, 1)};
  for (int t = 0; t < 40; ++t) ts.data(t, 0) = t * t;
  const auto out = domain_shift(ts, {3, 0.0, 1.0}, 1);
  EXPECT_NEAR(out.data(10, 0), (81 + 100 + 121) / 3.0, 1e-4);
  EXPECT_NEAR(out.data(0, 0), (0 + 1) / 2.0, 1e-6);
}

TEST(DomainShift, NoiseLowersHomogeneity) {
  SynthSpec s;
  const auto atlas = planted_atlas(sphere3(), 20, 7);
  const auto ts = simulate_bold(atlas, s, 4);
  const double before = eval::homogeneity(atlas, ts).mean;
  for (double sigma : {0.25, 1.0}) {
    const double after = eval::homogeneity(atlas, domain_shift(ts, {1, sigma, 1.0}, 2)).mean;
    EXPECT_LT(after, before) << sigma;
  }
}

TEST(Corpus, WriteLoadRoundTrip) {
  const auto spec = tiny_spec();
  const auto corpus = generate_corpus(spec);
  EXPECT_EQ(corpus.source.size(), 2u);
  ASSERT_EQ(corpus.targets.size(), 2u);
  EXPECT_EQ(corpus.targets[0].sessions.size(), 2u);
  EXPECT_EQ(corpus.targets[1].planted_dice, eval::dice(corpus.targets[1].planted, corpus.reference).mean);

  const auto dir = std::filesystem::temp_directory_path() / "gdaip_test_corpus";
  std::filesystem::remove_all(dir);
  write_corpus(dir, corpus);
  const auto back = load_corpus(dir);
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.reference, corpus.reference);
  EXPECT_EQ(back.adjacency, corpus.adjacency);
  EXPECT_EQ(back.source[1].data, corpus.source[1].data);
  EXPECT_EQ(back.targets[1].planted, corpus.targets[1].planted);
  EXPECT_EQ(back.targets[1].sessions[1].data, corpus.targets[1].sessions[1].data);

  const auto dir2 = dir.string() + "_again";
  std::filesystem::remove_all(dir2);
  write_corpus(dir2, back);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir);
    EXPECT_EQ(read_file(entry.path()), read_file(std::filesystem::path(dir2) / rel)) << rel;
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST(Corpus, SpecJsonRoundTrip) {
  const auto spec = tiny_spec();
  EXPECT_EQ(spec_from_json(spec_to_json(spec)), spec);
  EXPECT_THROW(spec_from_json("{\"n_roi\": \"many\"}"), InputError);
}

TEST(Corpus, GeneratorsArePure) {
  const auto a = generate_corpus(tiny_spec()), b = generate_corpus(tiny_spec());
  EXPECT_EQ(a.targets[0].sessions[0].data, b.targets[0].sessions[0].data);
  EXPECT_EQ(a.source[0].data, b.source[0].data);
}
