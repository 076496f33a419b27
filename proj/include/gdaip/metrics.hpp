#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdaip/connectome.hpp"
#include "gdaip/mesh_graph.hpp"

namespace gdaip::eval {

struct DiceResult {
  std::vector<double> per_roi;  // NaN for skipped ROIs
  double mean = 0.0;            // over non-skipped ROIs
  std::vector<int> skipped;     // ROIs empty in both parcellations
};

/// Per ROI 2|A_r & B_r| / (|A_r| + |B_r|). Empty in both: skipped. Empty in one: 0.
DiceResult dice(const mesh::Parcellation& a, const mesh::Parcellation& b);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
  bool degenerate = false;  // both samples have zero variance; t and p are NaN
};

/// Two-sided Welch test with Welch-Satterthwaite degrees of freedom.
TTestResult welch_t_test(std::span<const double> x, std::span<const double> y);
/// Two-sided paired test on x[i] - y[i].
TTestResult paired_t_test(std::span<const double> x, std::span<const double> y);

/// I_x(a, b) via Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

struct SessionKey {
  int subject = 0;
  int session = 0;
  auto operator<=>(const SessionKey&) const = default;
};

struct ConsistencyReport {
  std::vector<double> intra;  // mean Dice of every same-subject session pair
  std::vector<double> inter;  // mean Dice of every cross-subject pair
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  TTestResult test;           // Welch, intra vs inter
};

/// Requires at least two subjects, each with at least two sessions.
ConsistencyReport consistency(const std::map<SessionKey, mesh::Parcellation>& parcellations);

struct HomogeneityResult {
  std::vector<double> per_roi;  // NaN for ROIs with fewer than two vertices
  double mean = 0.0;
  std::vector<int> skipped;
};

/// Mean off-diagonal within-ROI Pearson correlation, averaged over ROIs without weighting.
/// Zero-variance vertices correlate 0 with everything.
HomogeneityResult homogeneity(const mesh::Parcellation& atlas, const connectome::TimeSeries& ts);

struct MetricsReport {
  std::optional<DiceResult> dice;
  std::optional<ConsistencyReport> consistency;
  std::optional<HomogeneityResult> homogeneity;
};

/// {dice: {per_roi, mean}, consistency: {intra, inter, t, p}, homogeneity: {per_roi, mean}};
/// absent sections are omitted and NaN values become null.
std::string to_json(const MetricsReport& report);
/// Flat export: one `metric,index,value` row per number.
std::string to_csv(const MetricsReport& report);

}  // namespace gdaip::eval
