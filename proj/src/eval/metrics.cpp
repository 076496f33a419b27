#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "gdaip/fileio.hpp"
#include "gdaip/metrics.hpp"

namespace gdaip::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of_finite(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values)
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  return n ? sum / n : kNaN;
}

nlohmann::ordered_json number(double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); }

nlohmann::ordered_json numbers(const std::vector<double>& values) {
  auto arr = nlohmann::ordered_json::array();
  for (double v : values) arr.push_back(number(v));
  return arr;
}

}  // namespace

DiceResult dice(const mesh::Parcellation& a, const mesh::Parcellation& b) {
  if (a.n_roi != b.n_roi)
    throw InputError("dice: ROI counts differ (" + std::to_string(a.n_roi) + " vs " + std::to_string(b.n_roi) + ")");
  if (a.size() != b.size()) throw InputError("dice: vertex counts differ");
  mesh::validate(a);
  mesh::validate(b);
  std::vector<long> size_a(a.n_roi, 0), size_b(a.n_roi, 0), overlap(a.n_roi, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++size_a[a.labels[i]];
    ++size_b[b.labels[i]];
    if (a.labels[i] == b.labels[i]) ++overlap[a.labels[i]];
  }
  DiceResult r;
  r.per_roi.resize(a.n_roi);
  for (int k = 0; k < a.n_roi; ++k) {
    const long denom = size_a[k] + size_b[k];
    if (denom == 0) {
      r.per_roi[k] = kNaN;
      r.skipped.push_back(k);
    } else {
      r.per_roi[k] = 2.0 * overlap[k] / denom;
    }
  }
  r.mean = mean_of_finite(r.per_roi);
  return r;
}

ConsistencyReport consistency(const std::map<SessionKey, mesh::Parcellation>& parcellations) {
  std::map<int, int> sessions;
  for (const auto& [key, _] : parcellations) ++sessions[key.subject];
  if (sessions.size() < 2) throw InputError("consistency needs at least two subjects");
  for (const auto& [subject, n] : sessions)
    if (n < 2) throw InputError("subject " + std::to_string(subject) + " has fewer than two sessions");

  ConsistencyReport r;
  for (auto i = parcellations.begin(); i != parcellations.end(); ++i)
    for (auto j = std::next(i); j != parcellations.end(); ++j) {
      const double d = dice(i->second, j->second).mean;
      (i->first.subject == j->first.subject ? r.intra : r.inter).push_back(d);
    }
  r.intra_mean = mean_of_finite(r.intra);
  r.inter_mean = mean_of_finite(r.inter);
  r.test = welch_t_test(r.intra, r.inter);
  return r;
}

HomogeneityResult homogeneity(const mesh::Parcellation& atlas, const connectome::TimeSeries& ts) {
  connectome::validate(ts);
  mesh::validate(atlas, static_cast<std::size_t>(ts.vertex_count()));
  const Eigen::Index t_len = ts.t_len();

  // Unit-norm centered series; then sum_{i != j} <u_i, u_j> = |sum u|^2 - sum |u_i|^2.
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(t_len, atlas.n_roi);
  std::vector<double> self(atlas.n_roi, 0.0);
  std::vector<long> count(atlas.n_roi, 0);
  for (Eigen::Index v = 0; v < ts.vertex_count(); ++v) {
    const int r = atlas.labels[v];
    ++count[r];
    const Eigen::VectorXd x = ts.data.col(v);
    const Eigen::VectorXd c = x.array() - x.mean();
    const double ss = c.squaredNorm();
    if (ss <= 1e-24 * x.squaredNorm() || ss == 0.0) continue;
    sums.col(r) += c / std::sqrt(ss);
    self[r] += 1.0;
  }

  HomogeneityResult h;
  h.per_roi.resize(atlas.n_roi);
  for (int r = 0; r < atlas.n_roi; ++r) {
    const long n = count[r];
    if (n < 2) {
      h.per_roi[r] = kNaN;
      h.skipped.push_back(r);
      continue;
    }
    h.per_roi[r] = (sums.col(r).squaredNorm() - self[r]) / (static_cast<double>(n) * (n - 1));
  }
  if (static_cast<int>(h.skipped.size()) == atlas.n_roi)
    throw InputError("homogeneity: every ROI has fewer than two vertices");
  h.mean = mean_of_finite(h.per_roi);
  return h;
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (report.dice) {
    j["dice"]["per_roi"] = numbers(report.dice->per_roi);
    j["dice"]["mean"] = number(report.dice->mean);
    j["dice"]["skipped"] = report.dice->skipped;
  }
  if (report.consistency) {
    const auto& c = *report.consistency;
    j["consistency"]["intra"] = numbers(c.intra);
    j["consistency"]["inter"] = numbers(c.inter);
    j["consistency"]["intra_mean"] = number(c.intra_mean);
    j["consistency"]["inter_mean"] = number(c.inter_mean);
    j["consistency"]["t"] = number(c.test.t);
    j["consistency"]["p"] = number(c.test.p);
    j["consistency"]["df"] = number(c.test.df);
    j["consistency"]["degenerate"] = c.test.degenerate;
  }
  if (report.homogeneity) {
    j["homogeneity"]["per_roi"] = numbers(report.homogeneity->per_roi);
    j["homogeneity"]["mean"] = number(report.homogeneity->mean);
    j["homogeneity"]["skipped"] = report.homogeneity->skipped;
  }
  return j.dump(2) + "\n";
}

std::string to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "metric,index,value\n";
  const auto row = [&](const char* metric, long index, double v) {
    out << metric << ',';
    if (index >= 0) out << index;
    out << ',' << (std::isnan(v) ? std::string() : format_double(v)) << '\n';
  };
  if (report.dice) {
    for (std::size_t k = 0; k < report.dice->per_roi.size(); ++k) row("dice", k, report.dice->per_roi[k]);
    row("dice_mean", -1, report.dice->mean);
  }
  if (report.consistency) {
    const auto& c = *report.consistency;
    for (std::size_t k = 0; k < c.intra.size(); ++k) row("intra", k, c.intra[k]);
    for (std::size_t k = 0; k < c.inter.size(); ++k) row("inter", k, c.inter[k]);
    row("intra_mean", -1, c.intra_mean);
    row("inter_mean", -1, c.inter_mean);
    row("t", -1, c.test.t);
    row("p", -1, c.test.p);
  }
  if (report.homogeneity) {
    for (std::size_t k = 0; k < report.homogeneity->per_roi.size(); ++k)
      row("homogeneity", k, report.homogeneity->per_roi[k]);
    row("homogeneity_mean", -1, report.homogeneity->mean);
  }
  return out.str();
}

}  // namespace gdaip::eval
