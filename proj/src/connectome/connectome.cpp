#include "gdaip/connectome.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SVD>

namespace gdaip::connectome {

void validate(const TimeSeries& ts) {
  if (ts.t_len() < 2) throw InputError("time series needs at least 2 time points");
  if (ts.vertex_count() < 1) throw InputError("time series has no vertices");
  if (!ts.data.allFinite()) throw InputError("time series contains non-finite values");
}

FcMatrix pearson_fc(const TimeSeries& ts) {
  validate(ts);
  const Eigen::Index n = ts.vertex_count();

  // Column-major copy so each vertex series is contiguous.
  Eigen::MatrixXd z = ts.data;
  FcMatrix fc;
  for (Eigen::Index j = 0; j < n; ++j) {
    auto col = z.col(j);
    const double mean = col.sum() / static_cast<double>(col.size());
    const double raw = col.squaredNorm();
    col.array() -= mean;
    const double ss = col.squaredNorm();
    if (ss <= 1e-24 * raw || ss == 0.0) {
      col.setZero();
      fc.degenerate.push_back(static_cast<int>(j));
    } else {
      col /= std::sqrt(ss);
    }
  }

  Eigen::MatrixXd c(n, n);
  c.noalias() = z.transpose() * z;
  fc.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    fc.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = std::clamp(c(i, j), -1.0, 1.0);
      fc.values(i, j) = r;
      fc.values(j, i) = r;
    }
  }
  return fc;
}

FcMatrix group_average(std::span<const FcMatrix> fcs) {
  if (fcs.empty()) throw InputError("group_average needs at least one FC matrix");
  const auto n = fcs.front().values.rows();
  FcMatrix out;
  out.values = Matrix::Zero(n, n);
  for (const auto& fc : fcs) {
    if (fc.values.rows() != n || fc.values.cols() != n)
      throw InputError("FC matrices differ in size");
    out.values += fc.values;
  }
  out.values /= static_cast<double>(fcs.size());
  return out;
}

JointPca joint_pca(const FcMatrix& source, const FcMatrix& target, int d) {
  const Eigen::Index n = source.values.cols();
  if (target.values.cols() != n || source.values.rows() != n || target.values.rows() != n)
    throw InputError("source and target FC matrices differ in size");
  if (d <= 0 || d > n)
    throw InputError("PCA dimension " + std::to_string(d) + " must lie in [1, " + std::to_string(n) + "]");

  Eigen::MatrixXd stacked(2 * n, n);
  stacked.topRows(n) = source.values;
  stacked.bottomRows(n) = target.values;
  const Eigen::RowVectorXd mean = stacked.colwise().mean();
  stacked.rowwise() -= mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();

  JointPca out;
  out.components = Matrix::Zero(n, d);
  out.explained_variance = Vector::Zero(d);
  out.explained_ratio = Vector::Zero(d);
  const double total = sv.squaredNorm();
  const double tol = (sv.size() > 0 ? sv(0) : 0.0) * static_cast<double>(2 * n) *
                     std::numeric_limits<double>::epsilon();
  for (int k = 0; k < d; ++k) {
    if (k >= sv.size() || sv(k) <= tol || sv(k) == 0.0) {
      ++out.padded_components;
      continue;
    }
    Vector comp = v.col(k);
    Eigen::Index arg = 0;
    comp.cwiseAbs().maxCoeff(&arg);
    if (comp(arg) < 0) comp = -comp;
    out.components.col(k) = comp;
    out.explained_variance(k) = sv(k) * sv(k) / static_cast<double>(2 * n - 1);
    out.explained_ratio(k) = total > 0 ? sv(k) * sv(k) / total : 0.0;
  }

  // Project each domain separately so identical inputs give identical rows.
  Matrix centered = source.values.rowwise() - mean;
  out.source.noalias() = centered * out.components;
  centered = target.values.rowwise() - mean;
  out.target.noalias() = centered * out.components;
  return out;
}

FcMatrix fisher_z(const FcMatrix& fc) {
  static constexpr double kLimit = 1.0 - 1e-7;
  FcMatrix out = fc;
  out.values = fc.values.unaryExpr([](double r) { return std::atanh(std::clamp(r, -kLimit, kLimit)); });
  return out;
}

}  // namespace gdaip::connectome
