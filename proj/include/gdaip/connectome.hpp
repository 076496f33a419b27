#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "gdaip/common.hpp"

namespace gdaip::connectome {

/// T x N series (time points by vertices).
struct TimeSeries {
  Matrix data;

  Eigen::Index t_len() const { return data.rows(); }
  Eigen::Index vertex_count() const { return data.cols(); }
};

/// Throws InputError when T < 2 or an entry is non-finite.
void validate(const TimeSeries& ts);

struct FcMatrix {
  Matrix values;                // N x N, symmetric, entries in [-1, 1]
  std::vector<int> degenerate;  // zero-variance vertices (zero row/column, unit diagonal)
};

struct JointPca {
  Matrix source;                // N x d
  Matrix target;                // N x d
  Matrix components;            // N x d, orthonormal columns (zero for padded components)
  Vector explained_variance;    // d, non-increasing
  Vector explained_ratio;       // d, fraction of total variance
  int padded_components = 0;    // components beyond the numerical rank
};

/// Pearson correlation of every pair of vertex series (two-pass, f64).
FcMatrix pearson_fc(const TimeSeries& ts);

/// Element-wise mean of equally sized FC matrices.
FcMatrix group_average(std::span<const FcMatrix> fcs);

/// PCA over the row concatenation [source; target] centered by the joint column mean,
/// projected on the top-d right singular vectors. Each component's largest-magnitude
/// loading is made positive.
JointPca joint_pca(const FcMatrix& source, const FcMatrix& target, int d);

/// Optional Fisher z-transform of correlations (clamped at |r| = 1 - 1e-7).
FcMatrix fisher_z(const FcMatrix& fc);

// Binary containers, little-endian.
// TSF1: magic, u32 T, u32 N, T*N f32 time-major.
// MAT1: magic, u32 rows, u32 cols, rows*cols f64 row-major.
std::string encode_timeseries(const TimeSeries& ts);
TimeSeries decode_timeseries(std::string_view bytes, std::string_view source = "<buffer>");
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(std::string_view bytes, std::string_view source = "<buffer>");

TimeSeries load_timeseries(const std::filesystem::path& path);
void save_timeseries(const std::filesystem::path& path, const TimeSeries& ts);
Matrix load_matrix(const std::filesystem::path& path);
void save_matrix(const std::filesystem::path& path, const Matrix& m);

}  // namespace gdaip::connectome
