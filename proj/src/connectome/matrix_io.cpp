#include <cmath>
#include <cstdint>
#include <string>

#include "../common/byte_codec.hpp"
#include "gdaip/connectome.hpp"
#include "gdaip/fileio.hpp"

namespace gdaip::connectome {
namespace {

constexpr std::string_view kTimeSeriesMagic = "TSF1";
constexpr std::string_view kMatrixMagic = "MAT1";

}  // namespace

std::string encode_timeseries(const TimeSeries& ts) {
  detail::ByteWriter w(kTimeSeriesMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ts.t_len()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ts.vertex_count()));
  w.reserve(4 * ts.data.size());
  for (Eigen::Index t = 0; t < ts.t_len(); ++t)
    for (Eigen::Index i = 0; i < ts.vertex_count(); ++i) w.put_f32(static_cast<float>(ts.data(t, i)));
  return w.take();
}

TimeSeries decode_timeseries(std::string_view bytes, std::string_view source) {
  detail::ByteReader r(bytes, source);
  r.magic(kTimeSeriesMagic);
  const auto t_len = r.get<std::uint32_t>("time-point count");
  const auto n = r.get<std::uint32_t>("vertex count");
  if (bytes.size() - r.offset() != 4ULL * t_len * n)
    r.fail("payload size does not match header " + std::to_string(t_len) + "x" + std::to_string(n));
  TimeSeries ts;
  ts.data.resize(t_len, n);
  for (std::uint32_t t = 0; t < t_len; ++t) {
    for (std::uint32_t i = 0; i < n; ++i) {
      const float v = r.get_f32("payload");
      if (!std::isfinite(v)) r.fail("non-finite sample");
      ts.data(t, i) = v;
    }
  }
  r.finish();
  validate(ts);
  return ts;
}

std::string encode_matrix(const Matrix& m) {
  detail::ByteWriter w(kMatrixMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  w.reserve(8 * m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.put_f64(m(i, j));
  return w.take();
}

Matrix decode_matrix(std::string_view bytes, std::string_view source) {
  detail::ByteReader r(bytes, source);
  r.magic(kMatrixMagic);
  const auto rows = r.get<std::uint32_t>("row count");
  const auto cols = r.get<std::uint32_t>("column count");
  if (bytes.size() - r.offset() != 8ULL * rows * cols)
    r.fail("payload size does not match header " + std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.get_f64("payload");
  r.finish();
  return m;
}

TimeSeries load_timeseries(const std::filesystem::path& path) {
  return decode_timeseries(read_file(path), path.string());
}

void save_timeseries(const std::filesystem::path& path, const TimeSeries& ts) {
  write_file_atomic(path, encode_timeseries(ts));
}

Matrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path), path.string()); }

void save_matrix(const std::filesystem::path& path, const Matrix& m) { write_file_atomic(path, encode_matrix(m)); }

}  // namespace gdaip::connectome
