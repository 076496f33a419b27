#include <string>

#include "../common/byte_codec.hpp"
#include "gdaip/fileio.hpp"
#include "gdaip/gat.hpp"

namespace gdaip::model {
namespace {

constexpr std::string_view kMagic = "GDPC";

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  validate(params);
  detail::ByteWriter w(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.dims.input_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.dims.heads));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.dims.head_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.dims.n_roi));
  w.put_f64(params.dims.tau);
  for (const Matrix* m : params.blocks()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) w.put_f64(m->data()[i]);
  }
  return w.take();
}

ModelParams decode_checkpoint(std::string_view bytes, std::string_view source) {
  detail::ByteReader r(bytes, source);
  r.magic(kMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  ModelDims dims;
  dims.input_dim = static_cast<int>(r.get<std::uint32_t>("input dim"));
  dims.heads = static_cast<int>(r.get<std::uint32_t>("head count"));
  dims.head_dim = static_cast<int>(r.get<std::uint32_t>("head dim"));
  dims.n_roi = static_cast<int>(r.get<std::uint32_t>("roi count"));
  dims.tau = r.get_f64("tau");
  if (dims.input_dim <= 0 || dims.heads <= 0 || dims.head_dim <= 0 || dims.n_roi <= 0 || !(dims.tau > 0.0))
    r.fail("invalid dimension header");
  if (dims.input_dim > (1 << 20) || dims.heads > 1024 || dims.head_dim > (1 << 16) || dims.n_roi > (1 << 20))
    r.fail("implausible dimension header");

  ModelParams p;
  p.dims = dims;
  for (int l = 0; l < kLayerCount; ++l) {
    for (int h = 0; h < dims.heads; ++h) p.layers[l].weights.emplace_back(dims.layer_input_dim(l), dims.head_dim);
    for (int h = 0; h < dims.heads; ++h) p.layers[l].attention.emplace_back(2 * dims.head_dim, 1);
  }
  p.prototypes.resize(dims.n_roi, dims.hidden_dim());
  for (Matrix* m : p.blocks()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = r.get_f64("parameter block");
  }
  r.finish();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace gdaip::model
