// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtass/config.hpp"
#include "mtass/model.hpp"

// Checkpoint layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "MTAS"
//   4       4     u32 format version (kCheckpointVersion)
//   8       4     u32 byte length L of the config header
//   12      L     ModelConfig as UTF-8 JSON
//   12+L    8     u64 count C of float32 values that follow
//   20+L    4*C   float32 values: every trainable tensor in declaration
//                 order, then every buffer (batch-norm running mean and
//                 variance) in declaration order; each tensor is written in
//                 its storage order (column-major over [shape0, prod(rest)])

namespace mtass {

inline constexpr char kCheckpointMagic[4] = {'M', 'T', 'A', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void write_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t read_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == EOF) throw CheckpointError("checkpoint: unexpected end of file");
    v |= static_cast<std::uint64_t>(c & 0xff) << (8 * i);
  }
  return v;
}

template <typename T>
std::vector<Tensor<T>*> all_state(Model<T>& m) {
  auto s = m.state();
  std::vector<Tensor<T>*> out = s.params;
  out.insert(out.end(), s.buffers.begin(), s.buffers.end());
  return out;
}
}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, Model<T>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint " + path);
  const std::string header = to_json(model.config()).dump();
  os.write(kCheckpointMagic, 4);
  detail::write_le(os, kCheckpointVersion, 4);
  detail::write_le(os, header.size(), 4);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto tensors = detail::all_state(model);
  std::uint64_t count = 0;
  for (auto* t : tensors) count += static_cast<std::uint64_t>(t->numel());
  detail::write_le(os, count, 8);
  for (auto* t : tensors)
    for (Index i = 0; i < t->numel(); ++i) {
      const float f = static_cast<float>(t->value().data()[i]);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      detail::write_le(os, u, 4);
    }
  if (!os) throw CheckpointError("write failed: " + path);
}

inline ModelConfig read_checkpoint_config(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic");
  const auto version = detail::read_le(is, 4);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(version));
  const auto len = detail::read_le(is, 4);
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointError("checkpoint: truncated header");
  return model_config_from_json(nlohmann::json::parse(header));
}

template <typename T>
std::unique_ptr<Model<T>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot read checkpoint " + path);
  const ModelConfig cfg = read_checkpoint_config(is);
  auto model = std::make_unique<Model<T>>(cfg);
  const auto tensors = detail::all_state(*model);
  std::uint64_t expect = 0;
  for (auto* t : tensors) expect += static_cast<std::uint64_t>(t->numel());
  const auto count = detail::read_le(is, 8);
  if (count != expect)
    throw CheckpointError("checkpoint: expected " + std::to_string(expect) + " values, found " +
                          std::to_string(count));
  for (auto* t : tensors)
    for (Index i = 0; i < t->numel(); ++i) {
      const auto u = static_cast<std::uint32_t>(detail::read_le(is, 4));
      float f;
      std::memcpy(&f, &u, 4);
      t->value().data()[i] = static_cast<T>(f);
    }
  model->set_mode(Mode::kEval);
  return model;
}

}  // namespace mtass
