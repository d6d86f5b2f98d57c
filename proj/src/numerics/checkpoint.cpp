// Copyright (C) 2026 The iposter Authors
// SPDX-License-Identifier: Apache-2.0

#include "iposter/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace iposter::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename T>
  T get() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  void read(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_) throw InvalidInput("checkpoint: truncated file");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes("IPST", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ckpt.config_json.size());
  w.put_bytes(ckpt.config_json.data(), ckpt.config_json.size());
  w.put<std::uint64_t>(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    std::uint64_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.data.size()) throw InvalidInput("checkpoint: tensor '" + t.name + "' data does not match dims");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.put<std::uint64_t>(d);
    w.put_bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "IPST", 4) != 0) throw InvalidInput("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw InvalidInput("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const auto json_len = r.get<std::uint64_t>();
  if (json_len > bytes.size()) throw InvalidInput("checkpoint: truncated file");
  ckpt.config_json.resize(json_len);
  r.read(ckpt.config_json.data(), json_len);
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > bytes.size()) throw InvalidInput("checkpoint: truncated file");
    t.name.resize(name_len);
    r.read(t.name.data(), name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw InvalidInput("checkpoint: implausible rank for '" + t.name + "'");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint64_t>());
      n *= t.dims.back();
    }
    if (n > bytes.size() / sizeof(float)) throw InvalidInput("checkpoint: truncated file");
    t.data.resize(n);
    r.read(t.data.data(), n * sizeof(float));
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw InvalidInput("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InvalidInput("cannot write checkpoint: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

NamedTensor to_named_tensor(std::string name, const Matrixf& m) {
  NamedTensor t;
  t.name = std::move(name);
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

Matrixf to_matrix(const NamedTensor& t) {
  Eigen::Index rows = 1, cols = 1;
  if (t.dims.size() == 2) {
    rows = static_cast<Eigen::Index>(t.dims[0]);
    cols = static_cast<Eigen::Index>(t.dims[1]);
  } else if (t.dims.size() == 1) {
    cols = static_cast<Eigen::Index>(t.dims[0]);
  } else if (!t.dims.empty()) {
    throw InvalidInput("checkpoint: tensor '" + t.name + "' has rank > 2");
  }
  Matrixf m(rows, cols);
  std::memcpy(m.data(), t.data.data(), t.data.size() * sizeof(float));
  return m;
}

}  // namespace iposter::nn
