#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "shrinktea/nets.hpp"
#include "shrinktea/optim.hpp"

namespace shrinktea {

// Binary layout (all integers little-endian):
//   "STNT" | u32 version | u64 fingerprint
//   u32 count | count x tensor record
//   optimizer: f64 base_lr, f64 lr, f64 momentum, f64 weight_decay, f64 decay_factor, u64 step,
//              u32 k, k x u64 decay step, u32 count, count x tensor record (velocity)
//   u32 length | RNG state text
//   u32 epoch
// tensor record: u32 name length | name | u32 rank | rank x u64 dim | f64 values
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t fingerprint = 0;
  std::vector<NamedTensor> tensors;
  OptimizerState optimizer;
  std::string rng_state;
  std::uint32_t epoch = 0;

  const Tensor& find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return t.tensor;
    }
    throw IoError("checkpoint has no tensor '" + name + "'");
  }
};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void tensor(const NamedTensor& t) {
    u32(static_cast<std::uint32_t>(t.name.size()));
    bytes(t.name);
    u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) u64(d);
    for (double v : t.tensor.data()) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  NamedTensor tensor() {
    NamedTensor t;
    t.name = bytes(u32());
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) throw IoError("corrupt tensor record '" + t.name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    const std::size_t n = shape_size(shape);
    need(n * 8);
    std::vector<double> values(n);
    for (auto& v : values) v = f64();
    t.tensor = Tensor(std::move(shape), std::move(values));
    return t;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw IoError("truncated binary file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes("STNT");
  w.u32(ckpt.version);
  w.u64(ckpt.fingerprint);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) w.tensor(t);
  const auto& opt = ckpt.optimizer;
  w.f64(opt.base_lr);
  w.f64(opt.lr);
  w.f64(opt.momentum);
  w.f64(opt.weight_decay);
  w.f64(opt.decay_factor);
  w.u64(opt.step);
  w.u32(static_cast<std::uint32_t>(opt.decay_steps.size()));
  for (auto s : opt.decay_steps) w.u64(s);
  w.u32(static_cast<std::uint32_t>(opt.velocity.size()));
  for (const auto& v : opt.velocity) w.tensor(v);
  w.u32(static_cast<std::uint32_t>(ckpt.rng_state.size()));
  w.bytes(ckpt.rng_state);
  w.u32(ckpt.epoch);
  return w.take();
}

inline Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4) != "STNT") throw IoError("not a checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != Checkpoint::kVersion) throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.fingerprint = r.u64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(r.tensor());
  auto& opt = ckpt.optimizer;
  opt.base_lr = r.f64();
  opt.lr = r.f64();
  opt.momentum = r.f64();
  opt.weight_decay = r.f64();
  opt.decay_factor = r.f64();
  opt.step = r.u64();
  const std::uint32_t k = r.u32();
  for (std::uint32_t i = 0; i < k; ++i) opt.decay_steps.push_back(r.u64());
  const std::uint32_t vcount = r.u32();
  for (std::uint32_t i = 0; i < vcount; ++i) opt.velocity.push_back(r.tensor());
  ckpt.rng_state = r.bytes(r.u32());
  ckpt.epoch = r.u32();
  if (!r.done()) throw IoError("trailing bytes after checkpoint");
  return ckpt;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path, serialize(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

// Deep copies of the current values, so later training does not alter the snapshot.
inline std::vector<NamedTensor> snapshot(const std::vector<NamedTensor>& tensors) {
  std::vector<NamedTensor> out;
  for (const auto& t : tensors) out.push_back({t.name, t.tensor.detach()});
  return out;
}

// Copies stored values into live tensors by name.
inline void restore(std::vector<NamedTensor>& targets, const Checkpoint& ckpt) {
  for (auto& target : targets) {
    const Tensor& src = ckpt.find(target.name);
    if (src.shape() != target.tensor.shape()) {
      throw ConfigError("checkpoint tensor '" + target.name + "' has shape " + shape_str(src.shape()) + ", expected " +
                        shape_str(target.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), target.tensor.mutable_data().begin());
  }
}

}  // namespace shrinktea
