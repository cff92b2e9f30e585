// Copyright 2026 The pfednav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pfednav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pfednav/errors.hpp"

namespace pfednav {
namespace {

constexpr char kMagic[8] = {'P', 'F', 'N', 'T', 'R', 'E', 'E', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void little(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) { little(v); }
  void u64(std::uint64_t v) { little(v); }
  void f64(double v) { little(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error("checkpoint: truncated record");
  }
  template <typename T>
  T little() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::uint32_t u32() { return little<std::uint32_t>(); }
  std::uint64_t u64() { return little<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(little<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(in_.data(), kMagic, sizeof(kMagic)) != 0) throw Error("checkpoint: bad magic");
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_tree(const ParamTree& tree) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tree.layers().size()));
  for (const auto& [key, layer] : tree.layers()) {
    w.str(layer_name(key));
    w.u32(static_cast<std::uint32_t>(layer.size()));
    for (const auto& [name, t] : layer) {
      w.str(name);
      w.u32(static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) w.u64(d);
      for (double v : t.data()) w.f64(v);
    }
  }
  return w.take();
}

ParamTree deserialize_tree(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  }
  ParamTree tree;
  const std::uint32_t layers = r.u32();
  for (std::uint32_t i = 0; i < layers; ++i) {
    const std::string key_name = r.str();
    const auto key = parse_layer_key(key_name);
    if (!key) throw Error("checkpoint: unknown layer key " + key_name);
    Layer layer;
    const std::uint32_t tensors = r.u32();
    for (std::uint32_t j = 0; j < tensors; ++j) {
      std::string name = r.str();
      const std::uint32_t rank = r.u32();
      if (rank == 0 || rank > 8) throw Error("checkpoint: bad rank for " + name);
      Tensor::Shape shape(rank);
      std::size_t count = 1;
      for (auto& d : shape) {
        d = static_cast<std::size_t>(r.u64());
        if (d == 0) throw Error("checkpoint: zero dimension in " + name);
        count *= d;
      }
      r.need(count * 8);
      std::vector<double> data(count);
      for (double& v : data) v = r.f64();
      layer.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    tree.set_layer(*key, std::move(layer));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes");
  return tree;
}

void save_tree(const std::filesystem::path& path, const ParamTree& tree) {
  const auto bytes = serialize_tree(tree);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("checkpoint: write failed for " + path.string());
}

ParamTree load_tree(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_tree(bytes);
}

}  // namespace pfednav
