// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "icx/error.hpp"

namespace icx {

namespace {

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw IngestionError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                           std::to_string(pos_));
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

Model blank_model(const ModelConfig& config) {
  Model m{BackboneWeights::init(config), {}};
  std::vector<DecoderWeights> decs;
  for (std::size_t l = 1; l <= config.n_layers; ++l) decs.push_back(DecoderWeights::init(config, l, 0));
  m.bank = DecoderBank(std::move(decs));
  return m;
}

}  // namespace

NamedTensors Model::named_parameters() const {
  NamedTensors out = backbone.named_parameters();
  auto dec = bank.named_parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  const ModelConfig& c = model.config();
  if (model.bank.n_layers() != c.n_layers) throw ContractError("checkpoint: bank depth differs from backbone");
  Writer w;
  w.raw(kCheckpointMagic);
  w.u64(kCheckpointHeaderFields);
  for (std::uint64_t v : {std::uint64_t{c.d_model}, std::uint64_t{c.n_layers}, std::uint64_t{c.n_heads},
                          std::uint64_t{c.d_ff}, std::uint64_t{c.max_features}, std::uint64_t{c.max_classes},
                          std::uint64_t{c.decoder_width()}, c.seed})
    w.u64(v);
  const NamedTensors params = model.named_parameters();
  w.u64(params.size());
  for (const auto& [name, t] : params) {
    w.u64(name.size());
    w.raw(name);
    w.u64(t.rank());
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::string magic = r.raw(kCheckpointMagic.size(), "magic");
  if (magic.compare(0, 7, kCheckpointMagic.substr(0, 7)) != 0) {
    throw IngestionError("not a checkpoint: bad magic");
  }
  if (magic[7] != kCheckpointMagic[7]) {
    throw IngestionError(std::string("unsupported checkpoint version '") + magic[7] + "'");
  }
  const std::uint64_t n_header = r.u64("header size");
  if (n_header != kCheckpointHeaderFields) {
    throw IngestionError("checkpoint header has " + std::to_string(n_header) + " fields, expected " +
                         std::to_string(kCheckpointHeaderFields));
  }
  ModelConfig c;
  c.d_model = r.u64("d_model");
  c.n_layers = r.u64("n_layers");
  c.n_heads = r.u64("n_heads");
  c.d_ff = r.u64("d_ff");
  c.max_features = r.u64("max_features");
  c.max_classes = r.u64("max_classes");
  c.decoder_hidden = r.u64("decoder_hidden");
  c.seed = r.u64("seed");
  constexpr std::uint64_t kSane = 1u << 16;
  for (std::size_t v : {c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_features, c.max_classes, c.decoder_hidden}) {
    if (v == 0 || v > kSane) throw IngestionError("checkpoint header holds an implausible dimension");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IngestionError(std::string("checkpoint header: ") + e.what());
  }

  Model model = blank_model(c);
  std::map<std::string, Tensor> slots;
  for (auto& [name, t] : model.named_parameters()) slots.emplace(name, t);

  const std::uint64_t n_records = r.u64("record count");
  if (n_records != slots.size()) {
    throw IngestionError("checkpoint has " + std::to_string(n_records) + " records, expected " +
                         std::to_string(slots.size()));
  }
  for (std::uint64_t i = 0; i < n_records; ++i) {
    const std::uint64_t name_len = r.u64("name length");
    if (name_len > 256) throw IngestionError("checkpoint record name too long");
    const std::string name = r.raw(name_len, "record name");
    auto it = slots.find(name);
    if (it == slots.end()) throw IngestionError("unexpected checkpoint record '" + name + "'");
    Tensor& slot = it->second;
    const std::uint64_t rank = r.u64("rank");
    if (rank != slot.rank()) throw IngestionError("record '" + name + "' has wrong rank");
    for (std::uint64_t d = 0; d < rank; ++d) {
      if (r.u64("dimension") != slot.shape()[d]) {
        throw IngestionError("record '" + name + "' has shape incompatible with " + shape_string(slot.shape()));
      }
    }
    for (auto& v : slot.mutable_data()) v = r.f64("values");
    slots.erase(it);
  }
  if (!r.done()) throw IngestionError("trailing bytes after checkpoint at byte " + std::to_string(r.offset()));
  return model;
}

void save_model(const Model& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace icx
