// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint layout (all integers u64 little-endian, floats f64
// little-endian):
//
//   "ICXEXIT1"                       8-byte magic, last byte is the version
//   header_count, header values      d_model, n_layers, n_heads, d_ff,
//                                    max_features, max_classes,
//                                    decoder_hidden, seed
//   record_count
//   record_count x { name_len, name bytes, rank, dims[rank], values }
//
// Backbone records come first, then dec1..decN.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "icx/backbone.hpp"
#include "icx/decoder.hpp"

namespace icx {

inline constexpr std::string_view kCheckpointMagic = "ICXEXIT1";
inline constexpr std::size_t kCheckpointHeaderFields = 8;

struct Model {
  BackboneWeights backbone;
  DecoderBank bank;

  const ModelConfig& config() const { return backbone.config; }
  NamedTensors named_parameters() const;
};

std::vector<std::uint8_t> serialize_model(const Model& model);
/// Throws IngestionError on bad magic, version, truncation, unknown or
/// missing records, shape mismatches or trailing bytes.
Model deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace icx
