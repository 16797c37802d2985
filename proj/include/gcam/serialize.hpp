#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gcam/model.hpp"

namespace gcam {

// GCF1 container:
//   "GCF1" | u16 version (=1) | u32 manifest byte length | UTF-8 JSON manifest | payload
// The manifest describes architecture, branches, meta, dtype and attack record;
// every tensor is a {"offset", "shape"} reference into the payload, which holds
// raw little-endian IEEE-754 values in manifest order.
inline constexpr char kModelMagic[4] = {'G', 'C', 'F', '1'};
inline constexpr std::uint16_t kModelVersion = 1;

template <typename T>
std::vector<std::uint8_t> encode_model(const Model<T>& model);

/// Decodes into T, converting from the stored dtype when they differ.
template <typename T>
Model<T> decode_model(const std::vector<std::uint8_t>& bytes);

/// dtype recorded in an encoded model.
DType encoded_dtype(const std::vector<std::uint8_t>& bytes);

template <typename T>
void save_model(const Model<T>& model, const std::filesystem::path& path);

template <typename T>
Model<T> load_model(const std::filesystem::path& path);

DType stored_dtype(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace gcam
