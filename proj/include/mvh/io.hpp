#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvh/backbone.hpp"

namespace mvh::io {

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

/// MVW1: magic, then records of (u32 name length, name bytes, u32 rank,
/// rank x u32 dims, f32 data) until end of file. All little-endian.
void write_mvw1(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_mvw1(const std::filesystem::path& path);

std::vector<NamedTensor> to_tensors(const backbone::Weights& w);
/// Copies tensors into w by name. Every parameter of w must be present with matching dims.
void from_tensors(const std::vector<NamedTensor>& tensors, backbone::Weights& w);

/// EMB1: magic, u32 rows, u32 cols, row-major f32 little-endian.
void write_emb1(const std::filesystem::path& path, const nn::Mat& m);
nn::Mat read_emb1(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const nn::Mat& m);

/// Writes to a sibling temporary file and renames it over the target.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace mvh::io
