#pragma once

// Binary containers and image export.
//
// Tensor record (little-endian): u32 name length, name bytes, u32 rank,
// rank x u64 dims, then the f64 values in row-major order.
//
//   checkpoint: "GZC1" followed by tensor records until end of file.
//   dataset:    "GZDS", u32 version, u64 sample count, then per sample the
//               records x_s, x_h, u_e, x_t, y, no_gaze, same_scene,
//               theta_cam, gaze_dir in that order.
//
// Malformed input raises FormatError carrying the byte offset; nothing is
// returned for a partially decoded file.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gazecone/geometry.hpp"
#include "gazecone/model.hpp"
#include "gazecone/sample.hpp"
#include "gazecone/tensor.hpp"

namespace gazecone::io {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_tensors(std::span<const NamedTensor> tensors);
// Decodes records from `bytes` starting at `offset` (advanced past them);
// `count` < 0 reads until the end.
std::vector<NamedTensor> decode_tensors(std::span<const std::uint8_t> bytes, std::size_t& offset, long count = -1);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Parameters as "<name>.weight" / "<name>.bias" plus a "meta.config" record.
std::vector<NamedTensor> checkpoint_tensors(const model::GazeModel& m);
void save_checkpoint(const model::GazeModel& m, const std::filesystem::path& path);
model::GazeModel load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(std::span<const Sample> samples);
std::vector<Sample> decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(std::span<const Sample> samples, const std::filesystem::path& path);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255) of a square map upsampled `scale` times by
// nearest neighbour, scaled so the largest cell is 255 (all zero stays 0).
std::vector<std::uint8_t> encode_pgm(const geometry::SpatialMap& map, std::size_t scale = 16);
void write_pgm(const geometry::SpatialMap& map, const std::filesystem::path& path, std::size_t scale = 16);
// Raw cell values, one row of the map per line.
void write_map_csv(const geometry::SpatialMap& map, const std::filesystem::path& path);

}  // namespace gazecone::io
