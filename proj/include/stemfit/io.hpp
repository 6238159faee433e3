#pragma once

#include "stemfit/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stemfit {

// S4DM layout (little-endian):
//   0..3   "S4DM"
//   4..7   u32 version = 1
//   8..23  u32 I, J, K, L
//   24..   I*J*K*L float32, row-major (i, j, k, l)
inline constexpr std::uint32_t kS4dmVersion = 1;
inline constexpr std::size_t kS4dmHeaderBytes = 24;

// F4DM layout (little-endian):
//   0..3   "F4DM"
//   4..7   u32 version = 1
//   8..15  u32 K, L
//   16..   K*L float32, row-major (k, l)
inline constexpr std::uint32_t kF4dmVersion = 1;
inline constexpr std::size_t kF4dmHeaderBytes = 16;

std::vector<std::uint8_t> encode_s4dm(const Dataset4D& data);
Dataset4D decode_s4dm(std::span<const std::uint8_t> bytes);

Dataset4D load_s4dm(const std::filesystem::path& path);
void store_s4dm(const Dataset4D& data, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_f4dm(const FilterImage& filter);
FilterImage decode_f4dm(std::span<const std::uint8_t> bytes);

FilterImage load_filter(const std::filesystem::path& path);
void store_filter(const FilterImage& filter, const std::filesystem::path& path);

/// Rounds every weight to the nearest float32, i.e. what store_filter keeps.
FilterImage quantize_to_f32(const FilterImage& filter);

enum class ImageFormat { pgm16, csv };

/// pgm16: P5 maxval 65535, samples big-endian, affine rescale min -> 0,
/// max -> 65535 rounded to nearest; a constant image maps to all zeros.
/// csv: one line per image row, shortest round-trip decimal.
void export_image(const RealImage& image, ImageFormat format, const std::filesystem::path& path);

/// 16-bit samples exactly as export_image(pgm16) would write them.
std::vector<std::uint16_t> pgm16_samples(const RealImage& image);

RealImage read_image_csv(const std::filesystem::path& path);
std::string image_to_csv(const RealImage& image);
RealImage image_from_csv(std::string_view text);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// Writes to `path.tmp` then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Comma-separated table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws FormatError if missing.
  std::size_t column(std::string_view name) const;
  std::string to_string() const;
};

CsvTable parse_csv_table(std::string_view text);
CsvTable read_csv_table(const std::filesystem::path& path);

/// Strict double parse of a whole token; throws FormatError.
double parse_double(std::string_view token);

}  // namespace stemfit
