#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace aclseg {

// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

// Any 8/16-bit PNG is decoded to 8-bit RGB (alpha dropped, gray replicated).
Image8 read_png_rgb(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace aclseg
