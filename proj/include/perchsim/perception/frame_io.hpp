#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perchsim/perception/perception.hpp"

namespace perchsim::perception {

/// Debug depth frame dump:
///   bytes 0..7   magic "PSDEPTH1"
///   bytes 8..11  width,  uint32 little-endian
///   bytes 12..15 height, uint32 little-endian
///   then width*height uint16 little-endian millimetres, row-major, 0 = invalid.
inline constexpr std::array<char, 8> kDepthFrameMagic{'P', 'S', 'D', 'E', 'P', 'T', 'H', '1'};
inline constexpr std::size_t kDepthFrameHeaderSize = 16;

/// Depth in millimetres, rounded, saturating at 65535; invalid stays 0.
std::vector<std::uint16_t> to_millimetres(const DepthImage& image);

std::vector<std::uint8_t> encode_depth_frame(const DepthImage& image);
/// Depth values come back quantised to millimetres. Throws Error(IoError) on a
/// malformed buffer.
DepthImage decode_depth_frame(const std::vector<std::uint8_t>& bytes);

void write_depth_frame(const std::filesystem::path& path, const DepthImage& image);
DepthImage read_depth_frame(const std::filesystem::path& path);

}  // namespace perchsim::perception
