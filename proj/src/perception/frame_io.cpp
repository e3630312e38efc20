#include "perchsim/perception/frame_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace perchsim::perception {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::size_t offset, std::uint32_t value) {
  for (int i = 0; i < 4; ++i) out[offset + i] = static_cast<std::uint8_t>((value >> (8 * i)) & 0xffU);
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return value;
}

}  // namespace

std::vector<std::uint16_t> to_millimetres(const DepthImage& image) {
  std::vector<std::uint16_t> mm(image.depth.size(), 0);
  std::transform(image.depth.begin(), image.depth.end(), mm.begin(), [](double d) {
    if (!(d > 0.0)) return std::uint16_t{0};
    return static_cast<std::uint16_t>(std::min(65535.0, std::round(d * 1000.0)));
  });
  return mm;
}

std::vector<std::uint8_t> encode_depth_frame(const DepthImage& image) {
  const auto mm = to_millimetres(image);
  std::vector<std::uint8_t> out(kDepthFrameHeaderSize + 2 * mm.size(), 0);
  std::copy(kDepthFrameMagic.begin(), kDepthFrameMagic.end(), out.begin());
  put_u32(out, 8, static_cast<std::uint32_t>(image.width));
  put_u32(out, 12, static_cast<std::uint32_t>(image.height));
  for (std::size_t i = 0; i < mm.size(); ++i) {
    out[kDepthFrameHeaderSize + 2 * i] = static_cast<std::uint8_t>(mm[i] & 0xffU);
    out[kDepthFrameHeaderSize + 2 * i + 1] = static_cast<std::uint8_t>(mm[i] >> 8);
  }
  return out;
}

DepthImage decode_depth_frame(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kDepthFrameHeaderSize ||
      !std::equal(kDepthFrameMagic.begin(), kDepthFrameMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::IoError, "not a depth frame (bad magic)");
  }
  DepthImage image;
  image.width = static_cast<int>(get_u32(bytes, 8));
  image.height = static_cast<int>(get_u32(bytes, 12));
  const std::size_t count = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height);
  if (bytes.size() != kDepthFrameHeaderSize + 2 * count) {
    throw Error(ErrorCode::IoError, "depth frame payload size does not match its header");
  }
  image.depth.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = kDepthFrameHeaderSize + 2 * i;
    const auto mm = static_cast<std::uint16_t>(bytes[at] | (bytes[at + 1] << 8));
    image.depth[i] = mm / 1000.0;
  }
  return image;
}

void write_depth_frame(const std::filesystem::path& path, const DepthImage& image) {
  const auto bytes = encode_depth_frame(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

DepthImage read_depth_frame(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_depth_frame(bytes);
}

}  // namespace perchsim::perception
