#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "encfree/data/binary.hpp"
#include "encfree/data/dataset.hpp"

namespace encfree::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Parses an IDX image/label pair (big-endian headers, unsigned byte
// payloads). Pixels are scaled to [0, 1]; X has shape [N, 1, rows, cols].
inline Dataset parse_idx(std::vector<std::uint8_t> image_bytes, std::vector<std::uint8_t> label_bytes,
                         const std::string& image_name = "images", const std::string& label_name = "labels") {
  ByteReader images(std::move(image_bytes), image_name);
  const std::uint32_t image_magic = images.be32();
  if (image_magic != kIdxImageMagic) throw FormatError(image_name + ": bad IDX image magic");
  const std::uint32_t count = images.be32();
  const std::uint32_t rows = images.be32();
  const std::uint32_t cols = images.be32();
  const std::size_t pixels = static_cast<std::size_t>(count) * rows * cols;
  if (images.remaining() < pixels) throw LengthError(image_name + ": truncated pixel payload");

  ByteReader labels(std::move(label_bytes), label_name);
  const std::uint32_t label_magic = labels.be32();
  if (label_magic != kIdxLabelMagic) throw FormatError(label_name + ": bad IDX label magic");
  const std::uint32_t label_count = labels.be32();
  if (label_count != count) {
    throw ConsistencyError("IDX: " + std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
  }
  if (labels.remaining() < count) throw LengthError(label_name + ": truncated label payload");

  Dataset ds;
  ds.x = Tensor({count, 1, rows, cols});
  for (std::size_t i = 0; i < pixels; ++i) ds.x[i] = static_cast<double>(images.u8()) / 255.0;
  ds.labels.emplace(count);
  for (auto& l : *ds.labels) l = labels.u8();
  ds.sample_ids.resize(count);
  std::iota(ds.sample_ids.begin(), ds.sample_ids.end(), std::uint64_t{0});
  ds.value_lo = 0.0;
  ds.value_hi = 1.0;
  return ds;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  return parse_idx(read_file(images_path), read_file(labels_path), images_path, labels_path);
}

inline std::vector<std::uint8_t> encode_idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                                   const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> out;
  auto be = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  be(kIdxImageMagic);
  be(count);
  be(rows);
  be(cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  auto be = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  be(kIdxLabelMagic);
  be(static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace encfree::data
