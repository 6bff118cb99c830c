#pragma once

// Model checkpoint, all integers and floats little-endian:
//
//   offset  size  field
//   0       4     magic "CCKP"
//   4       4     u32 format version (1)
//   8       12    u32 in_dim, u32 hidden_dim, u32 n_classes
//   20      1     u8 head tag: 0 identity, 1 temperature, 2 affine
//   21      1     u8 diagonal_only (affine only, else 0)
//   22      2     reserved, zero
//   24      4     u32 parameter count P
//   then P records: u32 rows, u32 cols, rows*cols f64 row-major
//
// Parameter order: W1, b1, W2, b2, then T (temperature) or W, b (affine).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "contcal/model.hpp"

namespace contcal {

std::vector<std::uint8_t> encode_checkpoint(const CalibratedModel& cm);
CalibratedModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const CalibratedModel& cm);
CalibratedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace contcal
