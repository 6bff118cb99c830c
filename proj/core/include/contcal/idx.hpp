#pragma once

// IDX container (big-endian): 0x00 0x00 <dtype> <ndims>, ndims u32 sizes, payload.
// Only dtype 0x08 (unsigned byte) is accepted: 3 dims for images, 1 for labels.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "contcal/datastream.hpp"

namespace contcal::idx {

struct ImageSet {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image
};

ImageSet parse_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_images(const ImageSet& images);
std::vector<std::uint8_t> encode_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Pixels are scaled by 1/255 into [0, 1] and flattened to rows*cols features.
// n_classes = 1 + the largest label. The dataset is tagged with `split`.
LabeledDataset to_dataset(const ImageSet& images, std::span<const std::uint8_t> labels,
                          Split split);

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        Split split = Split::Train);

}  // namespace contcal::idx
