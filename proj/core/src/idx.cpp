#include "contcal/idx.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "contcal/errors.hpp"

namespace contcal::idx {

namespace {

constexpr std::uint8_t kUnsignedByte = 0x08;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* field) {
  if (bytes.size() < offset + 4) {
    throw ParseError(std::string("IDX: truncated header while reading ") + field,
                     offset);
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

// Validates the 4-byte magic and returns the header length.
std::size_t check_magic(std::span<const std::uint8_t> bytes, std::uint8_t ndims) {
  if (bytes.empty()) throw ParseError("IDX: empty input", 0);
  if (bytes.size() < 4) throw ParseError("IDX: truncated magic number", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) {
    throw ParseError("IDX: bad magic number (leading bytes must be zero)", bytes[0] != 0 ? 0 : 1);
  }
  if (bytes[2] != kUnsignedByte) {
    throw ParseError("IDX: unsupported element type " + std::to_string(bytes[2]) +
                         " (only unsigned byte 0x08)",
                     2);
  }
  if (bytes[3] != ndims) {
    throw ParseError("IDX: expected " + std::to_string(ndims) + " dimensions, found " +
                         std::to_string(bytes[3]),
                     3);
  }
  return 4 + 4 * static_cast<std::size_t>(ndims);
}

void check_payload(std::span<const std::uint8_t> bytes, std::size_t header, std::size_t payload) {
  const std::size_t expected = header + payload;
  if (bytes.size() < expected) {
    throw ParseError("IDX: truncated payload, expected " + std::to_string(expected) +
                         " bytes, have " + std::to_string(bytes.size()),
                     bytes.size());
  }
  if (bytes.size() > expected) {
    throw ParseError("IDX: " + std::to_string(bytes.size() - expected) + " trailing bytes",
                     expected);
  }
}

}  // namespace

ImageSet parse_images(std::span<const std::uint8_t> bytes) {
  const std::size_t header = check_magic(bytes, 3);
  ImageSet out;
  out.count = read_be32(bytes, 4, "image count");
  out.rows = read_be32(bytes, 8, "row count");
  out.cols = read_be32(bytes, 12, "column count");
  const std::size_t payload =
      static_cast<std::size_t>(out.count) * out.rows * static_cast<std::size_t>(out.cols);
  check_payload(bytes, header, payload);
  out.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

std::vector<std::uint8_t> parse_labels(std::span<const std::uint8_t> bytes) {
  const std::size_t header = check_magic(bytes, 1);
  const std::uint32_t count = read_be32(bytes, 4, "label count");
  check_payload(bytes, header, count);
  return {bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end()};
}

std::vector<std::uint8_t> encode_images(const ImageSet& images) {
  std::vector<std::uint8_t> out{0, 0, kUnsignedByte, 3};
  write_be32(out, images.count);
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out{0, 0, kUnsignedByte, 1};
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

LabeledDataset to_dataset(const ImageSet& images, std::span<const std::uint8_t> labels,
                          Split split) {
  if (labels.size() != images.count) {
    throw ParseError("IDX: " + std::to_string(images.count) + " images but " +
                         std::to_string(labels.size()) + " labels",
                     4);
  }
  const std::size_t dim = static_cast<std::size_t>(images.rows) * images.cols;
  LabeledDataset ds;
  ds.split = split;
  ds.inputs = Matrix(images.count, dim);
  auto dst = ds.inputs.data();
  for (std::size_t i = 0; i < images.pixels.size(); ++i) dst[i] = images.pixels[i] / 255.0;
  ds.labels.assign(labels.begin(), labels.end());
  ds.origin.resize(images.count);
  int max_label = -1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ds.origin[i] = static_cast<std::uint32_t>(i);
    max_label = std::max(max_label, static_cast<int>(labels[i]));
  }
  ds.n_classes = max_label + 1;
  return ds;
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        Split split) {
  const auto image_bytes = read_file(images);
  const auto label_bytes = read_file(labels);
  const ImageSet set = parse_images(image_bytes);
  const auto ys = parse_labels(label_bytes);
  return to_dataset(set, ys, split);
}

}  // namespace contcal::idx
