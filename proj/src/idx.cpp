#include <cstdint>
#include <fstream>
#include <limits>
#include <vector>

#include "svae/data.hpp"
#include "svae/errors.hpp"

namespace svae {

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("truncated IDX file: " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

ImageDataset load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open IDX file: " + path);
  std::uint32_t magic = read_be32(in, path);
  if (magic != kImagesMagic) {
    throw DataError("unsupported IDX type in " + path + " (magic " + std::to_string(magic) + ")");
  }
  std::uint64_t count = read_be32(in, path);
  std::uint64_t h = read_be32(in, path);
  std::uint64_t w = read_be32(in, path);
  if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20) ||
      count > std::numeric_limits<std::uint64_t>::max() / (h * w)) {
    throw DataError("IDX dimension overflow in " + path);
  }
  std::uint64_t total = count * h * w;
  std::vector<unsigned char> bytes(total);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(total));
  if (static_cast<std::uint64_t>(in.gcount()) != total) {
    throw DataError("truncated IDX file: " + path);
  }
  ImageDataset ds;
  ds.pixel_model = PixelModel::kBinary;
  ds.images = Tensor({static_cast<std::size_t>(count), static_cast<std::size_t>(h),
                      static_cast<std::size_t>(w)});
  for (std::uint64_t i = 0; i < total; ++i) ds.images[i] = bytes[i] / 255.0;
  return ds;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open IDX file: " + path);
  std::uint32_t magic = read_be32(in, path);
  if (magic != kLabelsMagic) {
    throw DataError("unsupported IDX type in " + path + " (magic " + std::to_string(magic) + ")");
  }
  std::uint64_t count = read_be32(in, path);
  std::vector<std::uint8_t> labels(count);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::uint64_t>(in.gcount()) != count) {
    throw DataError("truncated IDX file: " + path);
  }
  return labels;
}

void write_idx_images(const std::string& path, const Tensor& images) {
  if (images.ndim() != 3) throw ShapeError("write_idx_images: expected [count,h,w]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write IDX file: " + path);
  write_be32(out, kImagesMagic);
  write_be32(out, static_cast<std::uint32_t>(images.shape()[0]));
  write_be32(out, static_cast<std::uint32_t>(images.shape()[1]));
  write_be32(out, static_cast<std::uint32_t>(images.shape()[2]));
  std::vector<unsigned char> bytes(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    double v = images[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    bytes[i] = static_cast<unsigned char>(v * 255.0 + 0.5);
  }
  out.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing IDX file: " + path);
}

}  // namespace svae
