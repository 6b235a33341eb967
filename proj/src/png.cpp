#include "svae/png.hpp"

#include <fstream>

#include "svae/errors.hpp"

namespace svae {

namespace {

std::uint32_t crc32_png(const std::vector<std::uint8_t>& data) {
  static std::uint32_t table[256];
  static bool built = false;
  if (!built) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    built = true;
  }
  std::uint32_t c = 0xffffffffu;
  for (std::uint8_t b : data) c = table[(c ^ b) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back((x >> 24) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back(x & 0xff);
}

void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                const std::vector<std::uint8_t>& payload) {
  push_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<std::uint8_t> body;
  body.insert(body.end(), type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  push_be32(out, crc32_png(body));
}

std::uint32_t adler32(const std::vector<std::uint8_t>& data) {
  std::uint32_t a = 1, b = 0;
  for (std::uint8_t x : data) {
    a = (a + x) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

}  // namespace

void write_png_gray8(const std::string& path, std::size_t width, std::size_t height,
                     const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != width * height) throw ShapeError("write_png_gray8: pixel count mismatch");

  // Raw scanlines with filter byte 0.
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width + 1));
  for (std::size_t r = 0; r < height; ++r) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + r * width, pixels.begin() + (r + 1) * width);
  }

  // zlib stream: header + stored deflate blocks + adler32.
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  constexpr std::size_t kBlock = 65535;
  for (std::size_t off = 0; off < raw.size(); off += kBlock) {
    std::size_t len = std::min(kBlock, raw.size() - off);
    bool final = off + len == raw.size();
    z.push_back(final ? 1 : 0);
    z.push_back(len & 0xff);
    z.push_back((len >> 8) & 0xff);
    z.push_back(~len & 0xff);
    z.push_back((~len >> 8) & 0xff);
    z.insert(z.end(), raw.begin() + off, raw.begin() + off + len);
  }
  push_be32(z, adler32(raw));

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  push_be32(ihdr, static_cast<std::uint32_t>(width));
  push_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  push_chunk(out, "IHDR", ihdr);
  push_chunk(out, "IDAT", z);
  push_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write PNG: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("failed writing PNG: " + path);
}

}  // namespace svae
