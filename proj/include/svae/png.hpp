#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace svae {

/// Minimal 8-bit grayscale PNG writer. The zlib stream uses stored (type 0)
/// deflate blocks, so output bytes depend only on the input pixels.
void write_png_gray8(const std::string& path, std::size_t width, std::size_t height,
                     const std::vector<std::uint8_t>& pixels);

}  // namespace svae
