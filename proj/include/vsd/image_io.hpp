#pragma once

#include <filesystem>
#include <optional>

#include "vsd/image.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// Decode a JPEG/PNG file into interleaved RGB. Throws IoError on failure.
ImageU8 load_image_u8(const std::filesystem::path& path);

/// Encode as PNG (RGB, 8-bit). Deterministic for identical pixel input.
void save_png(const std::filesystem::path& path, const ImageU8& img);

/// Single-channel 8-bit PNG for label maps (class ids 0..255).
void save_label_png(const std::filesystem::path& path, const MatXi& labels);
MatXi load_label_png(const std::filesystem::path& path);

/// Read (width, height) from PNG/JPEG headers without a full decode.
/// Returns nullopt if the header is not recognized.
std::optional<std::pair<int, int>> probe_image_size(const std::filesystem::path& path);

}  // namespace vsd
