#pragma once

#include <filesystem>

#include "photocon/image.hpp"

namespace photocon {

/// Decodes an 8- or 16-bit grayscale/RGB PNG (palette images expand to RGB),
/// scaling samples to [0,1].
ImageTensor load_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG. Samples are clamped to [0,1] and rounded to the
/// nearest of 256 levels. Only 1 and 3 channels are accepted.
void save_png(const ImageTensor& img, const std::filesystem::path& path);

}  // namespace photocon
