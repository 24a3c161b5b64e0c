#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uqseg/raster.hpp"

namespace uqseg::io {

namespace fs = std::filesystem;

struct LoadedImage {
    Raster image;
    Calibration calibration;
};

/// Decoded 8-bit PGM (P5 binary or P2 ASCII, maxval 255).
struct Pgm {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
};

Pgm parse_pgm(const std::vector<std::uint8_t>& bytes, const std::string& origin);
void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels);

/// Loads an intensity image (byte / 255) and its `<stem>.meta.json` sidecar.
/// Without a sidecar the calibration defaults to 1 mm per pixel.
LoadedImage load_image(const fs::path& path);

/// Writes round(v * 255) as P5. Exact for images that were loaded from PGM.
void save_image(const Raster& image, const fs::path& path);

/// Sidecar path for an image: `dir/<stem>.meta.json`.
fs::path sidecar_path(const fs::path& image_path);
void save_sidecar(const fs::path& image_path, const Calibration& calibration);

// UQP1 float map: "UQP1\n<w> <h>\n" then w*h little-endian binary32, row-major.
void save_probmap(const Raster& probmap, const fs::path& path);
Raster load_probmap(const fs::path& path);

/// UQP1 writer/reader for any value kind (uncertainty rasters use this too).
void save_float_map(const Raster& raster, const fs::path& path);
Raster load_float_map(const fs::path& path, ValueKind kind);

/// 0 = background, 255 = foreground. Any nonzero byte loads as foreground.
void save_mask(const BinaryMask& mask, const fs::path& path);
BinaryMask load_mask(const fs::path& path);

/// 8-bit quick-look: round(value / max * 255); an all-zero raster stays 0.
void save_quantized(const Raster& raster, const fs::path& path);

std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& contents);

}  // namespace uqseg::io
