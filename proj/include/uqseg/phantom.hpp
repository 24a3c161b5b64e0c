#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uqseg/raster.hpp"

namespace uqseg::phantom {

enum class ShapeKind { ellipse, capsule };

/// Analytic shape on a canvas. Pixel (i, j) has its centre at (i, j).
/// Orientation is measured from +x towards +y.
struct PhantomSpec {
    ShapeKind kind = ShapeKind::ellipse;
    int width = 256;
    int height = 256;
    double center_x = 127.5;
    double center_y = 127.5;
    // ellipse
    double semi_major = 60.0;
    double semi_minor = 40.0;
    // capsule: end-to-end length including both caps
    double length = 80.0;
    double radius = 8.0;
    double orientation_deg = 0.0;

    double inside_level = 0.8;
    double outside_level = 0.2;
    double noise_sigma = 0.0;
    int blur_passes = 0;
    double pixel_size_mm = 0.1;

    /// Throws PreconditionError (including a shape that leaves < 2 px margin).
    void validate() const;
    bool contains(double x, double y) const;
    /// Ground-truth measurement in pixels (ellipse circumference or capsule length).
    double measurement_px() const;
};

struct Phantom {
    Raster image;
    BinaryMask mask;
    CaseMeta meta;
};

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed, const std::string& case_id = "phantom");

/// Ranges the dataset generator jitters within.
struct DatasetOptions {
    int width = 256;
    int height = 256;
    double pixel_size_mm = 0.1;
    double noise_sigma = 0.05;
    int blur_passes = 1;
    double inside_level = 0.8;
    double outside_level = 0.2;
    double center_jitter_px = 10.0;
    // head
    double semi_major_min = 60.0, semi_major_max = 100.0;
    double aspect_min = 1.0, aspect_max = 1.8;
    // femur
    double length_min = 60.0, length_max = 140.0;
    double radius_min = 5.0, radius_max = 9.0;
};

/// Draws the per-case spec for case `index` of a dataset (deterministic).
PhantomSpec dataset_case_spec(Modality kind, const DatasetOptions& options, std::uint64_t case_seed);

/// Writes `<id>.pgm`, `<id>.meta.json`, `<id>_mask.pgm` per case and a
/// `dataset.json` index. Per-case seed = hash_seed(seed, index).
std::vector<CaseMeta> generate_dataset(Modality kind, int count, std::uint64_t seed,
                                       const std::filesystem::path& out_dir,
                                       const DatasetOptions& options = {});

struct DatasetEntry {
    CaseMeta meta;
    std::filesystem::path image;  // resolved against the dataset directory
    std::filesystem::path mask;   // empty when the index has none
};

/// Parses `dataset.json` in `dir`; relative paths resolve against `dir`.
std::vector<DatasetEntry> read_dataset_index(const std::filesystem::path& dir);

/// Uniform [0, 1) noise image, the out-of-domain probe.
Raster noise_image(int width, int height, std::uint64_t seed);

/// One pass of an edge-clamped 3x3 box blur.
std::vector<double> box_blur(const std::vector<double>& values, int width, int height);

}  // namespace uqseg::phantom
