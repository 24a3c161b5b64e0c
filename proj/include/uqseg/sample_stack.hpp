#pragma once

#include <cstdint>
#include <vector>

#include "uqseg/raster.hpp"

namespace uqseg {

/// One sampled augmentation: spatial part (flip, rotation, scale, translation)
/// plus photometric part (brightness, contrast, additive noise).
struct TransformSpec {
    bool hflip = false;
    double rotation_deg = 0.0;
    double scale = 1.0;
    double translate_x = 0.0;  // fraction of width
    double translate_y = 0.0;  // fraction of height
    double brightness_delta = 0.0;
    double contrast_factor = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;  // realisation of the additive noise

    void validate() const;
    bool spatial_identity() const noexcept {
        return !hflip && rotation_deg == 0.0 && scale == 1.0 && translate_x == 0.0 && translate_y == 0.0;
    }
    /// True when the only spatial component is the (resampling-free) flip.
    bool flip_only() const noexcept {
        return rotation_deg == 0.0 && scale == 1.0 && translate_x == 0.0 && translate_y == 0.0;
    }

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

enum class Provenance { baseline, tta, mcd };

const char* to_string(Provenance p);

/// T aligned probability maps plus how they were produced.
struct SampleStack {
    std::vector<Raster> samples;
    Provenance provenance = Provenance::baseline;
    std::vector<TransformSpec> transforms;  // tta only, one per sample
    std::uint64_t seed = 0;

    std::size_t count() const noexcept { return samples.size(); }
    int width() const { return samples.front().width(); }
    int height() const { return samples.front().height(); }

    /// Throws PreconditionError unless nonempty, equally shaped, and all probability rasters.
    void validate() const;
};

}  // namespace uqseg
