#include "uqseg/raster.hpp"

#include <algorithm>
#include <cmath>

#include "uqseg/error.hpp"

namespace uqseg {

const char* to_string(ValueKind kind) {
    switch (kind) {
        case ValueKind::intensity: return "intensity";
        case ValueKind::probability: return "probability";
        case ValueKind::uncertainty: return "uncertainty";
    }
    return "?";
}

Raster::Raster(int width, int height, ValueKind kind, std::vector<double> values)
    : width_(width), height_(height), kind_(kind), values_(std::move(values)) {
    if (width < 1 || height < 1) {
        throw PreconditionError("raster dimensions must be positive, got " +
                                std::to_string(width) + "x" + std::to_string(height));
    }
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw PreconditionError("raster value count " + std::to_string(values_.size()) +
                                " does not match " + std::to_string(width) + "x" +
                                std::to_string(height));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const double v = values_[i];
        const bool ok = kind == ValueKind::uncertainty ? (std::isfinite(v) && v >= 0.0)
                                                       : (v >= 0.0 && v <= 1.0);
        if (!ok) {
            throw PreconditionError(std::string(to_string(kind)) + " raster value " +
                                    std::to_string(v) + " out of range at index " +
                                    std::to_string(i));
        }
    }
}

Raster Raster::filled(int width, int height, ValueKind kind, double value) {
    const auto n = static_cast<std::size_t>(std::max(width, 0)) *
                   static_cast<std::size_t>(std::max(height, 0));
    return Raster(width, height, kind, std::vector<double>(n, value));
}

BinaryMask::BinaryMask(int width, int height)
    : BinaryMask(width, height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                           static_cast<std::size_t>(std::max(height, 0)))) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
    if (width < 1 || height < 1) {
        throw PreconditionError("mask dimensions must be positive");
    }
    if (bits_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw PreconditionError("mask bit count does not match dimensions");
    }
    for (auto& b : bits_) {
        if (b > 1) throw PreconditionError("mask bits must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Calibration::Calibration(double pixel_size_mm) : pixel_size_mm_(pixel_size_mm) {
    if (!std::isfinite(pixel_size_mm) || pixel_size_mm <= 0.0) {
        throw PreconditionError("pixel_size_mm must be finite and > 0");
    }
}

const char* to_string(Modality m) {
    switch (m) {
        case Modality::head: return "head";
        case Modality::femur: return "femur";
        case Modality::unknown: return "unknown";
    }
    return "unknown";
}

Modality modality_from_string(const std::string& s) {
    if (s == "head") return Modality::head;
    if (s == "femur") return Modality::femur;
    if (s == "unknown") return Modality::unknown;
    throw PreconditionError("unknown modality '" + s + "'");
}

void CaseMeta::validate() const {
    if (case_id.empty()) throw PreconditionError("case_id must be non-empty");
    if (gt_measurement_mm && !(*gt_measurement_mm > 0.0)) {
        throw PreconditionError("gt_measurement_mm must be > 0 for case " + case_id);
    }
}

BinaryMask binarize(const Raster& probmap, double threshold) {
    if (probmap.kind() != ValueKind::probability) {
        throw PreconditionError("binarize expects a probability raster");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw PreconditionError("binarize threshold must lie in (0, 1)");
    }
    std::vector<std::uint8_t> bits(probmap.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = probmap[i] > threshold ? 1 : 0;
    return BinaryMask(probmap.width(), probmap.height(), std::move(bits));
}

}  // namespace uqseg
