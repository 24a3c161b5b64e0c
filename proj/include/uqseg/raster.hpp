#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uqseg {

enum class ValueKind { intensity, probability, uncertainty };

const char* to_string(ValueKind kind);

/// Row-major 2-D grid of doubles. Values are validated against the kind on
/// construction and never change afterwards.
class Raster {
public:
    Raster(int width, int height, ValueKind kind, std::vector<double> values);

    /// Constant-valued raster.
    static Raster filled(int width, int height, ValueKind kind, double value);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }
    ValueKind kind() const noexcept { return kind_; }

    double at(int x, int y) const { return values_[index(x, y)]; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    bool same_shape(const Raster& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    /// Same values reinterpreted under another kind (re-validated).
    Raster as(ValueKind kind) const { return Raster(width_, height_, kind, values_); }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    int width_;
    int height_;
    ValueKind kind_;
    std::vector<double> values_;
};

/// Row-major foreground flags (0 or 1).
class BinaryMask {
public:
    BinaryMask(int width, int height);
    BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(int x, int y, bool on) { bits_[index(x, y)] = on ? 1 : 0; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::size_t count() const noexcept;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> bits_;
};

/// Isotropic millimetres per pixel.
class Calibration {
public:
    explicit Calibration(double pixel_size_mm = 1.0);
    double pixel_size_mm() const noexcept { return pixel_size_mm_; }

    friend bool operator==(const Calibration&, const Calibration&) = default;

private:
    double pixel_size_mm_;
};

enum class Modality { head, femur, unknown };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct CaseMeta {
    std::string case_id;
    Modality modality = Modality::unknown;
    Calibration calibration;
    std::optional<double> gt_measurement_mm;
    std::optional<std::filesystem::path> gt_mask_path;

    /// Throws PreconditionError on an empty id or a nonpositive measurement.
    void validate() const;
};

/// bit = 1 iff value > threshold; an exact tie is background.
BinaryMask binarize(const Raster& probmap, double threshold);

}  // namespace uqseg
