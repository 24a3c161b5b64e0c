#include "uqseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "uqseg/error.hpp"
#include "uqseg/geometry.hpp"
#include "uqseg/raster_io.hpp"
#include "uqseg/rng.hpp"

namespace uqseg::phantom {

namespace fs = std::filesystem;

namespace {

constexpr double kMarginPx = 2.0;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

void PhantomSpec::validate() const {
    if (width < 1 || height < 1) throw PreconditionError("phantom canvas must be non-empty");
    if (!(inside_level >= 0.0 && inside_level <= 1.0 && outside_level >= 0.0 && outside_level <= 1.0)) {
        throw PreconditionError("phantom levels must lie in [0, 1]");
    }
    if (inside_level == outside_level) throw PreconditionError("inside_level must differ from outside_level");
    if (!(noise_sigma >= 0.0)) throw PreconditionError("noise_sigma must be >= 0");
    if (blur_passes < 0) throw PreconditionError("blur_passes must be >= 0");
    if (!(pixel_size_mm > 0.0) || !std::isfinite(pixel_size_mm)) throw PreconditionError("pixel_size_mm must be > 0");

    const double c = std::cos(deg2rad(orientation_deg));
    const double s = std::sin(deg2rad(orientation_deg));
    double ex = 0.0, ey = 0.0;
    if (kind == ShapeKind::ellipse) {
        if (!(semi_minor > 0.0) || semi_major < semi_minor) {
            throw PreconditionError("ellipse needs semi_major >= semi_minor > 0");
        }
        ex = std::sqrt(semi_major * semi_major * c * c + semi_minor * semi_minor * s * s);
        ey = std::sqrt(semi_major * semi_major * s * s + semi_minor * semi_minor * c * c);
    } else {
        if (!(radius > 0.0) || length < 2.0 * radius) {
            throw PreconditionError("capsule needs radius > 0 and length >= 2 * radius");
        }
        const double half = length / 2.0 - radius;
        ex = half * std::abs(c) + radius;
        ey = half * std::abs(s) + radius;
    }
    if (center_x - ex < kMarginPx || center_x + ex > (width - 1) - kMarginPx || center_y - ey < kMarginPx ||
        center_y + ey > (height - 1) - kMarginPx) {
        throw PreconditionError("phantom shape exceeds the canvas (needs a 2 px margin)");
    }
}

bool PhantomSpec::contains(double x, double y) const {
    const double c = std::cos(deg2rad(orientation_deg));
    const double s = std::sin(deg2rad(orientation_deg));
    const double dx = x - center_x;
    const double dy = y - center_y;
    const double u = dx * c + dy * s;
    const double v = -dx * s + dy * c;
    if (kind == ShapeKind::ellipse) {
        const double q = (u / semi_major) * (u / semi_major) + (v / semi_minor) * (v / semi_minor);
        return q <= 1.0;
    }
    const double half = length / 2.0 - radius;
    const double along = std::clamp(u, -half, half);
    const double du = u - along;
    return du * du + v * v <= radius * radius;
}

double PhantomSpec::measurement_px() const {
    return kind == ShapeKind::ellipse ? geometry::ellipse_circumference(semi_major, semi_minor) : length;
}

std::vector<double> box_blur(const std::vector<double>& values, int width, int height) {
    std::vector<double> out(values.size());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double sum = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, height - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = std::clamp(x + dx, 0, width - 1);
                    sum += values[static_cast<std::size_t>(yy) * width + xx];
                }
            }
            out[static_cast<std::size_t>(y) * width + x] = sum / 9.0;
        }
    }
    return out;
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed, const std::string& case_id) {
    spec.validate();
    const int w = spec.width;
    const int h = spec.height;

    BinaryMask mask(w, h);
    std::vector<double> values(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool in = spec.contains(x, y);
            mask.set(x, y, in);
            values[mask.index(x, y)] = in ? spec.inside_level : spec.outside_level;
        }
    }
    for (int pass = 0; pass < spec.blur_passes; ++pass) values = box_blur(values, w, h);
    if (spec.noise_sigma > 0.0) {
        Rng rng(seed);
        for (double& v : values) v = std::clamp(v + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0);
    }

    CaseMeta meta;
    meta.case_id = case_id;
    meta.modality = spec.kind == ShapeKind::ellipse ? Modality::head : Modality::femur;
    meta.calibration = Calibration(spec.pixel_size_mm);
    meta.gt_measurement_mm = spec.measurement_px() * spec.pixel_size_mm;
    return {Raster(w, h, ValueKind::intensity, std::move(values)), std::move(mask), std::move(meta)};
}

PhantomSpec dataset_case_spec(Modality kind, const DatasetOptions& options, std::uint64_t case_seed) {
    if (kind == Modality::unknown) throw PreconditionError("dataset kind must be head or femur");
    Rng rng(case_seed);
    PhantomSpec spec;
    spec.width = options.width;
    spec.height = options.height;
    spec.center_x = (options.width - 1) / 2.0 + rng.uniform(-options.center_jitter_px, options.center_jitter_px);
    spec.center_y = (options.height - 1) / 2.0 + rng.uniform(-options.center_jitter_px, options.center_jitter_px);
    spec.orientation_deg = rng.uniform(0.0, 180.0);
    if (kind == Modality::head) {
        spec.kind = ShapeKind::ellipse;
        spec.semi_major = rng.uniform(options.semi_major_min, options.semi_major_max);
        spec.semi_minor = spec.semi_major / rng.uniform(options.aspect_min, options.aspect_max);
    } else {
        spec.kind = ShapeKind::capsule;
        spec.length = rng.uniform(options.length_min, options.length_max);
        spec.radius = rng.uniform(options.radius_min, options.radius_max);
    }
    spec.inside_level = options.inside_level;
    spec.outside_level = options.outside_level;
    spec.noise_sigma = options.noise_sigma;
    spec.blur_passes = options.blur_passes;
    spec.pixel_size_mm = options.pixel_size_mm;
    return spec;
}

std::vector<CaseMeta> generate_dataset(Modality kind, int count, std::uint64_t seed, const fs::path& out_dir,
                                       const DatasetOptions& options) {
    if (count < 1) throw PreconditionError("dataset count must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create dataset directory " + out_dir.string());

    std::vector<CaseMeta> metas;
    nlohmann::json index = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%03d", to_string(kind), i);
        const std::uint64_t case_seed = hash_seed(seed, static_cast<std::uint64_t>(i));
        const PhantomSpec spec = dataset_case_spec(kind, options, case_seed);
        Phantom p = generate_phantom(spec, hash_seed(case_seed, 1), id);

        const std::string image_name = std::string(id) + ".pgm";
        const std::string mask_name = std::string(id) + "_mask.pgm";
        io::save_image(p.image, out_dir / image_name);
        io::save_sidecar(out_dir / image_name, p.meta.calibration);
        io::save_mask(p.mask, out_dir / mask_name);
        p.meta.gt_mask_path = mask_name;

        index.push_back({{"case_id", p.meta.case_id},
                         {"image", image_name},
                         {"mask", mask_name},
                         {"pixel_size_mm", p.meta.calibration.pixel_size_mm()},
                         {"modality", to_string(p.meta.modality)},
                         {"gt_measurement_mm", *p.meta.gt_measurement_mm}});
        metas.push_back(std::move(p.meta));
    }
    io::write_file_atomic(out_dir / "dataset.json", index.dump(2) + "\n");
    return metas;
}

std::vector<DatasetEntry> read_dataset_index(const fs::path& dir) {
    const fs::path path = dir / "dataset.json";
    if (!fs::exists(path)) throw IoError("no dataset.json in " + dir.string());
    nlohmann::json index;
    try {
        std::ifstream in(path);
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string(), 0, e.what());
    }
    if (!index.is_array()) throw FormatError(path.string(), 0, "index must be a JSON array");

    std::vector<DatasetEntry> entries;
    for (const auto& item : index) {
        try {
            DatasetEntry e;
            e.meta.case_id = item.at("case_id").get<std::string>();
            e.meta.modality = modality_from_string(item.value("modality", std::string("unknown")));
            e.meta.calibration = Calibration(item.value("pixel_size_mm", 1.0));
            if (item.contains("gt_measurement_mm") && !item["gt_measurement_mm"].is_null()) {
                e.meta.gt_measurement_mm = item["gt_measurement_mm"].get<double>();
            }
            e.image = dir / item.at("image").get<std::string>();
            if (item.contains("mask") && item["mask"].is_string()) {
                e.mask = dir / item["mask"].get<std::string>();
                e.meta.gt_mask_path = e.mask;
            }
            e.meta.validate();
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(path.string(), 0, std::string("bad index entry: ") + ex.what());
        }
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            if (entries[i].meta.case_id == entries[j].meta.case_id) {
                throw FormatError(path.string(), 0, "duplicate case_id " + entries[i].meta.case_id);
            }
        }
    }
    return entries;
}

Raster noise_image(int width, int height, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> values(static_cast<std::size_t>(width) * height);
    for (double& v : values) v = rng.uniform();
    return Raster(width, height, ValueKind::intensity, std::move(values));
}

}  // namespace uqseg::phantom
