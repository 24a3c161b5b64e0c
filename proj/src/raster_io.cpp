#include "uqseg/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uqseg/error.hpp"

namespace uqseg::io {

namespace {

constexpr char kUqpMagic[] = "UQP1\n";

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Cursor over a header that tracks the byte offset for error messages.
class HeaderReader {
public:
    HeaderReader(const std::vector<std::uint8_t>& bytes, std::string origin)
        : bytes_(bytes), origin_(std::move(origin)) {}

    std::size_t pos() const { return pos_; }

    [[noreturn]] void fail(const std::string& what) const { throw FormatError(origin_, pos_, what); }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* field) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size()) fail(std::string("unexpected end of header reading ") + field);
        if (bytes_[pos_] < '0' || bytes_[pos_] > '9') fail(std::string("expected integer for ") + field);
        long v = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1'000'000'000L) fail(std::string(field) + " too large");
            ++pos_;
        }
        return v;
    }

    void expect_single_space() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail("expected whitespace after header");
        ++pos_;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

void write_bytes(const fs::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::string pgm_bytes(int width, int height, const std::vector<std::uint8_t>& pixels) {
    std::string s = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    s.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return s;
}

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
    return v;
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    write_bytes(tmp, contents);
    fs::rename(tmp, path);
}

Pgm parse_pgm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    HeaderReader r(bytes, origin);
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
        r.fail("not a PGM file (expected P5 or P2 magic)");
    }
    const bool ascii = bytes[1] == '2';
    Pgm pgm;
    // Blank out the magic so the reader sees only whitespace-separated fields.
    std::vector<std::uint8_t> rest(bytes);
    rest[0] = ' ';
    rest[1] = ' ';
    HeaderReader h(rest, origin);
    const long width = h.read_uint("width");
    const long height = h.read_uint("height");
    h.skip_space_and_comments();
    const std::size_t maxval_at = h.pos();
    const long maxval = h.read_uint("maxval");
    if (width < 1 || height < 1) throw FormatError(origin, maxval_at, "dimensions must be positive");
    if (maxval != 255) {
        throw FormatError(origin, maxval_at, "maxval " + std::to_string(maxval) + " unsupported (need 255)");
    }
    pgm.width = static_cast<int>(width);
    pgm.height = static_cast<int>(height);
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    pgm.pixels.resize(n);
    if (ascii) {
        for (std::size_t i = 0; i < n; ++i) {
            h.skip_space_and_comments();
            if (h.pos() >= rest.size()) {
                throw FormatError(origin, h.pos(),
                                  "truncated payload: " + std::to_string(i) + " of " + std::to_string(n) + " samples");
            }
            const std::size_t at = h.pos();
            const long v = h.read_uint("sample");
            if (v > 255) throw FormatError(origin, at, "sample exceeds maxval");
            pgm.pixels[i] = static_cast<std::uint8_t>(v);
        }
    } else {
        h.expect_single_space();
        const std::size_t start = h.pos();
        if (bytes.size() - start < n) {
            throw FormatError(origin, bytes.size(),
                              "truncated payload: expected " + std::to_string(n) + " bytes, found " +
                                  std::to_string(bytes.size() - start));
        }
        std::memcpy(pgm.pixels.data(), bytes.data() + start, n);
    }
    return pgm;
}

void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
    write_file_atomic(path, pgm_bytes(width, height, pixels));
}

fs::path sidecar_path(const fs::path& image_path) {
    return image_path.parent_path() / (image_path.stem().string() + ".meta.json");
}

void save_sidecar(const fs::path& image_path, const Calibration& calibration) {
    nlohmann::json j = {{"pixel_size_mm", calibration.pixel_size_mm()}};
    write_file_atomic(sidecar_path(image_path), j.dump(2) + "\n");
}

LoadedImage load_image(const fs::path& path) {
    const Pgm pgm = parse_pgm(read_bytes(path), path.string());
    std::vector<double> values(pgm.pixels.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = pgm.pixels[i] / 255.0;

    Calibration cal;
    const fs::path side = sidecar_path(path);
    if (fs::exists(side)) {
        std::ifstream in(side);
        nlohmann::json j;
        try {
            in >> j;
            cal = Calibration(j.at("pixel_size_mm").get<double>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(side.string(), 0, std::string("bad sidecar: ") + e.what());
        }
    }
    return {Raster(pgm.width, pgm.height, ValueKind::intensity, std::move(values)), cal};
}

void save_image(const Raster& image, const fs::path& path) {
    std::vector<std::uint8_t> px(image.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double v = std::clamp(image[i], 0.0, 1.0);
        px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_pgm(path, image.width(), image.height(), px);
}

void save_float_map(const Raster& raster, const fs::path& path) {
    std::string s = kUqpMagic;
    s += std::to_string(raster.width()) + " " + std::to_string(raster.height()) + "\n";
    const std::size_t header = s.size();
    s.resize(header + raster.size() * 4);
    for (std::size_t i = 0; i < raster.size(); ++i) {
        const auto f = static_cast<float>(raster[i]);
        const std::uint32_t le = to_little_endian(std::bit_cast<std::uint32_t>(f));
        std::memcpy(s.data() + header + i * 4, &le, 4);
    }
    write_file_atomic(path, s);
}

Raster load_float_map(const fs::path& path, ValueKind kind) {
    const std::vector<std::uint8_t> bytes = read_bytes(path);
    const std::string origin = path.string();
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kUqpMagic, 5) != 0) {
        throw FormatError(origin, 0, "magic is not UQP1");
    }
    std::vector<std::uint8_t> rest(bytes);
    std::fill(rest.begin(), rest.begin() + 5, ' ');
    HeaderReader h(rest, origin);
    const long width = h.read_uint("width");
    if (h.pos() >= rest.size() || rest[h.pos()] != ' ') h.fail("expected single space between dimensions");
    const long height = h.read_uint("height");
    if (h.pos() >= rest.size() || rest[h.pos()] != '\n') h.fail("expected newline after dimensions");
    const std::size_t start = h.pos() + 1;
    if (width < 1 || height < 1) throw FormatError(origin, start, "dimensions must be positive");
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - start != n * 4) {
        throw FormatError(origin, start,
                          "payload is " + std::to_string(bytes.size() - start) + " bytes, expected " +
                              std::to_string(n * 4));
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t le = 0;
        std::memcpy(&le, bytes.data() + start + i * 4, 4);
        const float f = std::bit_cast<float>(to_little_endian(le));
        if (!std::isfinite(f)) throw FormatError(origin, start + i * 4, "non-finite float in payload");
        values[i] = f;
    }
    try {
        return Raster(static_cast<int>(width), static_cast<int>(height), kind, std::move(values));
    } catch (const PreconditionError& e) {
        throw FormatError(origin, start, e.what());
    }
}

void save_probmap(const Raster& probmap, const fs::path& path) {
    if (probmap.kind() != ValueKind::probability) {
        throw PreconditionError("save_probmap expects a probability raster");
    }
    save_float_map(probmap, path);
}

Raster load_probmap(const fs::path& path) { return load_float_map(path, ValueKind::probability); }

void save_mask(const BinaryMask& mask, const fs::path& path) {
    std::vector<std::uint8_t> px(mask.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask[i] ? 255 : 0;
    write_pgm(path, mask.width(), mask.height(), px);
}

BinaryMask load_mask(const fs::path& path) {
    const Pgm pgm = parse_pgm(read_bytes(path), path.string());
    std::vector<std::uint8_t> bits(pgm.pixels.size());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = pgm.pixels[i] > 0 ? 1 : 0;
    return BinaryMask(pgm.width, pgm.height, std::move(bits));
}

void save_quantized(const Raster& raster, const fs::path& path) {
    double max = 0.0;
    for (double v : raster.values()) max = std::max(max, v);
    std::vector<std::uint8_t> px(raster.size(), 0);
    if (max > 0.0) {
        for (std::size_t i = 0; i < px.size(); ++i) {
            px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(raster[i] / max, 0.0, 1.0) * 255.0));
        }
    }
    write_pgm(path, raster.width(), raster.height(), px);
}

}  // namespace uqseg::io
