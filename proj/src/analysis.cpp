#include "uqseg/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "uqseg/error.hpp"

namespace uqseg::analysis {

using nlohmann::json;

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.width() != gt.width() || pred.height() != gt.height()) {
        throw PreconditionError("mask dimensions differ");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i];
        const bool g = gt[i];
        if (p && g) {
            ++c.tp;
        } else if (p) {
            ++c.fp;
        } else if (g) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    const ConfusionCounts c = confusion(pred, gt);
    const std::uint64_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

double relative_error(double x_mm, double mu_mm) {
    if (!(mu_mm > 0.0)) throw PreconditionError("relative_error needs a positive reference value");
    return std::abs(x_mm - mu_mm) / mu_mm * 100.0;
}

std::vector<std::optional<double>> UncErrorHistogram::curve() const {
    std::vector<std::optional<double>> out(uncertainty_bins());
    for (std::size_t u = 0; u < out.size(); ++u) {
        if (contributors[u] > 0) out[u] = rate_sum[u] / static_cast<double>(contributors[u]);
    }
    return out;
}

void UncErrorHistogram::merge(const UncErrorHistogram& other) {
    if (bin_width != other.bin_width || error_bin_width != other.error_bin_width || error_bins != other.error_bins) {
        throw PreconditionError("cannot merge histograms with different binning");
    }
    const std::size_t n = std::max(uncertainty_bins(), other.uncertainty_bins());
    counts.resize(n, std::vector<std::uint64_t>(static_cast<std::size_t>(error_bins), 0));
    rate_sum.resize(n, 0.0);
    contributors.resize(n, 0);
    pixels.resize(n, 0);
    for (std::size_t u = 0; u < other.uncertainty_bins(); ++u) {
        for (std::size_t e = 0; e < other.counts[u].size(); ++e) counts[u][e] += other.counts[u][e];
        rate_sum[u] += other.rate_sum[u];
        contributors[u] += other.contributors[u];
        pixels[u] += other.pixels[u];
    }
    samples += other.samples;
}

json UncErrorHistogram::to_json() const {
    json edges = json::array();
    for (std::size_t u = 0; u <= uncertainty_bins(); ++u) edges.push_back(static_cast<double>(u) * bin_width);
    json error_edges = json::array();
    for (int e = 0; e <= error_bins; ++e) error_edges.push_back(e * error_bin_width);
    json normalized = json::array();
    for (const auto& row : counts) {
        json r = json::array();
        for (std::uint64_t c : row) {
            r.push_back(samples == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(samples));
        }
        normalized.push_back(r);
    }
    json curve_j = json::array();
    for (const auto& c : curve()) curve_j.push_back(c ? json(*c) : json(nullptr));
    return json{{"uncertainty_bin_width", bin_width},
                {"error_bin_width", error_bin_width},
                {"uncertainty_edges", edges},
                {"error_edges", error_edges},
                {"counts", counts},
                {"normalized", normalized},
                {"curve", curve_j},
                {"contributors", contributors},
                {"pixels", pixels},
                {"samples", samples}};
}

UncErrorHistogram unc_error_histogram(const std::vector<HistogramInput>& cases, double bin_width) {
    if (!(bin_width > 0.0 && bin_width <= 0.5)) throw PreconditionError("bin_width must lie in (0, 0.5]");
    UncErrorHistogram total;
    total.bin_width = bin_width;

    for (const HistogramInput& c : cases) {
        const Raster& unc = *c.uncertainty;
        if (unc.width() != c.pred->width() || unc.height() != c.pred->height() || c.pred->width() != c.gt->width() ||
            c.pred->height() != c.gt->height()) {
            throw PreconditionError("histogram inputs have mismatched dimensions");
        }
        std::vector<std::uint64_t> in_bin;
        std::vector<std::uint64_t> wrong;
        for (std::size_t i = 0; i < unc.size(); ++i) {
            const auto u = static_cast<std::size_t>(std::floor(unc[i] / bin_width));
            if (u >= in_bin.size()) {
                in_bin.resize(u + 1, 0);
                wrong.resize(u + 1, 0);
            }
            ++in_bin[u];
            if ((*c.pred)[i] != (*c.gt)[i]) ++wrong[u];
        }

        UncErrorHistogram part;
        part.bin_width = bin_width;
        part.counts.assign(in_bin.size(), std::vector<std::uint64_t>(static_cast<std::size_t>(part.error_bins), 0));
        part.rate_sum.assign(in_bin.size(), 0.0);
        part.contributors.assign(in_bin.size(), 0);
        part.pixels = in_bin;
        for (std::size_t u = 0; u < in_bin.size(); ++u) {
            if (in_bin[u] == 0) continue;
            const double rate = static_cast<double>(wrong[u]) / static_cast<double>(in_bin[u]);
            const int e = std::min(static_cast<int>(std::floor(rate / part.error_bin_width)), part.error_bins - 1);
            ++part.counts[u][static_cast<std::size_t>(e)];
            part.rate_sum[u] += rate;
            ++part.contributors[u];
            ++part.samples;
        }
        total.merge(part);
    }
    return total;
}

bool ood_flag(double score, double threshold) { return score > threshold; }

double ood_threshold_from(const std::vector<double>& scores) {
    if (scores.empty()) throw PreconditionError("ood threshold needs at least one in-domain score");
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(scores.size());
    return mean + 2.0 * std::sqrt(var);
}

const char* to_string(DecisionStatus s) {
    switch (s) {
        case DecisionStatus::pending: return "pending";
        case DecisionStatus::accepted: return "accepted";
        case DecisionStatus::overridden: return "overridden";
        case DecisionStatus::rejected: return "rejected";
    }
    return "?";
}

DecisionStatus decision_status_from_string(const std::string& s) {
    if (s == "pending") return DecisionStatus::pending;
    if (s == "accepted") return DecisionStatus::accepted;
    if (s == "overridden") return DecisionStatus::overridden;
    if (s == "rejected") return DecisionStatus::rejected;
    throw PreconditionError("unknown decision status '" + s + "'");
}

std::optional<std::string> CaseRecord::file(const std::string& layer) const {
    for (const auto& [name, path] : files) {
        if (name == layer) return path;
    }
    return std::nullopt;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "baseline") return Provenance::baseline;
    if (s == "tta") return Provenance::tta;
    if (s == "mcd") return Provenance::mcd;
    throw PreconditionError("unknown method '" + s + "'");
}

std::string fmt_optional(const std::optional<double>& v) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

}  // namespace

json to_json(const geometry::Measurement& m) {
    json fit;
    if (const auto* e = std::get_if<geometry::EllipseFit>(&m.fit)) {
        fit = {{"type", "ellipse"},
               {"center_x", e->center.x},
               {"center_y", e->center.y},
               {"semi_major", e->semi_major},
               {"semi_minor", e->semi_minor},
               {"orientation_deg", e->orientation_deg}};
    } else {
        const auto& r = std::get<geometry::OrientedRect>(m.fit);
        fit = {{"type", "rect"},
               {"center_x", r.center.x},
               {"center_y", r.center.y},
               {"side_long", r.side_long},
               {"side_short", r.side_short},
               {"orientation_deg", r.orientation_deg}};
    }
    return {{"kind", geometry::to_string(m.kind)}, {"value_px", m.value_px}, {"value_mm", m.value_mm}, {"fit", fit}};
}

json to_json(const CaseRecord& r) {
    json files = json::object();
    for (const auto& [name, path] : r.files) files[name] = path;
    return json{{"case_id", r.meta.case_id},
                {"modality", to_string(r.meta.modality)},
                {"method", to_string(r.method)},
                {"samples", r.samples},
                {"seed", r.seed},
                {"pixel_size_mm", r.meta.calibration.pixel_size_mm()},
                {"gt_measurement_mm", optional_json(r.meta.gt_measurement_mm)},
                {"width", r.width},
                {"height", r.height},
                {"measurement", r.measurement ? to_json(*r.measurement) : json(nullptr)},
                {"measurement_mm", r.measurement ? json(r.measurement->value_mm) : json(nullptr)},
                {"flag", r.flag.empty() ? json(nullptr) : json(r.flag)},
                {"iou", optional_json(r.iou)},
                {"abs_error_mm", optional_json(r.abs_error_mm)},
                {"rel_error_pct", optional_json(r.rel_error_pct)},
                {"uncertainty_score", r.uncertainty_score},
                {"score_kind", r.score_kind},
                {"ood_flag", r.ood_flag},
                {"ood_threshold", optional_json(r.ood_threshold)},
                {"files", files},
                {"sample_files", r.sample_files},
                {"decision", {{"status", "pending"}}}};
}

CaseRecord case_record_from_json(const json& j) {
    CaseRecord r;
    try {
        r.meta.case_id = j.at("case_id").get<std::string>();
        r.meta.modality = modality_from_string(j.at("modality").get<std::string>());
        r.meta.calibration = Calibration(j.at("pixel_size_mm").get<double>());
        r.meta.gt_measurement_mm = optional_from(j, "gt_measurement_mm");
        r.method = provenance_from_string(j.at("method").get<std::string>());
        r.samples = j.value("samples", 1);
        r.seed = j.value("seed", std::uint64_t{0});
        r.width = j.value("width", 0);
        r.height = j.value("height", 0);
        if (j.contains("measurement") && !j["measurement"].is_null()) {
            const json& m = j["measurement"];
            geometry::Measurement meas;
            meas.kind = m.at("kind").get<std::string>() == "femur_length" ? geometry::MeasurementKind::femur_length
                                                                          : geometry::MeasurementKind::head_circumference;
            meas.value_px = m.at("value_px").get<double>();
            meas.value_mm = m.at("value_mm").get<double>();
            const json& f = m.at("fit");
            if (f.at("type") == "ellipse") {
                geometry::EllipseFit e;
                e.center = {f.at("center_x").get<double>(), f.at("center_y").get<double>()};
                e.semi_major = f.at("semi_major").get<double>();
                e.semi_minor = f.at("semi_minor").get<double>();
                e.orientation_deg = f.at("orientation_deg").get<double>();
                meas.fit = e;
            } else {
                geometry::OrientedRect rect;
                rect.center = {f.at("center_x").get<double>(), f.at("center_y").get<double>()};
                rect.side_long = f.at("side_long").get<double>();
                rect.side_short = f.at("side_short").get<double>();
                rect.orientation_deg = f.at("orientation_deg").get<double>();
                meas.fit = rect;
            }
            r.measurement = meas;
        }
        if (j.contains("flag") && j["flag"].is_string()) r.flag = j["flag"].get<std::string>();
        r.iou = optional_from(j, "iou");
        r.abs_error_mm = optional_from(j, "abs_error_mm");
        r.rel_error_pct = optional_from(j, "rel_error_pct");
        r.uncertainty_score = j.value("uncertainty_score", 0.0);
        r.score_kind = j.value("score_kind", std::string("total"));
        r.ood_flag = j.value("ood_flag", false);
        r.ood_threshold = optional_from(j, "ood_threshold");
        if (j.contains("files")) {
            for (const auto& [name, path] : j["files"].items()) r.files.emplace_back(name, path.get<std::string>());
        }
        if (j.contains("sample_files")) r.sample_files = j["sample_files"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw PreconditionError(std::string("malformed case record: ") + e.what());
    }
    return r;
}

std::vector<ReportRow> batch_report(const std::vector<CaseRecord>& records) {
    if (records.empty()) throw PreconditionError("batch report needs at least one record");
    struct Acc {
        std::size_t n = 0;
        double iou = 0.0, abs = 0.0, rel = 0.0;
        std::size_t n_iou = 0, n_abs = 0, n_rel = 0;
    };
    std::map<std::pair<std::string, std::string>, Acc> groups;
    for (const CaseRecord& r : records) {
        Acc& a = groups[{to_string(r.meta.modality), to_string(r.method)}];
        ++a.n;
        if (r.iou) {
            a.iou += *r.iou;
            ++a.n_iou;
        }
        if (r.abs_error_mm) {
            a.abs += *r.abs_error_mm;
            ++a.n_abs;
        }
        if (r.rel_error_pct) {
            a.rel += *r.rel_error_pct;
            ++a.n_rel;
        }
    }
    std::vector<ReportRow> rows;
    for (const auto& [key, a] : groups) {
        ReportRow row;
        row.modality = key.first;
        row.method = key.second;
        row.n = a.n;
        if (a.n_iou) row.mean_iou = a.iou / static_cast<double>(a.n_iou);
        if (a.n_abs) row.mean_abs_err_mm = a.abs / static_cast<double>(a.n_abs);
        if (a.n_rel) row.mean_rel_err_pct = a.rel / static_cast<double>(a.n_rel);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "modality,method,n,mean_iou,mean_abs_err_mm,mean_rel_err_pct\n";
    for (const ReportRow& r : rows) {
        out += r.modality + "," + r.method + "," + std::to_string(r.n) + "," + fmt_optional(r.mean_iou) + "," +
               fmt_optional(r.mean_abs_err_mm) + "," + fmt_optional(r.mean_rel_err_pct) + "\n";
    }
    return out;
}

json report_json(const std::vector<ReportRow>& rows) {
    json out = json::array();
    for (const ReportRow& r : rows) {
        out.push_back({{"modality", r.modality},
                       {"method", r.method},
                       {"n", r.n},
                       {"mean_iou", optional_json(r.mean_iou)},
                       {"mean_abs_err_mm", optional_json(r.mean_abs_err_mm)},
                       {"mean_rel_err_pct", optional_json(r.mean_rel_err_pct)}});
    }
    return out;
}

}  // namespace uqseg::analysis
