#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqseg/geometry.hpp"
#include "uqseg/raster.hpp"
#include "uqseg/sample_stack.hpp"

namespace uqseg::analysis {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

/// tp / (tp + fp + fn); two empty masks agree perfectly (1.0).
double iou(const BinaryMask& pred, const BinaryMask& gt);

/// |x - mu| / mu * 100.
double relative_error(double x_mm, double mu_mm);

/// Published baseline figures on clinical data (trained network, private
/// datasets). Kept for documentation and report context; never used as targets.
namespace reported {
inline constexpr double kHeadAbsErrorMm = 8.0833;
inline constexpr double kHeadRelErrorPct = 4.7347;
inline constexpr double kFemurAbsErrorMm = 2.6163;
inline constexpr double kFemurRelErrorPct = 6.3336;
// IOU: baseline, TTA, MC dropout.
inline constexpr double kHeadIou[3] = {0.9664, 0.9690, 0.9655};
inline constexpr double kFemurIou[3] = {0.8528, 0.8349, 0.8154};
}  // namespace reported

/// Per-image error rate inside uncertainty intervals, binned into a 2-D histogram
/// of (uncertainty bin, error-rate bin) with one entry per contributing (image, bin).
struct UncErrorHistogram {
    double bin_width = 0.05;
    double error_bin_width = 0.05;
    int error_bins = 20;
    /// counts[u][e]
    std::vector<std::vector<std::uint64_t>> counts;
    /// Sum of per-image error rates and contributing image count per uncertainty bin.
    std::vector<double> rate_sum;
    std::vector<std::uint64_t> contributors;
    /// Pixels that fell in each uncertainty bin, over all images.
    std::vector<std::uint64_t> pixels;
    std::uint64_t samples = 0;

    std::size_t uncertainty_bins() const noexcept { return counts.size(); }
    /// Mean error rate per uncertainty bin; nullopt where no image contributed.
    std::vector<std::optional<double>> curve() const;

    /// Associative merge of partial histograms with the same bin widths.
    void merge(const UncErrorHistogram& other);

    nlohmann::json to_json() const;
};

struct HistogramInput {
    const Raster* uncertainty = nullptr;
    const BinaryMask* pred = nullptr;
    const BinaryMask* gt = nullptr;
};

UncErrorHistogram unc_error_histogram(const std::vector<HistogramInput>& cases, double bin_width = 0.05);

/// score > threshold (strict).
bool ood_flag(double score, double threshold);

/// mean + 2 * population stddev of in-domain scores.
double ood_threshold_from(const std::vector<double>& in_domain_scores);

enum class DecisionStatus { pending, accepted, overridden, rejected };

const char* to_string(DecisionStatus s);
DecisionStatus decision_status_from_string(const std::string& s);

/// One case as it leaves the pipeline (`case.json`).
struct CaseRecord {
    CaseMeta meta;
    Provenance method = Provenance::baseline;
    int samples = 1;
    std::uint64_t seed = 0;
    std::optional<geometry::Measurement> measurement;
    /// Why no measurement (no foreground, fit failure, predictor error); empty otherwise.
    std::string flag;
    std::optional<double> iou;
    std::optional<double> abs_error_mm;
    std::optional<double> rel_error_pct;
    double uncertainty_score = 0.0;
    std::string score_kind = "total";
    bool ood_flag = false;
    std::optional<double> ood_threshold;
    int width = 0;
    int height = 0;
    /// Layer name -> file name relative to the case directory.
    std::vector<std::pair<std::string, std::string>> files;
    std::vector<std::string> sample_files;

    std::optional<std::string> file(const std::string& layer) const;
};

nlohmann::json to_json(const geometry::Measurement& m);
nlohmann::json to_json(const CaseRecord& r);
CaseRecord case_record_from_json(const nlohmann::json& j);

struct ReportRow {
    std::string modality;
    std::string method;
    std::size_t n = 0;
    std::optional<double> mean_iou;
    std::optional<double> mean_abs_err_mm;
    std::optional<double> mean_rel_err_pct;
};

/// Means per (modality, method), rows sorted by modality then method.
std::vector<ReportRow> batch_report(const std::vector<CaseRecord>& records);

std::string report_csv(const std::vector<ReportRow>& rows);
nlohmann::json report_json(const std::vector<ReportRow>& rows);

}  // namespace uqseg::analysis
