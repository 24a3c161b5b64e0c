#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqseg/analysis.hpp"
#include "uqseg/predictor.hpp"
#include "uqseg/tta.hpp"
#include "uqseg/uncertainty.hpp"

namespace uqseg::pipeline {

namespace fs = std::filesystem;

struct PredictorConfig {
    std::string type = "sigmoid";  // sigmoid | external
    SigmoidParams sigmoid;
    std::string command;
    int timeout_ms = 60'000;
};

/// Everything `uqseg run` reads from its JSON config file.
struct PipelineConfig {
    PredictorConfig predictor;
    tta::AugmentationPriors priors;
    double threshold = 0.5;
    /// When absent the runner derives mean + 2 sd from the run's own scores.
    std::optional<double> ood_threshold;
    uncertainty::ScoreKind score_kind = uncertainty::ScoreKind::total;
    int workers = 0;  // 0 = hardware concurrency

    void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig load_config(const fs::path& path);

std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config);

Provenance method_from_string(const std::string& s);

struct RunOptions {
    fs::path dataset_dir;
    fs::path out_dir;
    Provenance method = Provenance::tta;
    int samples = tta::kDefaultSamples;
    std::uint64_t seed = 0;
    PipelineConfig config;
};

struct RunSummary {
    std::vector<analysis::CaseRecord> records;  // sorted by case_id
    std::vector<std::pair<std::string, std::string>> failures;  // case_id, message
    double ood_threshold = 0.0;
};

/// Per-case seed: independent of dataset order.
std::uint64_t case_seed(std::uint64_t seed, const std::string& case_id);

/// Stack for one image under the chosen method (baseline ignores samples).
SampleStack make_stack(const Predictor& predictor, const Raster& image, Provenance method, int samples,
                       const tta::AugmentationPriors& priors, std::uint64_t seed, const Calibration& calibration);

/// Processes every case of the dataset into `out_dir/<case_id>/`.
/// Throws IoError for a missing or unreadable dataset.
RunSummary run(const RunOptions& options);

struct LoadedCase {
    analysis::CaseRecord record;
    fs::path dir;
};

/// Every `<dir>/*/case.json`, sorted by case_id.
std::vector<LoadedCase> load_results(const fs::path& results_dir);

struct AnalyzeOptions {
    fs::path results_dir;
    fs::path out_dir;
    double bin_width = 0.05;
    std::string layer = "data";
};

struct AnalyzeSummary {
    std::vector<analysis::ReportRow> rows;
    analysis::UncErrorHistogram histogram;
};

/// Writes report.csv, report.json, histogram.json and heatmaps/*.pgm.
AnalyzeSummary analyze(const AnalyzeOptions& options);

}  // namespace uqseg::pipeline
