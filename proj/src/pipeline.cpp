#include "uqseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "uqseg/error.hpp"
#include "uqseg/geometry.hpp"
#include "uqseg/phantom.hpp"
#include "uqseg/raster_io.hpp"
#include "uqseg/rng.hpp"

namespace uqseg::pipeline {

using nlohmann::json;

namespace {

json range_json(const tta::Range& r) { return json::array({r.lo, r.hi}); }

tta::Range range_from(const json& j, const char* key, tta::Range fallback) {
    if (!j.contains(key)) return fallback;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw PreconditionError(std::string("prior ") + key + " must be [lo, hi]");
    return {v[0], v[1]};
}

// Uncertainty layers written per case: layer name, file stem.
struct LayerFile {
    const char* layer;
    const char* stem;
};
constexpr LayerFile kUncertaintyLayers[] = {
    {"total", "total"}, {"data", "data"}, {"model", "model"}, {"ekl", "ekl"}, {"variance", "variance"},
    {"max_prob", "max_prob"}};

std::string sample_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%03zu.uqp", i);
    return buf;
}

// Outputs of one case, held until the OOD threshold is known.
struct CaseWork {
    phantom::DatasetEntry entry;
    analysis::CaseRecord record;
    fs::path staging;
    bool scored = false;
    std::string failure;
};

void process_case(CaseWork& work, const RunOptions& options, const Predictor& predictor) {
    const phantom::DatasetEntry& entry = work.entry;
    analysis::CaseRecord& rec = work.record;
    rec.meta = entry.meta;
    rec.method = options.method;
    rec.samples = options.method == Provenance::baseline ? 1 : options.samples;
    rec.score_kind = uncertainty::to_string(options.config.score_kind);
    const std::uint64_t seed = case_seed(options.seed, entry.meta.case_id);
    rec.seed = options.method == Provenance::baseline ? 0 : seed;

    fs::create_directories(work.staging / "samples");
    const io::LoadedImage loaded = io::load_image(entry.image);
    const Raster& image = loaded.image;
    rec.width = image.width();
    rec.height = image.height();
    io::save_image(image, work.staging / "image.pgm");
    rec.files.emplace_back("image", "image.pgm");

    SampleStack stack;
    try {
        stack = make_stack(predictor, image, options.method, options.samples, options.config.priors, seed,
                           entry.meta.calibration);
    } catch (const PredictorError& e) {
        rec.flag = std::string("predictor_error: ") + e.what();
        work.failure = e.what();
        return;
    }

    for (std::size_t i = 0; i < stack.count(); ++i) {
        const std::string name = sample_name(i);
        io::save_probmap(stack.samples[i], work.staging / "samples" / name);
        rec.sample_files.push_back("samples/" + name);
    }

    const uncertainty::UncertaintyMaps maps = uncertainty::decompose(stack);
    const Raster mean = tta::aggregate_mean(stack);
    const BinaryMask mask = binarize(mean, options.config.threshold);
    io::save_probmap(mean, work.staging / "mean_prob.uqp");
    io::save_mask(mask, work.staging / "mask.pgm");
    rec.files.emplace_back("mean_prob", "mean_prob.uqp");
    rec.files.emplace_back("mask", "mask.pgm");

    const Raster* rasters[] = {&maps.total_entropy, &maps.expected_entropy, &maps.mutual_information,
                               &maps.ekl,           &maps.variance,         &maps.max_prob};
    for (std::size_t k = 0; k < std::size(kUncertaintyLayers); ++k) {
        const std::string stem = kUncertaintyLayers[k].stem;
        io::save_float_map(*rasters[k], work.staging / (stem + ".uqp"));
        io::save_quantized(*rasters[k], work.staging / (stem + ".pgm"));
        rec.files.emplace_back(kUncertaintyLayers[k].layer, stem + ".uqp");
    }

    if (!entry.mask.empty()) {
        const BinaryMask gt = io::load_mask(entry.mask);
        io::save_mask(gt, work.staging / "gt_mask.pgm");
        rec.files.emplace_back("gt_mask", "gt_mask.pgm");
        rec.iou = analysis::iou(mask, gt);
    }

    try {
        rec.measurement = geometry::measure(mask, entry.meta.modality, entry.meta.calibration);
    } catch (const NoForegroundError& e) {
        rec.flag = std::string("no_foreground: ") + e.what();
    } catch (const FitError& e) {
        rec.flag = std::string("fit_failed: ") + e.what();
    } catch (const PreconditionError& e) {
        rec.flag = std::string("not_measurable: ") + e.what();
    }
    if (rec.measurement && entry.meta.gt_measurement_mm) {
        rec.abs_error_mm = std::abs(rec.measurement->value_mm - *entry.meta.gt_measurement_mm);
        rec.rel_error_pct = analysis::relative_error(rec.measurement->value_mm, *entry.meta.gt_measurement_mm);
    }
    rec.uncertainty_score = uncertainty::image_uncertainty_score(maps, options.config.score_kind);
    work.scored = true;
}

}  // namespace

void PipelineConfig::validate() const {
    if (predictor.type == "sigmoid") {
        predictor.sigmoid.validate();
    } else if (predictor.type == "external") {
        if (predictor.command.empty()) throw PreconditionError("external predictor needs a command");
        if (predictor.timeout_ms <= 0) throw PreconditionError("predictor timeout must be > 0");
    } else {
        throw PreconditionError("unknown predictor type '" + predictor.type + "'");
    }
    priors.validate();
    if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("threshold must lie in (0, 1)");
    if (ood_threshold && !(*ood_threshold > 0.0)) throw PreconditionError("ood_threshold must be > 0");
    if (workers < 0) throw PreconditionError("workers must be >= 0");
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    try {
        if (j.contains("predictor")) {
            const json& p = j["predictor"];
            c.predictor.type = p.value("type", c.predictor.type);
            c.predictor.sigmoid.threshold = p.value("threshold", c.predictor.sigmoid.threshold);
            c.predictor.sigmoid.softness = p.value("softness", c.predictor.sigmoid.softness);
            c.predictor.sigmoid.threshold_jitter = p.value("threshold_jitter", c.predictor.sigmoid.threshold_jitter);
            c.predictor.sigmoid.softness_jitter = p.value("softness_jitter", c.predictor.sigmoid.softness_jitter);
            c.predictor.command = p.value("command", c.predictor.command);
            c.predictor.timeout_ms = p.value("timeout_ms", c.predictor.timeout_ms);
        }
        if (j.contains("priors")) {
            const json& p = j["priors"];
            c.priors.flip_prob = p.value("flip_prob", c.priors.flip_prob);
            c.priors.rotation_deg = range_from(p, "rotation_deg", c.priors.rotation_deg);
            c.priors.scale = range_from(p, "scale", c.priors.scale);
            c.priors.translate_frac = range_from(p, "translate_frac", c.priors.translate_frac);
            c.priors.brightness = range_from(p, "brightness", c.priors.brightness);
            c.priors.contrast = range_from(p, "contrast", c.priors.contrast);
            c.priors.noise_sigma = p.value("noise_sigma", c.priors.noise_sigma);
        }
        c.threshold = j.value("threshold", c.threshold);
        if (j.contains("ood_threshold") && !j["ood_threshold"].is_null()) {
            c.ood_threshold = j["ood_threshold"].get<double>();
        }
        if (j.contains("uncertainty_score")) {
            c.score_kind = uncertainty::score_kind_from_string(j["uncertainty_score"].get<std::string>());
        }
        c.workers = j.value("workers", c.workers);
    } catch (const json::exception& e) {
        throw PreconditionError(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

json to_json(const PipelineConfig& c) {
    json predictor = {{"type", c.predictor.type}};
    if (c.predictor.type == "sigmoid") {
        predictor["threshold"] = c.predictor.sigmoid.threshold;
        predictor["softness"] = c.predictor.sigmoid.softness;
        predictor["threshold_jitter"] = c.predictor.sigmoid.threshold_jitter;
        predictor["softness_jitter"] = c.predictor.sigmoid.softness_jitter;
    } else {
        predictor["command"] = c.predictor.command;
        predictor["timeout_ms"] = c.predictor.timeout_ms;
    }
    return json{{"predictor", predictor},
                {"priors",
                 {{"flip_prob", c.priors.flip_prob},
                  {"rotation_deg", range_json(c.priors.rotation_deg)},
                  {"scale", range_json(c.priors.scale)},
                  {"translate_frac", range_json(c.priors.translate_frac)},
                  {"brightness", range_json(c.priors.brightness)},
                  {"contrast", range_json(c.priors.contrast)},
                  {"noise_sigma", c.priors.noise_sigma}}},
                {"threshold", c.threshold},
                {"ood_threshold", c.ood_threshold ? json(*c.ood_threshold) : json(nullptr)},
                {"uncertainty_score", uncertainty::to_string(c.score_kind)},
                {"workers", c.workers}};
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path.string(), 0, e.what());
    }
    return config_from_json(j);
}

std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config) {
    if (config.type == "external") {
        return std::make_unique<ExternalPredictor>(config.command, std::chrono::milliseconds(config.timeout_ms));
    }
    return std::make_unique<SigmoidPredictor>(config.sigmoid);
}

Provenance method_from_string(const std::string& s) {
    if (s == "baseline") return Provenance::baseline;
    if (s == "tta") return Provenance::tta;
    if (s == "mcd") return Provenance::mcd;
    throw PreconditionError("method must be baseline, tta or mcd");
}

std::uint64_t case_seed(std::uint64_t seed, const std::string& case_id) {
    return hash_seed(seed, hash_string(case_id));
}

SampleStack make_stack(const Predictor& predictor, const Raster& image, Provenance method, int samples,
                       const tta::AugmentationPriors& priors, std::uint64_t seed, const Calibration& calibration) {
    switch (method) {
        case Provenance::baseline: return tta::baseline_stack(predictor, image, calibration);
        case Provenance::tta: return tta::tta_sample_stack(predictor, image, samples, priors, seed, calibration);
        case Provenance::mcd: return mcd_sample_stack(predictor, image, samples, seed, calibration);
    }
    throw PreconditionError("unknown method");
}

RunSummary run(const RunOptions& options) {
    options.config.validate();
    if (options.samples < 1) throw PreconditionError("samples must be >= 1");
    if (!fs::is_directory(options.dataset_dir)) throw IoError("dataset directory not found: " + options.dataset_dir.string());
    std::vector<phantom::DatasetEntry> entries = phantom::read_dataset_index(options.dataset_dir);

    fs::create_directories(options.out_dir);
    const std::unique_ptr<Predictor> predictor = make_predictor(options.config.predictor);

    std::vector<CaseWork> work(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        work[i].entry = std::move(entries[i]);
        work[i].staging = options.out_dir / (work[i].entry.meta.case_id + ".partial");
        fs::remove_all(work[i].staging);
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr fatal;
    auto worker = [&] {
        for (std::size_t i = next++; i < work.size(); i = next++) {
            try {
                process_case(work[i], options, *predictor);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!fatal) fatal = std::current_exception();
            }
        }
    };
    unsigned n_workers = options.config.workers > 0 ? static_cast<unsigned>(options.config.workers)
                                                    : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(std::max<std::size_t>(work.size(), 1)));
    std::vector<std::thread> threads;
    for (unsigned t = 1; t < n_workers; ++t) threads.emplace_back(worker);
    worker();
    for (std::thread& t : threads) t.join();
    if (fatal) std::rethrow_exception(fatal);

    RunSummary summary;
    std::vector<double> scores;
    for (const CaseWork& w : work) {
        if (w.scored) scores.push_back(w.record.uncertainty_score);
    }
    if (options.config.ood_threshold) {
        summary.ood_threshold = *options.config.ood_threshold;
    } else if (!scores.empty()) {
        summary.ood_threshold = analysis::ood_threshold_from(scores);
    }

    for (CaseWork& w : work) {
        analysis::CaseRecord& rec = w.record;
        if (w.scored) {
            rec.ood_threshold = summary.ood_threshold;
            rec.ood_flag = analysis::ood_flag(rec.uncertainty_score, summary.ood_threshold);
        }
        io::write_file_atomic(w.staging / "case.json", analysis::to_json(rec).dump(2) + "\n");
        const fs::path final_dir = options.out_dir / rec.meta.case_id;
        fs::remove_all(final_dir);
        fs::rename(w.staging, final_dir);
        if (!w.failure.empty()) summary.failures.emplace_back(rec.meta.case_id, w.failure);
        summary.records.push_back(rec);
    }
    std::sort(summary.records.begin(), summary.records.end(),
              [](const auto& a, const auto& b) { return a.meta.case_id < b.meta.case_id; });
    std::sort(summary.failures.begin(), summary.failures.end());

    json cases = json::array();
    for (const auto& r : summary.records) {
        cases.push_back({{"case_id", r.meta.case_id},
                         {"measurement_mm", r.measurement ? json(r.measurement->value_mm) : json(nullptr)},
                         {"uncertainty_score", r.uncertainty_score},
                         {"ood_flag", r.ood_flag},
                         {"flag", r.flag.empty() ? json(nullptr) : json(r.flag)}});
    }
    json failures = json::array();
    for (const auto& [id, msg] : summary.failures) failures.push_back({{"case_id", id}, {"error", msg}});
    const json run_info = {{"method", to_string(options.method)},
                           {"samples", options.method == Provenance::baseline ? 1 : options.samples},
                           {"seed", options.seed},
                           {"ood_threshold", summary.ood_threshold},
                           {"cases", cases},
                           {"failures", failures}};
    io::write_file_atomic(options.out_dir / "summary.json", run_info.dump(2) + "\n");
    io::write_file_atomic(options.out_dir / "config.json", to_json(options.config).dump(2) + "\n");
    return summary;
}

std::vector<LoadedCase> load_results(const fs::path& results_dir) {
    if (!fs::is_directory(results_dir)) throw IoError("results directory not found: " + results_dir.string());
    std::vector<LoadedCase> out;
    for (const auto& entry : fs::directory_iterator(results_dir)) {
        if (!entry.is_directory()) continue;
        const fs::path record_path = entry.path() / "case.json";
        if (!fs::exists(record_path)) continue;
        std::ifstream in(record_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw FormatError(record_path.string(), 0, e.what());
        }
        out.push_back({analysis::case_record_from_json(j), entry.path()});
    }
    std::sort(out.begin(), out.end(),
              [](const LoadedCase& a, const LoadedCase& b) { return a.record.meta.case_id < b.record.meta.case_id; });
    return out;
}

AnalyzeSummary analyze(const AnalyzeOptions& options) {
    const std::vector<LoadedCase> cases = load_results(options.results_dir);
    if (cases.empty()) throw IoError("no case records in " + options.results_dir.string());
    fs::create_directories(options.out_dir / "heatmaps");

    std::vector<analysis::CaseRecord> records;
    std::vector<Raster> unc;
    std::vector<BinaryMask> preds, gts;
    for (const LoadedCase& c : cases) {
        records.push_back(c.record);
        const auto layer_file = c.record.file(options.layer);
        const auto mask_file = c.record.file("mask");
        const auto gt_file = c.record.file("gt_mask");
        if (layer_file && mask_file && gt_file) {
            unc.push_back(io::load_float_map(c.dir / *layer_file, ValueKind::uncertainty));
            preds.push_back(io::load_mask(c.dir / *mask_file));
            gts.push_back(io::load_mask(c.dir / *gt_file));
        }
        for (const LayerFile& lf : kUncertaintyLayers) {
            const auto f = c.record.file(lf.layer);
            if (!f || std::string(lf.layer) == "max_prob") continue;
            const Raster r = io::load_float_map(c.dir / *f, ValueKind::uncertainty);
            io::save_quantized(r, options.out_dir / "heatmaps" / (c.record.meta.case_id + "_" + lf.layer + ".pgm"));
        }
    }

    std::vector<analysis::HistogramInput> inputs;
    for (std::size_t i = 0; i < unc.size(); ++i) inputs.push_back({&unc[i], &preds[i], &gts[i]});

    AnalyzeSummary summary;
    summary.rows = analysis::batch_report(records);
    summary.histogram = analysis::unc_error_histogram(inputs, options.bin_width);
    json hist = summary.histogram.to_json();
    hist["layer"] = options.layer;
    io::write_file_atomic(options.out_dir / "report.csv", analysis::report_csv(summary.rows));
    io::write_file_atomic(options.out_dir / "report.json", analysis::report_json(summary.rows).dump(2) + "\n");
    io::write_file_atomic(options.out_dir / "histogram.json", hist.dump(2) + "\n");
    return summary;
}

}  // namespace uqseg::pipeline
