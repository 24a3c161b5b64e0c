// uqseg: phantom generation, uncertainty pipeline runs, analysis reports and
// the review service.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 predictor error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#include "uqseg/error.hpp"
#include "uqseg/phantom.hpp"
#include "uqseg/pipeline.hpp"
#include "uqseg/review_service.hpp"

namespace {

namespace fs = std::filesystem;
using namespace uqseg;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitPredictor = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct PhantomArgs {
    std::string kind = "head";
    int count = 1;
    std::uint64_t seed = 0;
    std::string out;
    double noise = 0.05;
    int blur = 1;
};

struct RunArgs {
    std::string dataset;
    std::string method = "tta";
    int samples = tta::kDefaultSamples;
    std::uint64_t seed = 0;
    std::string config;
    std::string out;
    int workers = -1;
};

struct AnalyzeArgs {
    std::string results;
    std::string out;
    double bin_width = 0.05;
    std::string layer = "data";
};

struct ServeArgs {
    std::string results;
    std::string decisions;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string ui;
};

int cmd_phantom(const PhantomArgs& a) {
    phantom::DatasetOptions options;
    options.noise_sigma = a.noise;
    options.blur_passes = a.blur;
    const auto metas = phantom::generate_dataset(modality_from_string(a.kind), a.count, a.seed, a.out, options);
    std::cout << "wrote " << metas.size() << " " << a.kind << " phantoms to " << a.out << "\n";
    return kExitOk;
}

int cmd_run(const RunArgs& a) {
    pipeline::RunOptions options;
    options.dataset_dir = a.dataset;
    options.out_dir = a.out;
    options.method = pipeline::method_from_string(a.method);
    options.samples = a.samples;
    options.seed = a.seed;
    if (!a.config.empty()) options.config = pipeline::load_config(a.config);
    if (a.workers >= 0) options.config.workers = a.workers;

    const pipeline::RunSummary summary = pipeline::run(options);
    std::size_t flagged = 0, ood = 0;
    for (const auto& r : summary.records) {
        if (!r.flag.empty()) ++flagged;
        if (r.ood_flag) ++ood;
    }
    std::cout << "processed " << summary.records.size() << " cases (" << flagged << " flagged, " << ood
              << " out-of-domain, threshold " << summary.ood_threshold << ")\n";
    for (const auto& [id, msg] : summary.failures) std::cerr << "predictor failure: " << id << ": " << msg << "\n";
    return summary.failures.empty() ? kExitOk : kExitPredictor;
}

int cmd_analyze(const AnalyzeArgs& a) {
    pipeline::AnalyzeOptions options;
    options.results_dir = a.results;
    options.out_dir = a.out;
    options.bin_width = a.bin_width;
    options.layer = a.layer;
    const auto summary = pipeline::analyze(options);
    std::cout << analysis::report_csv(summary.rows);
    return kExitOk;
}

int cmd_serve(const ServeArgs& a) {
    if (!fs::is_directory(a.results)) throw IoError("results directory not found: " + a.results);
    review::ReviewService service(a.results, a.decisions);
    httplib::Server server;
    std::optional<fs::path> ui;
    if (!a.ui.empty()) ui = fs::path(a.ui);
    service.bind(server, ui);

    if (!server.bind_to_port(a.host, a.port)) {
        std::cerr << "error: cannot bind " << a.host << ":" << a.port << " (port busy?)\n";
        return kExitData;
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread watcher([&] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
    });
    std::cout << "serving " << service.case_count() << " cases on http://" << a.host << ":" << a.port << std::endl;
    server.listen_after_bind();
    g_stop = true;
    watcher.join();
    std::cout << "shut down; decisions in " << a.decisions << std::endl;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty quantification for binary segmentation and biometry"};
    app.require_subcommand(1);

    PhantomArgs pa;
    auto* phantom_cmd = app.add_subcommand("phantom", "Generate a labelled phantom dataset");
    phantom_cmd->add_option("--kind", pa.kind, "head (ellipse) or femur (capsule)")
        ->check(CLI::IsMember({"head", "femur"}))
        ->required();
    phantom_cmd->add_option("--count", pa.count, "Number of cases")->check(CLI::PositiveNumber)->required();
    phantom_cmd->add_option("--seed", pa.seed, "Dataset seed");
    phantom_cmd->add_option("--out", pa.out, "Output directory")->required();
    phantom_cmd->add_option("--noise", pa.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
    phantom_cmd->add_option("--blur", pa.blur, "3x3 box blur passes")->check(CLI::NonNegativeNumber);

    RunArgs ra;
    auto* run_cmd = app.add_subcommand("run", "Run the segmentation uncertainty pipeline");
    run_cmd->add_option("--dataset", ra.dataset, "Dataset directory (with dataset.json)")->required();
    run_cmd->add_option("--method", ra.method, "baseline, tta or mcd")
        ->check(CLI::IsMember({"baseline", "tta", "mcd"}));
    run_cmd->add_option("--samples", ra.samples, "Monte Carlo samples T")->check(CLI::PositiveNumber);
    run_cmd->add_option("--seed", ra.seed, "Global seed");
    run_cmd->add_option("--config", ra.config, "Pipeline config JSON");
    run_cmd->add_option("--out", ra.out, "Results directory")->required();
    run_cmd->add_option("--workers", ra.workers, "Worker threads (overrides config; 0 = all CPUs)")
        ->check(CLI::NonNegativeNumber);

    AnalyzeArgs aa;
    auto* analyze_cmd = app.add_subcommand("analyze", "Write reports and the uncertainty/error histogram");
    analyze_cmd->add_option("--results", aa.results, "Results directory from `run`")->required();
    analyze_cmd->add_option("--bin-width", aa.bin_width, "Uncertainty bin width")->check(CLI::Range(1e-6, 0.5));
    analyze_cmd->add_option("--layer", aa.layer, "Uncertainty layer for the histogram")
        ->check(CLI::IsMember({"total", "data", "model", "ekl", "variance"}));
    analyze_cmd->add_option("--out", aa.out, "Report directory")->required();

    ServeArgs sa;
    auto* serve_cmd = app.add_subcommand("serve", "Serve results for review over HTTP");
    serve_cmd->add_option("--results", sa.results, "Results directory from `run`")->required();
    serve_cmd->add_option("--port", sa.port, "TCP port")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--host", sa.host, "Bind address");
    serve_cmd->add_option("--decisions", sa.decisions, "Decision log (newline-delimited JSON)")->required();
    serve_cmd->add_option("--ui", sa.ui, "Directory with the built review UI");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*phantom_cmd) return cmd_phantom(pa);
        if (*run_cmd) return cmd_run(ra);
        if (*analyze_cmd) return cmd_analyze(aa);
        if (*serve_cmd) return cmd_serve(sa);
    } catch (const PredictorError& e) {
        std::cerr << "predictor error: " << e.what() << "\n";
        return kExitPredictor;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
