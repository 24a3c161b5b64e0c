#include "uqseg/predictor.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "uqseg/error.hpp"
#include "uqseg/raster_io.hpp"
#include "uqseg/rng.hpp"

namespace uqseg {

namespace fs = std::filesystem;

void SigmoidParams::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("sigmoid threshold must lie in (0, 1)");
    if (!(softness > 0.0)) throw PreconditionError("sigmoid softness must be > 0");
    if (!(threshold_jitter >= 0.0) || !(softness_jitter >= 0.0)) {
        throw PreconditionError("sigmoid jitter must be >= 0");
    }
    if (!(softness - 3.0 * softness_jitter > 0.0)) {
        throw PreconditionError("sigmoid softness must exceed 3 * softness_jitter");
    }
}

SigmoidPredictor::SigmoidPredictor(SigmoidParams params) : params_(params) { params_.validate(); }

Raster SigmoidPredictor::predict(const Raster& image, const PredictMode& mode, const Calibration&) const {
    if (image.kind() != ValueKind::intensity) throw PredictorError("sigmoid predictor expects an intensity raster");
    double threshold = params_.threshold;
    double softness = params_.softness;
    if (mode.stochastic) {
        Rng rng(mode.seed);
        threshold += rng.normal(0.0, params_.threshold_jitter);
        softness *= std::exp(rng.normal(0.0, params_.softness_jitter));
    }
    std::vector<double> p(image.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = 1.0 / (1.0 + std::exp(-(image[i] - threshold) / softness));
    }
    return Raster(image.width(), image.height(), ValueKind::probability, std::move(p));
}

namespace {

// Owns a unique directory under the system temp dir.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "uqseg-predict-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) throw PredictorError("cannot create temporary directory");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ExternalPredictor::ExternalPredictor(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
    if (command_.empty()) throw PreconditionError("external predictor command is empty");
}

Raster ExternalPredictor::predict(const Raster& image, const PredictMode& mode, const Calibration& calibration) const {
    TempDir dir;
    const fs::path input = dir.path() / "input.pgm";
    const fs::path output = dir.path() / "output.uqp";
    const fs::path errlog = dir.path() / "stderr.txt";
    io::save_image(image, input);
    io::save_sidecar(input, calibration);

    std::string cmd = command_ + " input.pgm output.uqp";
    if (mode.stochastic) cmd += " --seed " + std::to_string(mode.seed);

    const pid_t pid = ::fork();
    if (pid < 0) throw PredictorError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
        ::setpgid(0, 0);
        if (::chdir(dir.path().c_str()) != 0) ::_exit(126);
        const int fd = ::open(errlog.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            ::dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        const int devnull = ::open("/dev/null", O_RDWR);
        if (devnull >= 0) {
            ::dup2(devnull, STDIN_FILENO);
            ::dup2(devnull, STDOUT_FILENO);
            ::close(devnull);
        }
        ::execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    int status = 0;
    for (;;) {
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0 && errno != EINTR) throw PredictorError(std::string("waitpid failed: ") + std::strerror(errno));
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            throw PredictorError("external predictor timed out after " + std::to_string(timeout_.count()) + " ms");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }

    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        throw PredictorError("external predictor exited with status " + std::to_string(code) +
                             "; stderr: " + read_text(errlog));
    }
    if (!fs::exists(output)) throw PredictorError("external predictor produced no output.uqp");

    Raster result = [&] {
        try {
            return io::load_probmap(output);
        } catch (const Error& e) {
            throw PredictorError(std::string("malformed predictor output: ") + e.what());
        }
    }();
    if (!result.same_shape(image)) {
        throw PredictorError("predictor output is " + std::to_string(result.width()) + "x" +
                             std::to_string(result.height()) + ", input is " + std::to_string(image.width()) +
                             "x" + std::to_string(image.height()) + " (dimension mismatch)");
    }
    return result;
}

SampleStack mcd_sample_stack(const Predictor& predictor, const Raster& image, int samples, std::uint64_t seed,
                             const Calibration& calibration) {
    if (samples < 1) throw PreconditionError("sample count must be >= 1");
    SampleStack stack;
    stack.provenance = Provenance::mcd;
    stack.seed = seed;
    stack.samples.reserve(static_cast<std::size_t>(samples));
    for (int t = 0; t < samples; ++t) {
        const PredictMode mode = PredictMode::sampled(hash_seed(seed, static_cast<std::uint64_t>(t)));
        try {
            Raster p = predictor.predict(image, mode, calibration);
            if (!p.same_shape(image)) throw PredictorError("output shape differs from input");
            stack.samples.push_back(p.as(ValueKind::probability));
        } catch (const Error& e) {
            throw PredictorError("sample " + std::to_string(t) + ": " + e.what());
        }
    }
    return stack;
}

}  // namespace uqseg
