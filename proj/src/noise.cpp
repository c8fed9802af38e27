#include "emguard/noise.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "emguard/errors.hpp"

namespace emguard {

namespace {

constexpr std::uint64_t kNoiseRowStream = 0x6e6f697365ULL;

void add_noise_in_place(std::span<double> samples, double snr_db, std::uint64_t seed) {
    if (!std::isfinite(snr_db)) {
        throw InvalidParameter("snr_db must be finite");
    }
    const double power = signal_power(samples);
    if (power <= 0.0) {
        throw ZeroSignalError("cannot calibrate noise against a zero-power trace");
    }
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (double& v : samples) {
        v += gauss(rng);
    }
}

} // namespace

double signal_power(std::span<const double> samples) {
    if (samples.empty()) {
        throw InvalidInput("signal_power of an empty vector");
    }
    double acc = 0.0;
    for (double v : samples) {
        acc += v * v;
    }
    return acc / static_cast<double>(samples.size());
}

Trace add_awgn(const Trace& trace, const NoiseSpec& spec) {
    Trace out = trace;
    add_noise_in_place(out.samples, spec.snr_db, spec.seed);
    out.meta.snr_db = spec.snr_db;
    return out;
}

TraceMatrix add_awgn(const TraceMatrix& matrix, double snr_db, std::uint64_t seed) {
    TraceMatrix out = matrix;
    const auto cols = static_cast<std::size_t>(out.samples.cols());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        std::span<double> row(out.samples.row(static_cast<Eigen::Index>(i)).data(), cols);
        add_noise_in_place(row, snr_db, derive_seed(seed, kNoiseRowStream, i));
        out.meta[i].snr_db = snr_db;
    }
    return out;
}

double measure_snr(std::span<const double> clean, std::span<const double> noisy) {
    if (clean.size() != noisy.size()) {
        throw DimensionError("measure_snr needs equal lengths");
    }
    if (clean.empty()) {
        throw InvalidInput("measure_snr of empty traces");
    }
    double noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double d = noisy[i] - clean[i];
        noise += d * d;
    }
    if (noise == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    noise /= static_cast<double>(clean.size());
    return 10.0 * std::log10(signal_power(clean) / noise);
}

double measure_snr(const Trace& clean, const Trace& noisy) {
    return measure_snr(std::span<const double>(clean.samples), std::span<const double>(noisy.samples));
}

} // namespace emguard
