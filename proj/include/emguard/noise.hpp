#pragma once

#include <cstdint>
#include <span>

#include "emguard/signal_model.hpp"

namespace emguard {

struct NoiseSpec {
    double snr_db = 0.0;
    std::uint64_t seed = 0;
};

/// Mean of squared samples.
double signal_power(std::span<const double> samples);

/// Adds zero-mean white Gaussian noise with variance P / 10^(snr/10), where P
/// is the trace's own mean-square power.
Trace add_awgn(const Trace& trace, const NoiseSpec& spec);

/// Row-wise add_awgn; row i is calibrated to its own power and seeded with
/// derive_seed(seed, stream, i).
TraceMatrix add_awgn(const TraceMatrix& matrix, double snr_db, std::uint64_t seed);

/// SNR of `noisy` relative to `clean` in dB; +infinity when they are identical.
double measure_snr(std::span<const double> clean, std::span<const double> noisy);
double measure_snr(const Trace& clean, const Trace& noisy);

} // namespace emguard
