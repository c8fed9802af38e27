#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace emguard {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class InstructionKind { CLR, ADD, JMP, NOP, Custom };

/// Amplitude table for the named instruction kinds.
struct InstructionTable {
    double clr_amplitude = 1.0;
    double add_amplitude = 1.3;
    double jmp_amplitude = 1.6;
    double nop_amplitude = 0.4;
    /// Port write closing the loop body.
    double out_amplitude = 2.0;
    /// Relative jump back to the loop head.
    double rjmp_amplitude = 2.0;
};

/// One CPU instruction as seen by the emanation model: how long it runs and
/// how strongly it modulates the carrier.
struct Instruction {
    InstructionKind kind = InstructionKind::NOP;
    std::string name;
    int cycles = 1;
    double amplitude = 1.0;

    static Instruction clr(const InstructionTable& table = {});
    static Instruction add(const InstructionTable& table = {});
    static Instruction jmp(const InstructionTable& table = {});
    static Instruction nop(const InstructionTable& table = {});
    static Instruction custom(std::string name, int cycles, double amplitude);

    bool operator==(const Instruction&) const = default;
};

struct Program {
    std::vector<Instruction> instructions;
    double clock_hz = 16.0e6;
    int oversample_factor = 16;

    std::size_t size() const { return instructions.size(); }
    long total_cycles() const;
    /// Number of samples a synthesized trace of this program has.
    std::size_t trace_length() const;

    bool operator==(const Program&) const = default;
};

/// The monitored control loop used by the synthetic experiments: an
/// alternating CLR/NOP body closed by an output write and a 2-cycle
/// relative jump back to the loop head.
Program default_monitored_loop(std::size_t n_instructions = 32, const InstructionTable& table = {});

/// Position at which the experiments inject the foreign instruction.
std::size_t default_injection_position(const Program& program);

enum class Label : std::uint8_t { Benign = 0, Anomalous = 1 };

const char* to_string(Label label);
Label label_from_string(const std::string& text);

struct TraceMeta {
    std::optional<double> snr_db;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> injection;

    bool operator==(const TraceMeta&) const = default;
};

struct Trace {
    std::vector<double> samples;
    Label label = Label::Benign;
    TraceMeta meta;
};

/// Aligned batch of traces: rows are observations, columns are time samples.
struct TraceMatrix {
    Matrix samples;
    std::vector<Label> labels;
    std::vector<TraceMeta> meta;

    TraceMatrix() = default;
    /// All rows benign, no metadata.
    explicit TraceMatrix(Matrix samples);
    TraceMatrix(Matrix samples, std::vector<Label> labels);

    static TraceMatrix from_traces(const std::vector<Trace>& traces);

    std::size_t rows() const { return static_cast<std::size_t>(samples.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(samples.cols()); }
    Trace row(std::size_t i) const;
    std::span<const double> row_span(std::size_t i) const;

    /// Subset of rows in the given order.
    TraceMatrix select(std::span<const std::size_t> indices) const;
    /// Rows of `other` appended below this matrix; column counts must match.
    TraceMatrix stacked(const TraceMatrix& other) const;

    std::size_t count(Label label) const;
};

struct JitterConfig {
    /// Half-width of the uniform carrier phase offset, radians. The default
    /// models a capture clock that is not phase-locked to the CPU clock.
    double phase_jitter = 3.14159265358979323846;
    /// Relative standard deviation of the per-instruction envelope level.
    double amp_jitter = 0.01;
};

enum class Alignment {
    /// Fixed capture window of one benign loop iteration: longer traces are
    /// truncated, shorter ones zero-padded at the end.
    CaptureWindow,
    /// Zero-pad every trace at the end to the longest trace.
    PadToLongest,
};

Trace synthesize_trace(const Program& program, double phase_jitter, double amp_jitter,
                       std::uint64_t seed);

/// Short human-readable description of how `injected` differs from `base`,
/// e.g. "ADD@6".
std::string describe_injection(const Program& base, const Program& injected);

Program inject_instruction(const Program& program, std::size_t position, const Instruction& inst);

TraceMatrix generate_dataset(const Program& base, const Program& injected, std::size_t n_benign,
                             std::size_t n_anomalous, const JitterConfig& jitter,
                             std::uint64_t seed, Alignment alignment = Alignment::CaptureWindow);

/// Deterministic per-stream seed derivation (SplitMix64 mixing).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

} // namespace emguard
