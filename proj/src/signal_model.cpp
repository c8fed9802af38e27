#include "emguard/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "emguard/errors.hpp"

namespace emguard {

Instruction Instruction::clr(const InstructionTable& table) {
    return {InstructionKind::CLR, "CLR", 1, table.clr_amplitude};
}

Instruction Instruction::add(const InstructionTable& table) {
    return {InstructionKind::ADD, "ADD", 1, table.add_amplitude};
}

Instruction Instruction::jmp(const InstructionTable& table) {
    return {InstructionKind::JMP, "JMP", 3, table.jmp_amplitude};
}

Instruction Instruction::nop(const InstructionTable& table) {
    return {InstructionKind::NOP, "NOP", 1, table.nop_amplitude};
}

Instruction Instruction::custom(std::string name, int cycles, double amplitude) {
    return {InstructionKind::Custom, std::move(name), cycles, amplitude};
}

long Program::total_cycles() const {
    long total = 0;
    for (const auto& inst : instructions) {
        total += inst.cycles;
    }
    return total;
}

std::size_t Program::trace_length() const {
    return static_cast<std::size_t>(total_cycles()) * static_cast<std::size_t>(oversample_factor);
}

Program default_monitored_loop(std::size_t n_instructions, const InstructionTable& table) {
    if (n_instructions < 3) {
        throw InvalidParameter("monitored loop needs at least 3 instructions");
    }
    Program program;
    program.instructions.reserve(n_instructions);
    for (std::size_t i = 0; i + 2 < n_instructions; ++i) {
        program.instructions.push_back(i % 2 == 0 ? Instruction::clr(table) : Instruction::nop(table));
    }
    program.instructions.push_back(Instruction::custom("OUT", 1, table.out_amplitude));
    program.instructions.push_back(Instruction::custom("RJMP", 2, table.rjmp_amplitude));
    return program;
}

std::size_t default_injection_position(const Program& program) {
    return program.size() / 5;
}

const char* to_string(Label label) {
    return label == Label::Benign ? "benign" : "anomalous";
}

Label label_from_string(const std::string& text) {
    if (text == "benign" || text == "0") {
        return Label::Benign;
    }
    if (text == "anomalous" || text == "1") {
        return Label::Anomalous;
    }
    throw FormatError("unknown label '" + text + "'");
}

TraceMatrix::TraceMatrix(Matrix samples_)
    : samples(std::move(samples_)),
      labels(static_cast<std::size_t>(samples.rows()), Label::Benign),
      meta(static_cast<std::size_t>(samples.rows())) {}

TraceMatrix::TraceMatrix(Matrix samples_, std::vector<Label> labels_)
    : samples(std::move(samples_)),
      labels(std::move(labels_)),
      meta(static_cast<std::size_t>(samples.rows())) {
    if (labels.size() != rows()) {
        throw DimensionError("label count does not match row count");
    }
}

TraceMatrix TraceMatrix::from_traces(const std::vector<Trace>& traces) {
    TraceMatrix out;
    if (traces.empty()) {
        return out;
    }
    const std::size_t cols = traces.front().samples.size();
    out.samples.resize(static_cast<Eigen::Index>(traces.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < traces.size(); ++i) {
        if (traces[i].samples.size() != cols) {
            throw DimensionError("trace " + std::to_string(i) + " has " +
                                 std::to_string(traces[i].samples.size()) + " samples, expected " +
                                 std::to_string(cols));
        }
        std::copy(traces[i].samples.begin(), traces[i].samples.end(),
                  out.samples.row(static_cast<Eigen::Index>(i)).data());
        out.labels.push_back(traces[i].label);
        out.meta.push_back(traces[i].meta);
    }
    return out;
}

Trace TraceMatrix::row(std::size_t i) const {
    auto view = row_span(i);
    return {std::vector<double>(view.begin(), view.end()), labels.at(i), meta.at(i)};
}

std::span<const double> TraceMatrix::row_span(std::size_t i) const {
    if (i >= rows()) {
        throw IndexError("row " + std::to_string(i) + " out of range");
    }
    return {samples.row(static_cast<Eigen::Index>(i)).data(), cols()};
}

TraceMatrix TraceMatrix::select(std::span<const std::size_t> indices) const {
    TraceMatrix out;
    out.samples.resize(static_cast<Eigen::Index>(indices.size()), samples.cols());
    out.labels.reserve(indices.size());
    out.meta.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = indices[r];
        if (src >= rows()) {
            throw IndexError("row " + std::to_string(src) + " out of range");
        }
        out.samples.row(static_cast<Eigen::Index>(r)) = samples.row(static_cast<Eigen::Index>(src));
        out.labels.push_back(labels[src]);
        out.meta.push_back(meta[src]);
    }
    return out;
}

TraceMatrix TraceMatrix::stacked(const TraceMatrix& other) const {
    if (rows() > 0 && other.rows() > 0 && cols() != other.cols()) {
        throw DimensionError("cannot stack matrices with " + std::to_string(cols()) + " and " +
                             std::to_string(other.cols()) + " columns");
    }
    TraceMatrix out;
    const Eigen::Index width = rows() > 0 ? samples.cols() : other.samples.cols();
    out.samples.resize(samples.rows() + other.samples.rows(), width);
    if (rows() > 0) {
        out.samples.topRows(samples.rows()) = samples;
    }
    if (other.rows() > 0) {
        out.samples.bottomRows(other.samples.rows()) = other.samples;
    }
    out.labels = labels;
    out.labels.insert(out.labels.end(), other.labels.begin(), other.labels.end());
    out.meta = meta;
    out.meta.insert(out.meta.end(), other.meta.begin(), other.meta.end());
    return out;
}

std::size_t TraceMatrix::count(Label label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

namespace {

void validate_program(const Program& program) {
    if (program.instructions.empty()) {
        throw InvalidProgram("program has no instructions");
    }
    if (program.oversample_factor < 1) {
        throw InvalidProgram("oversample factor must be positive");
    }
    if (!(program.clock_hz > 0.0) || !std::isfinite(program.clock_hz)) {
        throw InvalidProgram("clock frequency must be positive and finite");
    }
    for (const auto& inst : program.instructions) {
        if (inst.cycles < 1) {
            throw InvalidProgram(inst.name + ": cycles must be >= 1");
        }
        if (!(inst.amplitude > 0.0) || !std::isfinite(inst.amplitude)) {
            throw InvalidProgram(inst.name + ": amplitude must be positive and finite");
        }
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

Trace synthesize_trace(const Program& program, double phase_jitter, double amp_jitter,
                       std::uint64_t seed) {
    validate_program(program);
    if (!std::isfinite(phase_jitter) || phase_jitter < 0.0) {
        throw InvalidParameter("phase jitter must be finite and >= 0");
    }
    if (!std::isfinite(amp_jitter) || amp_jitter < 0.0) {
        throw InvalidParameter("amplitude jitter must be finite and >= 0");
    }

    std::mt19937_64 rng(seed);
    double phase = 0.0;
    if (phase_jitter > 0.0) {
        phase = std::uniform_real_distribution<double>(-phase_jitter, phase_jitter)(rng);
    }
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto per_cycle = static_cast<std::size_t>(program.oversample_factor);
    const double step = 2.0 * std::numbers::pi / static_cast<double>(per_cycle);

    Trace trace;
    trace.samples.reserve(program.trace_length());
    for (const auto& inst : program.instructions) {
        double level = inst.amplitude;
        if (amp_jitter > 0.0) {
            level += amp_jitter * inst.amplitude * gauss(rng);
        }
        const std::size_t n = static_cast<std::size_t>(inst.cycles) * per_cycle;
        for (std::size_t j = 0; j < n; ++j) {
            // the carrier completes one period per CPU cycle
            const double angle = step * static_cast<double>(j % per_cycle) + phase;
            trace.samples.push_back(level * std::sin(angle));
        }
    }
    trace.meta.seed = seed;
    return trace;
}

Program inject_instruction(const Program& program, std::size_t position, const Instruction& inst) {
    if (position > program.instructions.size()) {
        throw IndexError("injection position " + std::to_string(position) +
                         " beyond program length " + std::to_string(program.size()));
    }
    Program out = program;
    out.instructions.insert(out.instructions.begin() + static_cast<std::ptrdiff_t>(position), inst);
    return out;
}

std::string describe_injection(const Program& base, const Program& injected) {
    const auto& a = base.instructions;
    const auto& b = injected.instructions;
    std::size_t i = 0;
    while (i < a.size() && i < b.size() && a[i] == b[i]) {
        ++i;
    }
    if (i == a.size() && i == b.size()) {
        return "none";
    }
    if (b.size() == a.size() + 1 && std::equal(a.begin() + static_cast<std::ptrdiff_t>(i), a.end(),
                                               b.begin() + static_cast<std::ptrdiff_t>(i) + 1)) {
        return b[i].name + "@" + std::to_string(i);
    }
    return "modified@" + std::to_string(i);
}

TraceMatrix generate_dataset(const Program& base, const Program& injected, std::size_t n_benign,
                             std::size_t n_anomalous, const JitterConfig& jitter,
                             std::uint64_t seed, Alignment alignment) {
    if (n_benign < 2) {
        throw InsufficientBaseline("need at least 2 benign traces, got " + std::to_string(n_benign));
    }
    validate_program(base);
    if (n_anomalous > 0) {
        validate_program(injected);
    }

    std::size_t width = base.trace_length();
    if (alignment == Alignment::PadToLongest && n_anomalous > 0) {
        width = std::max(width, injected.trace_length());
    }

    const std::string injection = describe_injection(base, injected);
    TraceMatrix out;
    out.samples = Matrix::Zero(static_cast<Eigen::Index>(n_benign + n_anomalous),
                               static_cast<Eigen::Index>(width));
    out.labels.reserve(n_benign + n_anomalous);
    out.meta.reserve(n_benign + n_anomalous);

    auto place = [&](std::size_t row, const Trace& trace) {
        const std::size_t n = std::min(width, trace.samples.size());
        std::copy_n(trace.samples.begin(), n, out.samples.row(static_cast<Eigen::Index>(row)).data());
    };

    for (std::size_t i = 0; i < n_benign; ++i) {
        const auto row_seed = derive_seed(seed, 1, i);
        place(i, synthesize_trace(base, jitter.phase_jitter, jitter.amp_jitter, row_seed));
        out.labels.push_back(Label::Benign);
        out.meta.push_back({std::nullopt, row_seed, std::nullopt});
    }
    for (std::size_t i = 0; i < n_anomalous; ++i) {
        const auto row_seed = derive_seed(seed, 2, i);
        place(n_benign + i, synthesize_trace(injected, jitter.phase_jitter, jitter.amp_jitter, row_seed));
        out.labels.push_back(Label::Anomalous);
        out.meta.push_back({std::nullopt, row_seed, injection});
    }
    return out;
}

} // namespace emguard
