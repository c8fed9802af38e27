#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "emguard/denoise.hpp"
#include "emguard/detector.hpp"
#include "emguard/errors.hpp"
#include "emguard/eval.hpp"
#include "emguard/noise.hpp"
#include "emguard/signal_model.hpp"
#include "emguard/trace_io.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using namespace emguard;
using emguard::cli::RunManifest;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const ContaminatedBaseline*>(&e) || dynamic_cast<const DataError*>(&e) ||
        dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const NumericalError*>(&e) ||
        dynamic_cast<const ZeroSignalError*>(&e) || dynamic_cast<const EvaluationError*>(&e)) {
        return kExitData;
    }
    return kExitUsage;
}

TraceFormat format_of(const std::string& flag, const fs::path& path) {
    return flag.empty() ? format_for_path(path) : parse_trace_format(flag);
}

std::string extension_for(TraceFormat format) { return format == TraceFormat::Csv ? ".csv" : ".emtr"; }

/// The common SNR of every row, when all rows record the same one.
std::optional<double> recorded_snr(const TraceMatrix& m) {
    std::optional<double> snr;
    for (const auto& meta : m.meta) {
        if (!meta.snr_db || (snr && *snr != *meta.snr_db)) {
            return std::nullopt;
        }
        snr = meta.snr_db;
    }
    return snr;
}

std::optional<CuttingPoint> resolve_cp(const std::string& spec, const TraceMatrix& m, std::optional<double> snr) {
    if (spec == "none") {
        return std::nullopt;
    }
    if (spec == "auto" || spec == "traditional") {
        return traditional_cutting_point(singular_values(m.samples));
    }
    if (spec == "formula") {
        if (!snr) {
            throw UsageError("--cp formula needs an SNR: pass --snr or use traces whose manifest records one");
        }
        return formula_cutting_point(*snr);
    }
    try {
        std::size_t used = 0;
        const int v = std::stoi(spec, &used);
        if (used == spec.size()) {
            return CuttingPoint(v);
        }
    } catch (const std::logic_error&) {
    }
    throw UsageError("--cp must be none, auto, formula or a positive integer, got '" + spec + "'");
}

nlohmann::json cp_json(std::optional<CuttingPoint> cp) {
    return cp ? nlohmann::json(cp->value()) : nlohmann::json(nullptr);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::string config_path(const CLI::App& app) {
    const auto* opt = app.get_config_ptr();
    return opt != nullptr && opt->count() > 0 ? opt->as<std::string>() : std::string();
}

struct GenerateArgs {
    std::string injection = "add";
    std::optional<double> snr;
    std::size_t n = 200;
    std::optional<std::size_t> n_anomalous;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::string format = "binary";
    std::size_t program_length = 32;
    double phase_jitter = JitterConfig{}.phase_jitter;
    double amp_jitter = JitterConfig{}.amp_jitter;
    std::string alignment = "capture";
};

int cmd_generate(const GenerateArgs& a, RunManifest manifest) {
    const Injection injection = injection_from_string(a.injection);
    const TraceFormat format = parse_trace_format(a.format);
    Alignment alignment = Alignment::CaptureWindow;
    if (a.alignment == "pad") {
        alignment = Alignment::PadToLongest;
    } else if (a.alignment != "capture") {
        throw UsageError("--alignment must be capture or pad");
    }
    const Program base = default_monitored_loop(a.program_length);
    const Program injected =
        inject_instruction(base, default_injection_position(base), injected_instruction(injection));
    const std::size_t n_anom = a.n_anomalous.value_or(a.n);
    const TraceMatrix all =
        generate_dataset(base, injected, a.n, n_anom, JitterConfig{a.phase_jitter, a.amp_jitter}, a.seed, alignment);

    std::vector<std::size_t> benign_rows(a.n);
    std::iota(benign_rows.begin(), benign_rows.end(), std::size_t{0});
    std::vector<std::size_t> anom_rows(n_anom);
    std::iota(anom_rows.begin(), anom_rows.end(), a.n);
    TraceMatrix benign = all.select(benign_rows);
    TraceMatrix anomalous = all.select(anom_rows);
    if (a.snr) {
        benign = add_awgn(benign, *a.snr, derive_seed(a.seed, 31));
        if (n_anom > 0) {
            anomalous = add_awgn(anomalous, *a.snr, derive_seed(a.seed, 32));
        }
    }

    fs::create_directories(a.out_dir);
    const fs::path benign_path = fs::path(a.out_dir) / ("benign" + extension_for(format));
    const fs::path anom_path = fs::path(a.out_dir) / ("anomalous" + extension_for(format));
    manifest.seed = a.seed;
    manifest.outputs.push_back(benign_path.string());
    if (n_anom > 0) {
        manifest.outputs.push_back(anom_path.string());
    }
    manifest.parameters = {{"injection", to_string(injection)},
                           {"snr_db", a.snr ? nlohmann::json(*a.snr) : nlohmann::json(nullptr)},
                           {"n_benign", a.n},
                           {"n_anomalous", n_anom},
                           {"program_length", a.program_length},
                           {"phase_jitter", a.phase_jitter},
                           {"amp_jitter", a.amp_jitter},
                           {"alignment", a.alignment},
                           {"trace_length", all.cols()}};
    const nlohmann::json extra{{"manifest", manifest.to_json()}};
    save_traces(benign, benign_path, format, extra);
    if (n_anom > 0) {
        save_traces(anomalous, anom_path, format, extra);
    }
    write_text(fs::path(a.out_dir) / "manifest.json", manifest.to_json().dump(1) + "\n");
    std::cout << manifest.to_json().dump() << "\n";
    return 0;
}

struct FingerprintArgs {
    std::string traces;
    std::string format;
    std::string cp = "formula";
    std::optional<double> snr;
    int k = 3;
    std::string out = "model.emmd";
};

int cmd_fingerprint(const FingerprintArgs& a, RunManifest manifest) {
    const TraceMatrix benign = load_traces(a.traces, format_of(a.format, a.traces));
    const std::optional<double> snr = a.snr ? a.snr : recorded_snr(benign);
    const auto cp = resolve_cp(a.cp, benign, snr);
    const BaselineModel model = fingerprint(benign, cp, a.k, snr);
    manifest.seed = load_sidecar(a.traces).value("manifest", nlohmann::json::object()).value("seed", nlohmann::json());
    manifest.inputs.push_back(a.traces);
    manifest.outputs.push_back(a.out);
    manifest.parameters = {{"cp", a.cp},
                           {"train_cp", cp_json(cp)},
                           {"k", a.k},
                           {"train_snr_db", snr ? nlohmann::json(*snr) : nlohmann::json(nullptr)},
                           {"rows", benign.rows()}};
    save_model(model, a.out, manifest.to_json());
    std::cout << nlohmann::json{{"model", a.out},
                                {"train_cp", cp_json(cp)},
                                {"k", a.k},
                                {"rows", model.size()},
                                {"max_strangeness", model.strangeness.maxCoeff()}}
                     .dump()
              << "\n";
    return 0;
}

struct DetectArgs {
    std::string model;
    std::string traces;
    std::string format;
    std::string cp = "model";
    std::optional<double> snr;
    double confidence = 0.95;
    std::string out;
};

int cmd_detect(const DetectArgs& a, RunManifest manifest) {
    nlohmann::json model_manifest;
    const BaselineModel model = load_model(a.model, &model_manifest);
    const TraceMatrix cohort = load_traces(a.traces, format_of(a.format, a.traces));
    if (cohort.rows() < 2) {
        throw UsageError("a deployment cohort needs at least 2 traces, got " + std::to_string(cohort.rows()));
    }
    std::optional<CuttingPoint> test_cp = model.train_cp;
    const bool in_baseline = a.cp == "baseline";
    if (a.cp != "model" && !in_baseline) {
        test_cp = resolve_cp(a.cp, cohort, a.snr ? a.snr : recorded_snr(cohort));
    }
    const auto detections = in_baseline ? detect_in_baseline_subspace(model, cohort, a.confidence)
                                        : detect_cohort(model, cohort, test_cp, a.confidence);

    std::ostringstream csv;
    csv.precision(17);
    csv << "index,strangeness,p_value,status\n";
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const auto& d = detections[i];
        const int status = static_cast<int>(*d.status);
        flagged += static_cast<std::size_t>(status);
        csv << i << ',' << d.strangeness << ',' << d.p_value << ',' << status << '\n';
    }
    manifest.inputs = {a.model, a.traces};
    manifest.seed = model_manifest.value("seed", nlohmann::json()).is_number_unsigned()
                        ? std::optional<std::uint64_t>(model_manifest["seed"].get<std::uint64_t>())
                        : std::nullopt;
    manifest.parameters = {{"confidence", a.confidence},
                           {"cp", a.cp},
                           {"test_cp", in_baseline ? nlohmann::json(nullptr) : cp_json(test_cp)},
                           {"rows", cohort.rows()}};
    if (a.out.empty()) {
        std::cout << csv.str();
    } else {
        manifest.outputs.push_back(a.out);
        write_text(a.out, csv.str());
        write_text(a.out + ".manifest.json", manifest.to_json().dump(1) + "\n");
    }
    std::cerr << flagged << " of " << detections.size() << " traces flagged anomalous at confidence " << a.confidence
              << "\n";
    return 0;
}

struct ReproduceArgs {
    std::string table;
    std::uint64_t seed = 1;
    int folds = 10;
    std::size_t n_benign = DataConfig{}.n_benign;
    std::uint64_t data_seed = DataConfig{}.seed;
    std::string out_dir = ".";
    bool plan = false;
    bool roc = false;
};

int cmd_reproduce(const ReproduceArgs& a, RunManifest manifest) {
    const TablePreset preset = parse_table_preset(a.table);
    DataConfig data;
    data.n_benign = a.n_benign;
    data.seed = a.data_seed;
    manifest.seed = a.seed;
    manifest.parameters = {{"table", to_string(preset)},
                           {"folds", a.folds},
                           {"n_benign", a.n_benign},
                           {"data_seed", a.data_seed},
                           {"plan_only", a.plan}};

    ExperimentReport report;
    if (a.plan) {
        report = plan_table(preset, a.seed, a.folds);
    } else {
        report = run_table(preset, data, a.seed, a.folds, [](const CellResult& c) {
            std::cerr << to_string(c.config.injection) << " train " << c.config.train_snr_db << " dB test "
                      << c.config.test_snr_db << " dB  auc " << c.auc << "\n";
        });
    }
    fs::create_directories(a.out_dir);
    const fs::path base = fs::path(a.out_dir) / to_string(preset);
    const std::string json_path = base.string() + ".json";
    const std::string csv_path = base.string() + ".csv";
    manifest.outputs = {json_path, csv_path};
    if (a.roc && !a.plan) {
        const fs::path roc_dir = fs::path(a.out_dir) / (to_string(preset) + "_roc");
        fs::create_directories(roc_dir);
        for (const auto& cell : report.cells) {
            std::ostringstream name;
            name << to_string(cell.config.injection) << "_train" << cell.config.train_snr_db << "_test"
                 << cell.config.test_snr_db << ".csv";
            const auto path = roc_dir / name.str();
            write_text(path, roc_to_csv(cell));
            manifest.outputs.push_back(path.string());
        }
    }
    report.manifest = manifest.to_json();
    write_text(json_path, report_to_json(report).dump(1) + "\n");
    const std::string csv = report_to_csv(report);
    write_text(csv_path, csv);
    std::cout << csv;
    return 0;
}

struct DenoiseArgs {
    std::string traces;
    std::string format;
    std::string cp = "formula";
    std::optional<double> snr;
    std::string out;
    std::string out_format;
};

int cmd_denoise(const DenoiseArgs& a, RunManifest manifest) {
    const TraceMatrix m = load_traces(a.traces, format_of(a.format, a.traces));
    const auto cp = resolve_cp(a.cp, m, a.snr ? a.snr : recorded_snr(m));
    if (!cp) {
        throw UsageError("denoise needs a cutting point");
    }
    const TraceMatrix out = denoise_batch(m, *cp);
    manifest.inputs.push_back(a.traces);
    manifest.outputs.push_back(a.out);
    manifest.parameters = {{"cp", cp->value()}, {"rows", m.rows()}};
    save_traces(out, a.out, format_of(a.out_format, a.out), {{"manifest", manifest.to_json()}});
    std::cerr << "denoised " << m.rows() << " traces with cutting point " << cp->value() << "\n";
    return 0;
}

struct SnrArgs {
    std::string clean;
    std::string noisy;
    std::string format;
};

int cmd_snr(const SnrArgs& a) {
    const TraceMatrix clean = load_traces(a.clean, format_of(a.format, a.clean));
    const TraceMatrix noisy = load_traces(a.noisy, format_of(a.format, a.noisy));
    if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) {
        throw DimensionError("clean and noisy files differ in shape");
    }
    std::cout << "index,snr_db\n";
    double sum = 0.0;
    std::size_t finite = 0;
    for (std::size_t i = 0; i < clean.rows(); ++i) {
        const double snr = measure_snr(clean.row_span(i), noisy.row_span(i));
        std::cout << i << ',' << (std::isinf(snr) ? std::string("clean") : std::to_string(snr)) << '\n';
        if (std::isfinite(snr)) {
            sum += snr;
            ++finite;
        }
    }
    if (finite > 0) {
        std::cerr << "mean SNR " << sum / static_cast<double>(finite) << " dB over " << finite << " noisy traces\n";
    } else {
        std::cerr << "all traces are clean\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Code-injection detection on instruction-correlated emanation traces"};
    app.set_config("--config", "", "key = value config file; command-line flags win on conflict");
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Synthesize benign and injected trace files");
    generate->add_option("--injection", gen.injection, "add or jmp")->capture_default_str();
    generate->add_option("--snr", gen.snr, "Target SNR in dB; omit for clean traces");
    generate->add_option("--n", gen.n, "Number of benign traces")->capture_default_str();
    generate->add_option("--n-anomalous", gen.n_anomalous, "Number of injected traces (default: --n)");
    generate->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
    generate->add_option("--out-dir", gen.out_dir, "Output directory")->capture_default_str();
    generate->add_option("--format", gen.format, "binary or csv")->capture_default_str();
    generate->add_option("--program-length", gen.program_length, "Instructions in the monitored loop")
        ->capture_default_str();
    generate->add_option("--phase-jitter", gen.phase_jitter, "Carrier phase half-width, radians")
        ->capture_default_str();
    generate->add_option("--amp-jitter", gen.amp_jitter, "Relative envelope jitter")->capture_default_str();
    generate->add_option("--alignment", gen.alignment, "capture or pad")->capture_default_str();

    FingerprintArgs fp;
    auto* fingerprint_cmd = app.add_subcommand("fingerprint", "Build a baseline model from benign traces");
    fingerprint_cmd->add_option("--traces", fp.traces, "Benign trace file")->required();
    fingerprint_cmd->add_option("--format", fp.format, "binary or csv (default: from extension)");
    fingerprint_cmd->add_option("--cp", fp.cp, "auto, formula, none or an integer")->capture_default_str();
    fingerprint_cmd->add_option("--snr", fp.snr, "Training SNR for --cp formula (default: from the trace manifest)");
    fingerprint_cmd->add_option("--k", fp.k, "LOF neighbour count")->capture_default_str();
    fingerprint_cmd->add_option("--out", fp.out, "Model file")->capture_default_str();

    DetectArgs det;
    auto* detect_cmd = app.add_subcommand("detect", "Score a deployment cohort against a model");
    detect_cmd->add_option("--model", det.model, "Model file")->required();
    detect_cmd->add_option("--traces", det.traces, "Deployment trace file")->required();
    detect_cmd->add_option("--format", det.format, "binary or csv (default: from extension)");
    detect_cmd->add_option("--cp", det.cp, "model, baseline, auto, formula, none or an integer")->capture_default_str();
    detect_cmd->add_option("--snr", det.snr, "Deployment SNR for --cp formula");
    detect_cmd->add_option("--confidence", det.confidence, "Detection confidence in (0, 1)")->capture_default_str();
    detect_cmd->add_option("--out", det.out, "Verdict CSV (default: stdout)");

    ReproduceArgs rep;
    auto* reproduce = app.add_subcommand("reproduce", "Run a preset experiment table");
    reproduce->add_option("--table", rep.table, "1, 2, 3 or 4")->required();
    reproduce->add_option("--seed", rep.seed, "Experiment seed")->capture_default_str();
    reproduce->add_option("--folds", rep.folds, "Cross-validation folds")->capture_default_str();
    reproduce->add_option("--n-benign", rep.n_benign, "Benign traces in the synthetic pool")->capture_default_str();
    reproduce->add_option("--data-seed", rep.data_seed, "Seed of the synthetic pool")->capture_default_str();
    reproduce->add_option("--out-dir", rep.out_dir, "Report directory")->capture_default_str();
    reproduce->add_flag("--plan", rep.plan, "Resolve and write the cell grid without running it");
    reproduce->add_flag("--roc", rep.roc, "Also write per-cell ROC curves");

    DenoiseArgs den;
    auto* denoise_cmd = app.add_subcommand("denoise", "SVD-denoise a trace file as one batch");
    denoise_cmd->add_option("--traces", den.traces, "Input trace file")->required();
    denoise_cmd->add_option("--format", den.format, "Input format (default: from extension)");
    denoise_cmd->add_option("--cp", den.cp, "auto, formula or an integer")->capture_default_str();
    denoise_cmd->add_option("--snr", den.snr, "SNR for --cp formula");
    denoise_cmd->add_option("--out", den.out, "Output trace file")->required();
    denoise_cmd->add_option("--out-format", den.out_format, "Output format (default: from extension)");

    SnrArgs snr;
    auto* snr_cmd = app.add_subcommand("snr", "Measure per-trace SNR of a noisy file against its clean source");
    snr_cmd->add_option("--clean", snr.clean, "Clean trace file")->required();
    snr_cmd->add_option("--noisy", snr.noisy, "Noisy trace file")->required();
    snr_cmd->add_option("--format", snr.format, "binary or csv (default: from extension)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        const std::string cfg = config_path(app);
        if (generate->parsed()) {
            return cmd_generate(gen, RunManifest::start("generate", cfg));
        }
        if (fingerprint_cmd->parsed()) {
            return cmd_fingerprint(fp, RunManifest::start("fingerprint", cfg));
        }
        if (detect_cmd->parsed()) {
            return cmd_detect(det, RunManifest::start("detect", cfg));
        }
        if (reproduce->parsed()) {
            return cmd_reproduce(rep, RunManifest::start("reproduce", cfg));
        }
        if (denoise_cmd->parsed()) {
            return cmd_denoise(den, RunManifest::start("denoise", cfg));
        }
        if (snr_cmd->parsed()) {
            return cmd_snr(snr);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitUsage;
}
