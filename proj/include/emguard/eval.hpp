#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "emguard/denoise.hpp"
#include "emguard/signal_model.hpp"

namespace emguard {

/// Mann-Whitney AUC: probability that a random anomalous score exceeds a
/// random benign score, ties counting one half.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// ROC curve with anomalous as the positive class, from (0,0) to (1,1).
/// Tied scores form a single step.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels);

/// Shuffled partition of 0..n-1 into `folds` disjoint groups whose sizes
/// differ by at most one. Each group is sorted.
std::vector<std::vector<std::size_t>> partition_folds(std::size_t n, int folds, std::uint64_t seed);

enum class Injection { Add, Jmp };

const char* to_string(Injection injection);
Injection injection_from_string(const std::string& text);
Instruction injected_instruction(Injection injection, const InstructionTable& table = {});

/// How the training and deployment cutting points of a cell are chosen.
struct CpStrategy {
    enum class Kind { None, Traditional, Formula, Fixed, BruteForce };

    Kind kind = Kind::Formula;
    int fixed_train = 1;
    int fixed_test = 1;
    /// Brute-force sweep range; empty means 1..30.
    std::vector<int> candidates;

    static CpStrategy none() { return of(Kind::None); }
    static CpStrategy traditional() { return of(Kind::Traditional); }
    static CpStrategy formula() { return of(Kind::Formula); }
    static CpStrategy fixed(int train, int test);
    static CpStrategy brute_force(std::vector<int> candidates = {});
    static CpStrategy of(Kind kind) {
        CpStrategy s;
        s.kind = kind;
        return s;
    }

    /// "none", "traditional", "formula", "fixed(a,b)" or "brute_force".
    std::string describe() const;
};

/// Accepts "none", "traditional", "formula", "brute_force", an integer, or
/// "a,b" for distinct fixed training and deployment cutting points.
CpStrategy parse_cp_strategy(const std::string& text);

/// Synthetic data source for the experiments.
struct DataConfig {
    std::size_t program_length = 32;
    InstructionTable table;
    JitterConfig jitter;
    std::size_t n_benign = 5400;
    /// Anomalous pool size; 0 means n_benign.
    std::size_t n_anomalous = 0;
    Alignment alignment = Alignment::CaptureWindow;
    std::uint64_t seed = 20190101;
};

/// Noise-free benign traces and anomalous pool for one injection type.
struct CleanDataset {
    Program base;
    Program injected;
    TraceMatrix benign;
    TraceMatrix anomalous;
};

CleanDataset make_clean_dataset(const DataConfig& config, Injection injection);

struct ExperimentConfig {
    Injection injection = Injection::Add;
    double train_snr_db = 10.0;
    double test_snr_db = 10.0;
    CpStrategy cp;
    int k = 3;
    int folds = 10;
    double confidence = 0.95;
    std::uint64_t seed = 1;

    void validate() const;
};

struct FoldResult {
    double auc = 0.0;
    std::optional<int> cp_train;
    std::optional<int> cp_test;
    /// Row indices into the clean dataset, for leakage checks.
    std::vector<std::size_t> train_benign;
    std::vector<std::size_t> test_benign;
    std::vector<std::size_t> test_anomalous;
    std::vector<double> scores;
    std::vector<Label> labels;
};

struct CellResult {
    ExperimentConfig config;
    double auc = 0.0;
    double auc_std = 0.0;
    std::vector<double> fold_aucs;
    /// Cutting points of the cell; for brute force, the most frequent choice.
    std::optional<int> cp_train;
    std::optional<int> cp_test;
    bool extrapolated = false;
    std::optional<double> published_auc;
    std::vector<FoldResult> folds;
};

/// k-fold run of one configuration: fingerprint on the training benign rows
/// at train SNR, then score a cohort of held-out benign rows plus an equal
/// number of anomalous rows at test SNR.
CellResult run_cell(const ExperimentConfig& config, const CleanDataset& data);

enum class TablePreset { Table1 = 1, Table2 = 2, Table3 = 3, Table4 = 4 };

/// "1".."4" or "table1".."table4".
TablePreset parse_table_preset(const std::string& text);
std::string to_string(TablePreset preset);

struct PresetCell {
    ExperimentConfig config;
    double published_auc = 0.0;
};

/// The cells of a published table with their hyperparameters.
std::vector<PresetCell> preset_cells(TablePreset preset, std::uint64_t seed, int folds = 10);

struct ExperimentReport {
    std::string preset;
    std::uint64_t seed = 0;
    std::vector<CellResult> cells;
    nlohmann::json manifest = nlohmann::json::object();
};

using CellCallback = std::function<void(const CellResult&)>;

ExperimentReport run_table(TablePreset preset, const DataConfig& data, std::uint64_t seed, int folds = 10,
                           const CellCallback& on_cell = {});

/// Cells of a preset with hyperparameters resolved but nothing computed;
/// AUC fields are NaN.
ExperimentReport plan_table(TablePreset preset, std::uint64_t seed, int folds = 10);

nlohmann::json cell_to_json(const CellResult& cell);
nlohmann::json report_to_json(const ExperimentReport& report);
std::string report_to_csv(const ExperimentReport& report);
/// fold,fpr,tpr rows for every fold of the cell.
std::string roc_to_csv(const CellResult& cell);

} // namespace emguard
