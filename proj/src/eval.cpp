#include "emguard/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "emguard/detector.hpp"
#include "emguard/errors.hpp"
#include "emguard/noise.hpp"

namespace emguard {

namespace {

constexpr std::uint64_t kFoldStream = 21;
constexpr std::uint64_t kTrainNoiseStream = 22;
constexpr std::uint64_t kTestNoiseStream = 23;
constexpr double kSnrLadder[] = {10.0, 5.0, 0.0, -5.0, -10.0};

void check_scores(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("scores and labels differ in length");
    }
    const auto pos = std::count(labels.begin(), labels.end(), Label::Anomalous);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
        throw EvaluationError("AUC needs both benign and anomalous labels");
    }
    for (double s : scores) {
        if (std::isnan(s)) {
            throw NumericalError("NaN score");
        }
    }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    return order;
}

std::string format_snr(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

std::optional<int> mode_of(const std::vector<FoldResult>& folds, std::optional<int> FoldResult::*field) {
    std::map<int, int> counts;
    for (const auto& f : folds) {
        if (f.*field) {
            ++counts[*(f.*field)];
        }
    }
    if (counts.empty()) {
        return std::nullopt;
    }
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) {
            best = it;
        }
    }
    return best->first;
}

std::optional<CuttingPoint> as_cp(std::optional<int> v) {
    return v ? std::optional<CuttingPoint>(CuttingPoint(*v)) : std::nullopt;
}

} // namespace

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
    check_scores(scores, labels);
    const auto order = order_by_score(scores);
    // Midranks keep the rank sum a multiple of 1/2, so the result is exact.
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == Label::Anomalous) {
                rank_sum += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const auto pos = static_cast<double>(n_pos);
    const auto neg = static_cast<double>(labels.size() - n_pos);
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels) {
    check_scores(scores, labels);
    auto order = order_by_score(scores);
    std::reverse(order.begin(), order.end());
    const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), Label::Anomalous));
    const auto neg = static_cast<double>(labels.size()) - pos;
    std::vector<RocPoint> out{{0.0, 0.0}};
    double tp = 0.0;
    double fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == Label::Anomalous ? tp : fp) += 1.0;
            ++j;
        }
        out.push_back({fp / neg, tp / pos});
        i = j;
    }
    return out;
}

std::vector<std::vector<std::size_t>> partition_folds(std::size_t n, int folds, std::uint64_t seed) {
    if (folds < 2) {
        throw InvalidParameter("need at least 2 folds");
    }
    if (n < static_cast<std::size_t>(folds)) {
        throw DataError(std::to_string(n) + " traces cannot fill " + std::to_string(folds) + " folds");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
    const auto f = static_cast<std::size_t>(folds);
    std::size_t at = 0;
    for (std::size_t i = 0; i < f; ++i) {
        const std::size_t size = n / f + (i < n % f ? 1 : 0);
        out[i].assign(perm.begin() + static_cast<std::ptrdiff_t>(at),
                      perm.begin() + static_cast<std::ptrdiff_t>(at + size));
        std::sort(out[i].begin(), out[i].end());
        at += size;
    }
    return out;
}

const char* to_string(Injection injection) { return injection == Injection::Add ? "ADD" : "JMP"; }

Injection injection_from_string(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (t == "ADD") {
        return Injection::Add;
    }
    if (t == "JMP") {
        return Injection::Jmp;
    }
    throw InvalidParameter("unknown injection '" + text + "' (expected add or jmp)");
}

Instruction injected_instruction(Injection injection, const InstructionTable& table) {
    return injection == Injection::Add ? Instruction::add(table) : Instruction::jmp(table);
}

CpStrategy CpStrategy::fixed(int train, int test) {
    CpStrategy s = of(Kind::Fixed);
    s.fixed_train = train;
    s.fixed_test = test;
    return s;
}

CpStrategy CpStrategy::brute_force(std::vector<int> candidates) {
    CpStrategy s = of(Kind::BruteForce);
    s.candidates = std::move(candidates);
    return s;
}

std::string CpStrategy::describe() const {
    switch (kind) {
    case Kind::None:
        return "none";
    case Kind::Traditional:
        return "traditional";
    case Kind::Formula:
        return "formula";
    case Kind::Fixed:
        return "fixed(" + std::to_string(fixed_train) + "," + std::to_string(fixed_test) + ")";
    case Kind::BruteForce:
        return "brute_force";
    }
    return "unknown";
}

CpStrategy parse_cp_strategy(const std::string& text) {
    if (text == "none") {
        return CpStrategy::none();
    }
    if (text == "traditional" || text == "auto") {
        return CpStrategy::traditional();
    }
    if (text == "formula") {
        return CpStrategy::formula();
    }
    if (text == "brute_force" || text == "brute-force") {
        return CpStrategy::brute_force();
    }
    try {
        std::size_t used = 0;
        const int train = std::stoi(text, &used);
        if (used == text.size()) {
            return CpStrategy::fixed(train, train);
        }
        if (text[used] == ',') {
            std::size_t used2 = 0;
            const std::string rest = text.substr(used + 1);
            const int test = std::stoi(rest, &used2);
            if (used2 == rest.size()) {
                return CpStrategy::fixed(train, test);
            }
        }
    } catch (const std::logic_error&) {
    }
    throw InvalidParameter("unknown cutting-point strategy '" + text + "'");
}

CleanDataset make_clean_dataset(const DataConfig& config, Injection injection) {
    CleanDataset out;
    out.base = default_monitored_loop(config.program_length, config.table);
    out.injected = inject_instruction(out.base, default_injection_position(out.base),
                                      injected_instruction(injection, config.table));
    const std::size_t n_anom = config.n_anomalous == 0 ? config.n_benign : config.n_anomalous;
    TraceMatrix all =
        generate_dataset(out.base, out.injected, config.n_benign, n_anom, config.jitter, config.seed, config.alignment);
    std::vector<std::size_t> benign_rows(config.n_benign);
    std::iota(benign_rows.begin(), benign_rows.end(), std::size_t{0});
    std::vector<std::size_t> anom_rows(n_anom);
    std::iota(anom_rows.begin(), anom_rows.end(), config.n_benign);
    out.benign = all.select(benign_rows);
    out.anomalous = all.select(anom_rows);
    return out;
}

void ExperimentConfig::validate() const {
    if (folds < 2) {
        throw InvalidParameter("folds must be at least 2");
    }
    if (k < 1) {
        throw InvalidK("k must be at least 1");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw InvalidParameter("confidence must lie in (0, 1)");
    }
    if (!std::isfinite(train_snr_db) || !std::isfinite(test_snr_db)) {
        throw InvalidParameter("SNR values must be finite");
    }
    if (train_snr_db != test_snr_db && cp.kind != CpStrategy::Kind::Formula) {
        throw InvalidParameter("distinct training and deployment SNRs require the formula strategy");
    }
    if (cp.kind == CpStrategy::Kind::Fixed && (cp.fixed_train < 1 || cp.fixed_test < 1)) {
        throw InvalidParameter("fixed cutting points must be positive");
    }
}

CellResult run_cell(const ExperimentConfig& config, const CleanDataset& data) {
    config.validate();
    const std::size_t n = data.benign.rows();
    if (data.benign.count(Label::Anomalous) > 0) {
        throw ContaminatedBaseline("benign pool holds anomalous rows");
    }
    const auto folds = partition_folds(n, config.folds, derive_seed(config.seed, kFoldStream));
    std::size_t largest = 0;
    for (const auto& f : folds) {
        largest = std::max(largest, f.size());
    }
    const std::size_t pool = data.anomalous.rows();
    if (pool < largest) {
        throw DataError("need at least " + std::to_string(largest) + " anomalous traces, have " + std::to_string(pool));
    }
    if (data.benign.rows() > 0 && pool > 0 && data.benign.cols() != data.anomalous.cols()) {
        throw DimensionError("benign and anomalous traces differ in length");
    }

    CellResult cell;
    cell.config = config;
    cell.extrapolated = config.cp.kind == CpStrategy::Kind::Formula &&
                        (formula_is_extrapolated(config.train_snr_db) || formula_is_extrapolated(config.test_snr_db));

    std::size_t anom_offset = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        FoldResult fold;
        fold.test_benign = folds[f];
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) {
                fold.train_benign.insert(fold.train_benign.end(), folds[g].begin(), folds[g].end());
            }
        }
        std::sort(fold.train_benign.begin(), fold.train_benign.end());
        for (std::size_t j = 0; j < fold.test_benign.size(); ++j) {
            fold.test_anomalous.push_back((anom_offset + j) % pool);
        }
        anom_offset += fold.test_benign.size();

        const TraceMatrix train =
            add_awgn(data.benign.select(fold.train_benign), config.train_snr_db,
                     derive_seed(config.seed, kTrainNoiseStream, f));
        const TraceMatrix cohort =
            add_awgn(data.benign.select(fold.test_benign).stacked(data.anomalous.select(fold.test_anomalous)),
                     config.test_snr_db, derive_seed(config.seed, kTestNoiseStream, f));

        switch (config.cp.kind) {
        case CpStrategy::Kind::None:
            break;
        case CpStrategy::Kind::Traditional:
            fold.cp_train = traditional_cutting_point(singular_values(train.samples)).value();
            fold.cp_test = traditional_cutting_point(singular_values(cohort.samples)).value();
            break;
        case CpStrategy::Kind::Formula:
            fold.cp_train = formula_cutting_point(config.train_snr_db).value();
            fold.cp_test = formula_cutting_point(config.test_snr_db).value();
            break;
        case CpStrategy::Kind::Fixed:
            fold.cp_train = config.cp.fixed_train;
            fold.cp_test = config.cp.fixed_test;
            break;
        case CpStrategy::Kind::BruteForce: {
            std::vector<int> candidates = config.cp.candidates;
            if (candidates.empty()) {
                candidates.resize(30);
                std::iota(candidates.begin(), candidates.end(), 1);
            }
            const auto search = sweep_cutting_points(train.samples, cohort, config.k, candidates);
            fold.cp_train = search.best.value();
            fold.cp_test = search.best.value();
            break;
        }
        }

        const BaselineModel model = fingerprint(train, as_cp(fold.cp_train), config.k, config.train_snr_db);
        const Eigen::VectorXd scores = score_cohort(model, cohort, as_cp(fold.cp_test));
        fold.scores.assign(scores.data(), scores.data() + scores.size());
        fold.labels = cohort.labels;
        fold.auc = roc_auc(fold.scores, fold.labels);
        cell.fold_aucs.push_back(fold.auc);
        cell.folds.push_back(std::move(fold));
    }

    const auto count = static_cast<double>(cell.fold_aucs.size());
    cell.auc = std::accumulate(cell.fold_aucs.begin(), cell.fold_aucs.end(), 0.0) / count;
    double var = 0.0;
    for (double a : cell.fold_aucs) {
        var += (a - cell.auc) * (a - cell.auc);
    }
    cell.auc_std = std::sqrt(var / count);
    cell.cp_train = mode_of(cell.folds, &FoldResult::cp_train);
    cell.cp_test = mode_of(cell.folds, &FoldResult::cp_test);
    return cell;
}

TablePreset parse_table_preset(const std::string& text) {
    std::string t = text;
    if (t.rfind("table", 0) == 0) {
        t = t.substr(5);
    }
    if (t == "1") return TablePreset::Table1;
    if (t == "2") return TablePreset::Table2;
    if (t == "3") return TablePreset::Table3;
    if (t == "4") return TablePreset::Table4;
    throw InvalidParameter("unknown table '" + text + "' (expected 1, 2, 3 or 4)");
}

std::string to_string(TablePreset preset) { return "table" + std::to_string(static_cast<int>(preset)); }

std::vector<PresetCell> preset_cells(TablePreset preset, std::uint64_t seed, int folds) {
    // Published AUCs in SNR ladder order (10, 5, 0, -5, -10), ADD then JMP.
    static constexpr double kNoDenoise[2][5] = {{0.9923, 0.9874, 0.6193, 0.3172, 0.2190},
                                                {0.9940, 0.9910, 0.3936, 0.1530, 0.0997}};
    static constexpr double kKnee[2][5] = {{0.0449, 0.0506, 0.0549, 0.0491, 0.0538},
                                           {0.0446, 0.0498, 0.0549, 0.0487, 0.0560}};
    static constexpr double kFormula[2][5] = {{0.9954, 0.9946, 0.9884, 0.9745, 0.9220},
                                              {0.9984, 0.9951, 0.9900, 0.9747, 0.9307}};
    static constexpr int kFormulaK[5] = {3, 3, 3, 5, 5};
    // Cross-noise grid: [injection][train][test], upper triangle only.
    static constexpr double kCrossAuc[2][5][5] = {
        {{0.9954, 0.9891, 0.9792, 0.9571, 0.8625},
         {0, 0.9946, 0.9802, 0.9667, 0.8688},
         {0, 0, 0.9884, 0.9689, 0.8717},
         {0, 0, 0, 0.9745, 0.8728},
         {0, 0, 0, 0, 0.9220}},
        {{0.9984, 0.9897, 0.9812, 0.9620, 0.8837},
         {0, 0.9951, 0.9833, 0.9694, 0.8872},
         {0, 0, 0.9900, 0.9699, 0.8890},
         {0, 0, 0, 0.9747, 0.8894},
         {0, 0, 0, 0, 0.9307}}};
    static constexpr int kCrossK[2][5][5] = {{{3, 3, 3, 3, 25},
                                              {0, 3, 3, 5, 25},
                                              {0, 0, 5, 5, 25},
                                              {0, 0, 0, 5, 51},
                                              {0, 0, 0, 0, 5}},
                                             {{3, 3, 3, 3, 25},
                                              {0, 3, 3, 5, 25},
                                              {0, 0, 3, 5, 25},
                                              {0, 0, 0, 5, 51},
                                              {0, 0, 0, 0, 5}}};

    std::vector<PresetCell> out;
    for (int inj = 0; inj < 2; ++inj) {
        for (int tr = 0; tr < 5; ++tr) {
            const int test_from = tr;
            const int test_to = preset == TablePreset::Table4 ? 5 : tr + 1;
            for (int te = test_from; te < test_to; ++te) {
                PresetCell cell;
                auto& c = cell.config;
                c.injection = inj == 0 ? Injection::Add : Injection::Jmp;
                c.train_snr_db = kSnrLadder[tr];
                c.test_snr_db = kSnrLadder[te];
                c.folds = folds;
                c.seed = seed;
                switch (preset) {
                case TablePreset::Table1:
                    c.cp = CpStrategy::none();
                    c.k = 3;
                    cell.published_auc = kNoDenoise[inj][tr];
                    break;
                case TablePreset::Table2:
                    c.cp = CpStrategy::fixed(1, 1);
                    c.k = 3;
                    cell.published_auc = kKnee[inj][tr];
                    break;
                case TablePreset::Table3:
                    c.cp = CpStrategy::formula();
                    c.k = kFormulaK[tr];
                    cell.published_auc = kFormula[inj][tr];
                    break;
                case TablePreset::Table4:
                    c.cp = CpStrategy::formula();
                    c.k = kCrossK[inj][tr][te];
                    cell.published_auc = kCrossAuc[inj][tr][te];
                    break;
                }
                out.push_back(cell);
            }
        }
    }
    return out;
}

ExperimentReport run_table(TablePreset preset, const DataConfig& data, std::uint64_t seed, int folds,
                           const CellCallback& on_cell) {
    ExperimentReport report;
    report.preset = to_string(preset);
    report.seed = seed;
    std::optional<CleanDataset> datasets[2];
    for (const auto& pc : preset_cells(preset, seed, folds)) {
        auto& slot = datasets[pc.config.injection == Injection::Add ? 0 : 1];
        if (!slot) {
            slot = make_clean_dataset(data, pc.config.injection);
        }
        CellResult cell = run_cell(pc.config, *slot);
        cell.published_auc = pc.published_auc;
        if (on_cell) {
            on_cell(cell);
        }
        report.cells.push_back(std::move(cell));
    }
    return report;
}

ExperimentReport plan_table(TablePreset preset, std::uint64_t seed, int folds) {
    ExperimentReport report;
    report.preset = to_string(preset);
    report.seed = seed;
    for (const auto& pc : preset_cells(preset, seed, folds)) {
        CellResult cell;
        cell.config = pc.config;
        cell.config.validate();
        cell.auc = std::numeric_limits<double>::quiet_NaN();
        cell.auc_std = std::numeric_limits<double>::quiet_NaN();
        cell.published_auc = pc.published_auc;
        const auto& cp = pc.config.cp;
        if (cp.kind == CpStrategy::Kind::Formula) {
            cell.cp_train = formula_cutting_point(pc.config.train_snr_db).value();
            cell.cp_test = formula_cutting_point(pc.config.test_snr_db).value();
            cell.extrapolated =
                formula_is_extrapolated(pc.config.train_snr_db) || formula_is_extrapolated(pc.config.test_snr_db);
        } else if (cp.kind == CpStrategy::Kind::Fixed) {
            cell.cp_train = cp.fixed_train;
            cell.cp_test = cp.fixed_test;
        }
        report.cells.push_back(std::move(cell));
    }
    return report;
}

nlohmann::json cell_to_json(const CellResult& cell) {
    const auto& c = cell.config;
    nlohmann::json j{{"injection", to_string(c.injection)},
                     {"train_snr_db", c.train_snr_db},
                     {"test_snr_db", c.test_snr_db},
                     {"cp_strategy", c.cp.describe()},
                     {"cp_train", cell.cp_train ? nlohmann::json(*cell.cp_train) : nlohmann::json(nullptr)},
                     {"cp_test", cell.cp_test ? nlohmann::json(*cell.cp_test) : nlohmann::json(nullptr)},
                     {"k", c.k},
                     {"folds", c.folds},
                     {"auc", std::isnan(cell.auc) ? nlohmann::json(nullptr) : nlohmann::json(cell.auc)},
                     {"auc_std", std::isnan(cell.auc_std) ? nlohmann::json(nullptr) : nlohmann::json(cell.auc_std)},
                     {"fold_aucs", cell.fold_aucs},
                     {"extrapolated", cell.extrapolated},
                     {"published_auc",
                      cell.published_auc ? nlohmann::json(*cell.published_auc) : nlohmann::json(nullptr)}};
    if (c.cp.kind == CpStrategy::Kind::BruteForce || c.cp.kind == CpStrategy::Kind::Traditional) {
        auto per_fold = nlohmann::json::array();
        for (const auto& f : cell.folds) {
            per_fold.push_back({f.cp_train.value_or(0), f.cp_test.value_or(0)});
        }
        j["fold_cutting_points"] = per_fold;
    }
    return j;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
    nlohmann::json j{{"preset", report.preset}, {"seed", report.seed}, {"manifest", report.manifest}};
    auto cells = nlohmann::json::array();
    for (const auto& cell : report.cells) {
        auto cj = cell_to_json(cell);
        cj["preset"] = report.preset;
        cells.push_back(std::move(cj));
    }
    j["cells"] = std::move(cells);
    return j;
}

std::string report_to_csv(const ExperimentReport& report) {
    std::ostringstream os;
    os.precision(10);
    os << "preset,injection,train_snr_db,test_snr_db,cp_strategy,cp_train,cp_test,k,auc,auc_std,published_auc,"
          "extrapolated,fold_aucs\n";
    for (const auto& cell : report.cells) {
        const auto& c = cell.config;
        os << report.preset << ',' << to_string(c.injection) << ',' << format_snr(c.train_snr_db) << ','
           << format_snr(c.test_snr_db) << ',' << c.cp.describe() << ',';
        if (cell.cp_train) {
            os << *cell.cp_train;
        }
        os << ',';
        if (cell.cp_test) {
            os << *cell.cp_test;
        }
        os << ',' << c.k << ',';
        if (!std::isnan(cell.auc)) {
            os << cell.auc << ',' << cell.auc_std;
        } else {
            os << ',';
        }
        os << ',';
        if (cell.published_auc) {
            os << *cell.published_auc;
        }
        os << ',' << (cell.extrapolated ? "true" : "false") << ',';
        for (std::size_t i = 0; i < cell.fold_aucs.size(); ++i) {
            os << (i ? ";" : "") << cell.fold_aucs[i];
        }
        os << '\n';
    }
    return os.str();
}

std::string roc_to_csv(const CellResult& cell) {
    std::ostringstream os;
    os.precision(10);
    os << "fold,fpr,tpr\n";
    for (std::size_t f = 0; f < cell.folds.size(); ++f) {
        for (const auto& p : roc_curve(cell.folds[f].scores, cell.folds[f].labels)) {
            os << f << ',' << p.fpr << ',' << p.tpr << '\n';
        }
    }
    return os.str();
}

} // namespace emguard
