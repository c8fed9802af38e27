#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "emguard/detector.hpp"
#include "emguard/errors.hpp"
#include "emguard/eval.hpp"
#include "emguard/noise.hpp"
#include "oracles.hpp"

using namespace emguard;

namespace {

std::vector<Label> labels_of(const std::vector<int>& v) {
    std::vector<Label> out;
    for (int x : v) {
        out.push_back(x ? Label::Anomalous : Label::Benign);
    }
    return out;
}

DataConfig small_data(std::size_t benign, std::size_t anomalous) {
    DataConfig d;
    d.n_benign = benign;
    d.n_anomalous = anomalous;
    return d;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("AUC examples") {
    const std::vector<double> sep{1, 2, 3, 4};
    CHECK(roc_auc(sep, labels_of({0, 0, 1, 1})) == 1.0);
    CHECK(roc_auc(sep, labels_of({1, 1, 0, 0})) == 0.0);
    const std::vector<double> same(6, 0.3);
    CHECK(roc_auc(same, labels_of({0, 1, 0, 1, 1, 0})) == 0.5);
    // Anomalous 2 and 4 against benign 1 and 3: three wins, one loss.
    CHECK(roc_auc(sep, labels_of({0, 1, 0, 1})) == 0.75);
    // Interleaved the other way every anomalous score is the larger one.
    const std::vector<double> swap{1, 3, 2, 4};
    CHECK(roc_auc(swap, labels_of({0, 1, 0, 1})) == 1.0);
}

TEST_CASE("AUC errors") {
    const std::vector<double> s{1, 2, 3};
    CHECK_THROWS_AS(roc_auc(s, labels_of({0, 0, 0})), EvaluationError);
    CHECK_THROWS_AS(roc_auc(s, labels_of({1, 1, 1})), EvaluationError);
    CHECK_THROWS_AS(roc_auc(s, labels_of({0, 1})), DimensionError);
    const std::vector<double> nan{1, NAN};
    CHECK_THROWS_AS(roc_auc(nan, labels_of({0, 1})), NumericalError);
}

TEST_CASE("AUC equals the pairwise count, ties included") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = std::uniform_int_distribution<int>(2, 500)(rng);
        const int levels = std::uniform_int_distribution<int>(2, 40)(rng);
        std::vector<double> s(static_cast<std::size_t>(n));
        std::vector<int> pos(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            s[static_cast<std::size_t>(i)] = std::uniform_int_distribution<int>(0, levels)(rng) * 0.1;
            pos[static_cast<std::size_t>(i)] = std::bernoulli_distribution(0.4)(rng) ? 1 : 0;
        }
        pos[0] = 1;
        pos[1] = 0;
        CHECK(roc_auc(s, labels_of(pos)) == oracle::pairwise_auc(s, pos));
    }
}

TEST_CASE("ROC curve spans the unit square and its area is the AUC") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> s(80);
        std::vector<int> pos(80);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = std::uniform_int_distribution<int>(0, 20)(rng);
            pos[i] = i % 3 == 0 ? 1 : 0;
        }
        const auto labels = labels_of(pos);
        const auto curve = roc_curve(s, labels);
        CHECK(curve.front().fpr == 0.0);
        CHECK(curve.front().tpr == 0.0);
        CHECK(curve.back().fpr == 1.0);
        CHECK(curve.back().tpr == 1.0);
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].fpr >= curve[i - 1].fpr);
            CHECK(curve[i].tpr >= curve[i - 1].tpr);
        }
        CHECK(oracle::trapezoid_area(curve) == doctest::Approx(roc_auc(s, labels)).epsilon(1e-12));
    }
}

TEST_CASE("fold partition") {
    for (const auto [n, k] : {std::pair<std::size_t, int>{100, 10}, {101, 10}, {7, 2}, {5400, 10}}) {
        const auto folds = partition_folds(n, k, 9);
        REQUIRE(folds.size() == static_cast<std::size_t>(k));
        std::set<std::size_t> seen;
        std::size_t lo = n;
        std::size_t hi = 0;
        for (const auto& f : folds) {
            CHECK(std::is_sorted(f.begin(), f.end()));
            lo = std::min(lo, f.size());
            hi = std::max(hi, f.size());
            for (auto i : f) {
                CHECK(seen.insert(i).second);
            }
        }
        CHECK(seen.size() == n);
        CHECK(*seen.rbegin() == n - 1);
        CHECK(hi - lo <= 1);
    }
    CHECK(partition_folds(50, 5, 1) == partition_folds(50, 5, 1));
    CHECK(partition_folds(50, 5, 1) != partition_folds(50, 5, 2));
    CHECK_THROWS_AS(partition_folds(10, 1, 1), InvalidParameter);
    CHECK_THROWS_AS(partition_folds(3, 5, 1), DataError);
}

TEST_CASE("cutting point strategies parse and describe themselves") {
    CHECK(parse_cp_strategy("none").kind == CpStrategy::Kind::None);
    CHECK(parse_cp_strategy("auto").kind == CpStrategy::Kind::Traditional);
    CHECK(parse_cp_strategy("formula").kind == CpStrategy::Kind::Formula);
    CHECK(parse_cp_strategy("brute_force").kind == CpStrategy::Kind::BruteForce);
    const auto fixed = parse_cp_strategy("25,4");
    CHECK(fixed.describe() == "fixed(25,4)");
    CHECK(parse_cp_strategy("1").describe() == "fixed(1,1)");
    CHECK_THROWS_AS(parse_cp_strategy("banana"), InvalidParameter);
    CHECK_THROWS_AS(parse_cp_strategy("3x"), InvalidParameter);
}

TEST_CASE("experiment configs are validated") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    c.folds = 1;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c = {};
    c.train_snr_db = 10.0;
    c.test_snr_db = -10.0;
    c.cp = CpStrategy::none();
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
    c.cp = CpStrategy::formula();
    CHECK_NOTHROW(c.validate());
    c.confidence = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidParameter);
}

TEST_CASE("run_cell is deterministic and reports the mean of its folds") {
    const CleanDataset data = make_clean_dataset(small_data(200, 60), Injection::Add);
    ExperimentConfig c;
    c.test_snr_db = c.train_snr_db = 0.0;
    c.cp = CpStrategy::formula();
    c.seed = 5;
    const CellResult a = run_cell(c, data);
    const CellResult b = run_cell(c, data);
    CHECK(a.fold_aucs == b.fold_aucs);
    CHECK(a.fold_aucs.size() == 10);
    double mean = 0.0;
    for (double x : a.fold_aucs) {
        mean += x / 10.0;
    }
    CHECK(a.auc == doctest::Approx(mean).epsilon(1e-12));
    CHECK(a.cp_train == 10);
    CHECK(a.cp_test == 10);
    CHECK_FALSE(a.extrapolated);
    c.seed = 6;
    CHECK(run_cell(c, data).fold_aucs != a.fold_aucs);
}

TEST_CASE("folds never train on their own test rows") {
    const CleanDataset data = make_clean_dataset(small_data(150, 40), Injection::Jmp);
    ExperimentConfig c;
    c.injection = Injection::Jmp;
    c.train_snr_db = 5.0;
    c.test_snr_db = -5.0;
    c.cp = CpStrategy::formula();
    c.k = 5;
    c.folds = 5;
    c.seed = 12;
    const CellResult cell = run_cell(c, data);
    std::set<std::size_t> all_test;
    for (std::size_t f = 0; f < cell.folds.size(); ++f) {
        const auto& fold = cell.folds[f];
        std::set<std::size_t> train(fold.train_benign.begin(), fold.train_benign.end());
        for (auto i : fold.test_benign) {
            CHECK(train.count(i) == 0);
            all_test.insert(i);
        }
        CHECK(train.size() + fold.test_benign.size() == 150);
        CHECK(fold.test_anomalous.size() == fold.test_benign.size());

        // Rebuild the fold from the rows it lists; the noise streams are the
        // ones run_cell documents for training (22) and deployment (23).
        const TraceMatrix train_rows = add_awgn(data.benign.select(fold.train_benign), c.train_snr_db,
                                                derive_seed(c.seed, 22, f));
        const TraceMatrix cohort =
            add_awgn(data.benign.select(fold.test_benign).stacked(data.anomalous.select(fold.test_anomalous)),
                     c.test_snr_db, derive_seed(c.seed, 23, f));
        const BaselineModel model = fingerprint(train_rows, CuttingPoint(15), c.k);
        const Eigen::VectorXd scores = score_cohort(model, cohort, CuttingPoint(6));
        CHECK(std::vector<double>(scores.data(), scores.data() + scores.size()) == fold.scores);
        CHECK(fold.labels == cohort.labels);
    }
    CHECK(all_test.size() == 150);
}

TEST_CASE("anomalous pool is cycled and must cover a fold") {
    const CleanDataset data = make_clean_dataset(small_data(100, 12), Injection::Add);
    ExperimentConfig c;
    c.cp = CpStrategy::none();
    const CellResult cell = run_cell(c, data);
    std::vector<std::size_t> used;
    for (const auto& f : cell.folds) {
        used.insert(used.end(), f.test_anomalous.begin(), f.test_anomalous.end());
    }
    for (std::size_t j = 0; j < used.size(); ++j) {
        CHECK(used[j] == j % 12);
    }
    const CleanDataset thin = make_clean_dataset(small_data(100, 9), Injection::Add);
    CHECK_THROWS_AS(run_cell(c, thin), DataError);
}

TEST_CASE("every strategy runs on a small cell") {
    const CleanDataset data = make_clean_dataset(small_data(120, 40), Injection::Add);
    for (const auto& cp : {CpStrategy::none(), CpStrategy::traditional(), CpStrategy::formula(),
                           CpStrategy::fixed(2, 3), CpStrategy::brute_force({2, 4, 8})}) {
        ExperimentConfig c;
        c.cp = cp;
        c.folds = 3;
        c.train_snr_db = c.test_snr_db = 5.0;
        const CellResult cell = run_cell(c, data);
        CHECK(cell.fold_aucs.size() == 3);
        CHECK(cell.auc >= 0.0);
        CHECK(cell.auc <= 1.0);
        CHECK(cell.cp_train.has_value() == (cp.kind != CpStrategy::Kind::None));
        if (cp.kind == CpStrategy::Kind::Fixed) {
            CHECK(cell.cp_train == 2);
            CHECK(cell.cp_test == 3);
        }
        if (cp.kind == CpStrategy::Kind::BruteForce) {
            CHECK((cell.cp_train == 2 || cell.cp_train == 4 || cell.cp_train == 8));
        }
    }
}

TEST_CASE("presets have the published shape and hyperparameters") {
    CHECK(preset_cells(TablePreset::Table1, 1).size() == 10);
    CHECK(preset_cells(TablePreset::Table2, 1).size() == 10);
    CHECK(preset_cells(TablePreset::Table3, 1).size() == 10);
    CHECK(preset_cells(TablePreset::Table4, 1).size() == 30);

    for (const auto& pc : preset_cells(TablePreset::Table1, 1)) {
        CHECK(pc.config.cp.kind == CpStrategy::Kind::None);
        CHECK(pc.config.k == 3);
        CHECK(pc.config.train_snr_db == pc.config.test_snr_db);
    }
    for (const auto& pc : preset_cells(TablePreset::Table2, 1)) {
        CHECK(pc.config.cp.describe() == "fixed(1,1)");
        CHECK(pc.config.k == 3);
    }
    const auto t3 = plan_table(TablePreset::Table3, 1);
    const std::vector<int> expected_cp{25, 15, 10, 6, 4};
    const std::vector<int> expected_k{3, 3, 3, 5, 5};
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(t3.cells[i].cp_train == expected_cp[i % 5]);
        CHECK(t3.cells[i].config.k == expected_k[i % 5]);
        CHECK(std::isnan(t3.cells[i].auc));
    }

    const auto t4 = plan_table(TablePreset::Table4, 1);
    bool found = false;
    for (const auto& cell : t4.cells) {
        CHECK(cell.config.test_snr_db <= cell.config.train_snr_db);
        if (cell.config.train_snr_db == 10.0 && cell.config.test_snr_db == -10.0) {
            CHECK(cell.cp_train == 25);
            CHECK(cell.cp_test == 4);
            CHECK(cell.config.k == 25);
            found = true;
        }
        if (cell.config.train_snr_db == -5.0 && cell.config.test_snr_db == -10.0) {
            CHECK(cell.config.k == 51);
        }
    }
    CHECK(found);
    CHECK(parse_table_preset("table4") == TablePreset::Table4);
    CHECK(parse_table_preset("2") == TablePreset::Table2);
    CHECK_THROWS_AS(parse_table_preset("5"), InvalidParameter);
}

TEST_CASE("reports serialise one record per cell") {
    ExperimentReport report = plan_table(TablePreset::Table3, 4);
    report.cells.resize(2);
    report.cells[0].auc = 0.75;
    report.cells[0].auc_std = 0.01;
    report.cells[0].fold_aucs = {0.7, 0.8};
    const auto j = report_to_json(report);
    REQUIRE(j["cells"].size() == 2);
    CHECK(j["cells"][0]["auc"] == 0.75);
    CHECK(j["cells"][0]["cp_train"] == 25);
    CHECK(j["cells"][0]["k"] == 3);
    CHECK(j["cells"][1]["auc"].is_null());
    CHECK(j["seed"] == 4);

    const std::string csv = report_to_csv(report);
    std::istringstream in(csv);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
    }
    CHECK(lines == 3);
    CHECK(csv.rfind("preset,injection,train_snr_db,test_snr_db", 0) == 0);
}

TEST_CASE("ROC export has a row per curve point") {
    const CleanDataset data = make_clean_dataset(small_data(60, 20), Injection::Add);
    ExperimentConfig c;
    c.cp = CpStrategy::none();
    c.folds = 3;
    const CellResult cell = run_cell(c, data);
    const std::string csv = roc_to_csv(cell);
    std::size_t expected = 1;
    for (const auto& f : cell.folds) {
        expected += roc_curve(f.scores, f.labels).size();
    }
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == expected);
}

}
