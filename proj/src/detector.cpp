#include "emguard/detector.hpp"

#include <algorithm>
#include <cmath>

#include "byte_io.hpp"
#include "emguard/errors.hpp"

namespace emguard {

namespace {

constexpr char kModelMagic[4] = {'E', 'M', 'M', 'D'};
constexpr std::uint8_t kModelVersion = 1;

void check_confidence(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw InvalidParameter("confidence must lie in (0, 1)");
    }
}

Matrix prepare_cohort(const BaselineModel& model, const TraceMatrix& cohort, std::optional<CuttingPoint> test_cp) {
    if (cohort.rows() < 2) {
        throw InvalidInput("a deployment cohort needs at least 2 observations, got " + std::to_string(cohort.rows()));
    }
    if (static_cast<Eigen::Index>(cohort.cols()) != model.dimension()) {
        throw DimensionError("cohort has " + std::to_string(cohort.cols()) + " samples per trace, model expects " +
                             std::to_string(model.dimension()));
    }
    if (!test_cp) {
        return cohort.samples;
    }
    return denoise_factored(cohort.samples, *test_cp).expand();
}

} // namespace

TraceMatrix BaselineModel::baseline() const { return TraceMatrix(index->points()); }

void BaselineModel::set_strangeness(Eigen::VectorXd values) {
    strangeness = std::move(values);
    sorted_.assign(strangeness.data(), strangeness.data() + strangeness.size());
    std::sort(sorted_.begin(), sorted_.end());
}

BaselineModel fingerprint(const TraceMatrix& benign, std::optional<CuttingPoint> cp, int k,
                          std::optional<double> train_snr_db) {
    if (k < 1) {
        throw InvalidK("k must be at least 1, got " + std::to_string(k));
    }
    const auto needed = static_cast<std::size_t>(std::max(k + 2, 2));
    if (benign.rows() < needed) {
        throw InsufficientBaseline("fingerprinting with k = " + std::to_string(k) + " needs at least " +
                                   std::to_string(needed) + " traces, got " + std::to_string(benign.rows()));
    }
    if (const auto bad = benign.count(Label::Anomalous); bad > 0) {
        throw ContaminatedBaseline(std::to_string(bad) + " training traces are labeled anomalous");
    }
    BaselineModel model;
    model.k = k;
    model.train_cp = cp;
    model.train_snr_db = train_snr_db;
    if (cp) {
        auto batch = denoise_factored(benign.samples, *cp);
        model.index = std::make_shared<NeighborIndex>(std::move(batch.coords), std::move(batch.basis), k);
    } else {
        model.index = std::make_shared<NeighborIndex>(benign.samples, k);
    }
    model.set_strangeness(model.index->baseline_scores());
    return model;
}

double transductive_p_value(std::span<const double> sorted_strangeness, double s) {
    const auto first_ge = std::lower_bound(sorted_strangeness.begin(), sorted_strangeness.end(), s);
    const auto n = static_cast<double>(std::distance(first_ge, sorted_strangeness.end()));
    return (n + 1.0) / (static_cast<double>(sorted_strangeness.size()) + 1.0);
}

Status classify(double p_value, double confidence) {
    check_confidence(confidence);
    return p_value <= 1.0 - confidence ? Status::Anomalous : Status::Normal;
}

Eigen::VectorXd score_cohort(const BaselineModel& model, const TraceMatrix& cohort,
                             std::optional<CuttingPoint> test_cp) {
    return model.index->score_rows(prepare_cohort(model, cohort, test_cp));
}

Eigen::VectorXd score_in_baseline_subspace(const BaselineModel& model, const TraceMatrix& cohort) {
    Matrix rows = prepare_cohort(model, cohort, std::nullopt);
    const Matrix& basis = model.index->basis();
    if (basis.size() > 0) {
        rows = rows * basis.transpose() * basis;
    }
    return model.index->score_rows(rows);
}

std::vector<Detection> detect_in_baseline_subspace(const BaselineModel& model, const TraceMatrix& cohort,
                                                   double confidence) {
    check_confidence(confidence);
    const Eigen::VectorXd scores = score_in_baseline_subspace(model, cohort);
    std::vector<Detection> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        auto& d = out[static_cast<std::size_t>(i)];
        d.strangeness = scores(i);
        d.p_value = transductive_p_value(model.sorted_strangeness(), scores(i));
        d.status = classify(d.p_value, confidence);
        d.confidence = confidence;
    }
    return out;
}

std::vector<Detection> transduce_cohort(const BaselineModel& model, const TraceMatrix& cohort,
                                        std::optional<CuttingPoint> test_cp) {
    const Eigen::VectorXd scores = score_cohort(model, cohort, test_cp);
    std::vector<Detection> out(static_cast<std::size_t>(scores.size()));
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        auto& d = out[static_cast<std::size_t>(i)];
        d.strangeness = scores(i);
        d.p_value = transductive_p_value(model.sorted_strangeness(), scores(i));
    }
    return out;
}

Detection transduce(const BaselineModel& model, const Trace& q, std::optional<CuttingPoint> test_cp,
                    const TraceMatrix& cohort) {
    for (std::size_t i = 0; i < cohort.rows(); ++i) {
        const auto row = cohort.row_span(i);
        if (row.size() == q.samples.size() && std::equal(row.begin(), row.end(), q.samples.begin())) {
            return transduce_cohort(model, cohort, test_cp)[i];
        }
    }
    throw InvalidInput("query trace is not a row of its cohort");
}

Detection detect(const BaselineModel& model, const Trace& q, std::optional<CuttingPoint> test_cp,
                 const TraceMatrix& cohort, double confidence) {
    check_confidence(confidence);
    auto d = transduce(model, q, test_cp, cohort);
    d.status = classify(d.p_value, confidence);
    d.confidence = confidence;
    return d;
}

std::vector<Detection> detect_cohort(const BaselineModel& model, const TraceMatrix& cohort,
                                     std::optional<CuttingPoint> test_cp, double confidence) {
    check_confidence(confidence);
    auto out = transduce_cohort(model, cohort, test_cp);
    for (auto& d : out) {
        d.status = classify(d.p_value, confidence);
        d.confidence = confidence;
    }
    return out;
}

void save_model(const BaselineModel& model, const std::filesystem::path& path, const nlohmann::json& manifest) {
    using detail::put_f64;
    using detail::put_u32;
    const auto& coords = model.index->coords();
    const auto& basis = model.index->basis();
    std::string out(kModelMagic, sizeof kModelMagic);
    out.push_back(static_cast<char>(kModelVersion));
    put_u32(out, static_cast<std::uint32_t>(model.k));
    put_u32(out, model.train_cp ? static_cast<std::uint32_t>(model.train_cp->value()) : 0U);
    out.push_back(model.train_snr_db ? 1 : 0);
    put_f64(out, model.train_snr_db.value_or(0.0));
    put_u32(out, static_cast<std::uint32_t>(coords.rows()));
    put_u32(out, static_cast<std::uint32_t>(coords.cols()));
    put_u32(out, static_cast<std::uint32_t>(basis.rows()));
    put_u32(out, static_cast<std::uint32_t>(basis.cols()));
    for (Eigen::Index i = 0; i < coords.size(); ++i) {
        put_f64(out, coords.data()[i]);
    }
    for (Eigen::Index i = 0; i < basis.size(); ++i) {
        put_f64(out, basis.data()[i]);
    }
    for (Eigen::Index i = 0; i < model.strangeness.size(); ++i) {
        put_f64(out, model.strangeness(i));
    }
    const std::string text = manifest.dump();
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    detail::write_file(path, out);
}

BaselineModel load_model(const std::filesystem::path& path, nlohmann::json* manifest) {
    const std::string data = detail::read_file(path);
    detail::ByteReader in(data, path.string());
    if (in.bytes(4) != std::string(kModelMagic, sizeof kModelMagic)) {
        throw FormatError(path.string() + ": not a model file");
    }
    if (in.u8() != kModelVersion) {
        throw FormatError(path.string() + ": unsupported model version");
    }
    BaselineModel model;
    model.k = static_cast<int>(in.u32());
    if (const auto cp = in.u32(); cp > 0) {
        model.train_cp = CuttingPoint(static_cast<int>(cp));
    }
    const bool has_snr = in.u8() != 0;
    const double snr = in.f64();
    if (has_snr) {
        model.train_snr_db = snr;
    }
    const auto rows = in.u32();
    const auto cols = in.u32();
    const auto basis_rows = in.u32();
    const auto basis_cols = in.u32();
    if (basis_rows != 0 && basis_rows != cols) {
        throw FormatError(path.string() + ": basis does not match coordinates");
    }
    Matrix coords(rows, cols);
    for (Eigen::Index i = 0; i < coords.size(); ++i) {
        coords.data()[i] = in.f64();
    }
    Matrix basis(basis_rows, basis_cols);
    for (Eigen::Index i = 0; i < basis.size(); ++i) {
        basis.data()[i] = in.f64();
    }
    Eigen::VectorXd strangeness(rows);
    for (Eigen::Index i = 0; i < strangeness.size(); ++i) {
        strangeness(i) = in.f64();
    }
    const std::string text = in.bytes(in.u32());
    if (!in.at_end()) {
        throw FormatError(path.string() + ": trailing bytes");
    }
    if (manifest != nullptr) {
        try {
            *manifest = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path.string() + ": bad manifest: " + e.what());
        }
    }
    model.index = std::make_shared<NeighborIndex>(std::move(coords), std::move(basis), model.k);
    model.set_strangeness(std::move(strangeness));
    return model;
}

} // namespace emguard
