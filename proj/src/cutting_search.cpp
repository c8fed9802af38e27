#include <algorithm>

#include "emguard/denoise.hpp"
#include "emguard/errors.hpp"
#include "emguard/eval.hpp"
#include "emguard/lof.hpp"

namespace emguard {

CuttingPointSearch sweep_cutting_points(const Matrix& train, const TraceMatrix& validation, int k,
                                        const std::vector<int>& candidates) {
    if (candidates.empty()) {
        throw InvalidParameter("no cutting-point candidates");
    }
    if (validation.count(Label::Benign) == 0 || validation.count(Label::Anomalous) == 0) {
        throw EvaluationError("validation set must contain both labels");
    }
    if (train.rows() < 2 || validation.rows() < 2) {
        throw InsufficientBaseline("training and validation batches need at least 2 rows");
    }
    if (train.cols() != validation.samples.cols()) {
        throw DimensionError("training and validation traces differ in length");
    }
    for (int c : candidates) {
        if (c < 1) {
            throw InvalidParameter("cutting-point candidates must be positive");
        }
    }
    const int top = *std::max_element(candidates.begin(), candidates.end());
    const auto train_full = std::min(train.rows(), train.cols());
    const auto valid_full = std::min(validation.samples.rows(), validation.samples.cols());

    // Both batches are decomposed once; each candidate takes a prefix.
    const Matrix train_basis = leading_right_basis(train, static_cast<int>(std::min<Eigen::Index>(top, train_full)));
    const Matrix train_coords = train * train_basis.transpose();
    const Matrix valid_basis =
        leading_right_basis(validation.samples, static_cast<int>(std::min<Eigen::Index>(top, valid_full)));
    const Matrix valid_coords = validation.samples * valid_basis.transpose();

    CuttingPointSearch out;
    out.candidates = candidates;
    double best_auc = -1.0;
    for (int c : candidates) {
        const NeighborIndex index = c >= train_full
                                        ? NeighborIndex(train, k)
                                        : NeighborIndex(train_coords.leftCols(c), train_basis.topRows(c), k);
        const Matrix cohort = c >= valid_full
                                  ? validation.samples
                                  : Matrix(valid_coords.leftCols(c) * valid_basis.topRows(c));
        const Eigen::VectorXd scores = index.score_rows(cohort);
        const double auc =
            roc_auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), validation.labels);
        out.auc.push_back(auc);
        if (auc > best_auc || (auc == best_auc && c < out.best.value())) {
            best_auc = auc;
            out.best = CuttingPoint(c);
        }
    }
    return out;
}

CuttingPointSearch brute_force_cutting_point(const TraceMatrix& train, const TraceMatrix& validation, int k,
                                             const std::vector<int>& candidates) {
    if (const auto bad = train.count(Label::Anomalous); bad > 0) {
        throw ContaminatedBaseline(std::to_string(bad) + " training traces are labeled anomalous");
    }
    return sweep_cutting_points(train.samples, validation, k, candidates);
}

} // namespace emguard
