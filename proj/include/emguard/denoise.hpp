#pragma once

#include <compare>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "emguard/signal_model.hpp"

namespace emguard {

/// x = u * diag(sigma) * vt, sigma descending.
struct SvdDecomposition {
    Eigen::MatrixXd u;
    Eigen::VectorXd sigma;
    Eigen::MatrixXd vt;

    /// Numerical rank: singular values above max(rows, cols) * eps * sigma[0].
    std::size_t rank() const;
};

/// Number of leading singular values kept by a reconstruction.
class CuttingPoint {
public:
    explicit CuttingPoint(int value);

    int value() const { return value_; }
    auto operator<=>(const CuttingPoint&) const = default;

private:
    int value_;
};

SvdDecomposition svd_decompose(const Matrix& m);
SvdDecomposition svd_decompose(const TraceMatrix& m);

/// u * diag(sigma with entries past cp zeroed) * vt. A cutting point above
/// the rank is clamped to the rank.
Matrix reconstruct_with_cutting_point(const SvdDecomposition& d, CuttingPoint cp);

/// Singular values of x, descending.
Eigen::VectorXd singular_values(const Matrix& x);

/// Index of the last singular value before the sharpest relative drop.
CuttingPoint traditional_cutting_point(const Eigen::VectorXd& sigma);

/// Exponential fit of the best cutting point against SNR. The five SNRs the
/// fit was calibrated on return their calibrated values.
CuttingPoint formula_cutting_point(double snr_db);
/// True when snr_db lies outside the calibrated [-10, 10] dB range.
bool formula_is_extrapolated(double snr_db);

/// SVD then reconstruction; labels and metadata are preserved.
TraceMatrix denoise_batch(const TraceMatrix& m, CuttingPoint cp);

/// Denoised batch kept in factored form: rows are coords * basis, with basis
/// rows orthonormal. An empty basis means coords already are the rows.
struct FactoredBatch {
    Matrix coords;
    Matrix basis;

    bool has_basis() const { return basis.size() > 0; }
    Matrix expand() const { return has_basis() ? Matrix(coords * basis) : coords; }
};

/// Leading `count` right singular vectors of x as rows, largest first.
Matrix leading_right_basis(const Matrix& x, int count);

/// Projection of the rows of x onto their leading cp right singular vectors.
/// Same result as denoise_batch without forming the left factor. When cp
/// keeps every singular value the rows come back unchanged with no basis.
FactoredBatch denoise_factored(const Matrix& x, CuttingPoint cp);

/// Outcome of a cutting-point sweep.
struct CuttingPointSearch {
    CuttingPoint best{1};
    std::vector<int> candidates;
    std::vector<double> auc;
};

/// Runs denoise, fingerprint, query scoring and AUC for every candidate and
/// returns the argmax (smallest candidate on ties). `validation` must hold
/// both labels and is denoised as one batch with the same candidate.
CuttingPointSearch brute_force_cutting_point(const TraceMatrix& train, const TraceMatrix& validation,
                                             int k, const std::vector<int>& candidates);

/// Same sweep on an unlabeled training matrix, without validating labels.
CuttingPointSearch sweep_cutting_points(const Matrix& train, const TraceMatrix& validation, int k,
                                        const std::vector<int>& candidates);

} // namespace emguard
