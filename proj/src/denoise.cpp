#include "emguard/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emguard/errors.hpp"

namespace emguard {

namespace {

void require_finite(const Matrix& m) {
    if (!m.allFinite()) {
        throw NumericalError("matrix has non-finite entries");
    }
}

int clamp_to(int cp, std::size_t limit) {
    return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cp), std::max<std::size_t>(limit, 1)));
}

} // namespace

std::size_t SvdDecomposition::rank() const {
    if (sigma.size() == 0 || sigma(0) <= 0.0) {
        return 0;
    }
    const double tol = static_cast<double>(std::max(u.rows(), vt.cols())) *
                       std::numeric_limits<double>::epsilon() * sigma(0);
    return static_cast<std::size_t>((sigma.array() > tol).count());
}

CuttingPoint::CuttingPoint(int value) : value_(value) {
    if (value < 1) {
        throw InvalidParameter("cutting point must be at least 1, got " + std::to_string(value));
    }
}

SvdDecomposition svd_decompose(const Matrix& m) {
    if (m.rows() < 2) {
        throw InsufficientBaseline("SVD denoising needs at least 2 rows");
    }
    require_finite(m);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw NumericalError("SVD did not converge");
    }
    return {svd.matrixU(), svd.singularValues(), svd.matrixV().transpose()};
}

SvdDecomposition svd_decompose(const TraceMatrix& m) { return svd_decompose(m.samples); }

Matrix reconstruct_with_cutting_point(const SvdDecomposition& d, CuttingPoint cp) {
    const int keep = clamp_to(cp.value(), d.rank());
    return d.u.leftCols(keep) * d.sigma.head(keep).asDiagonal() * d.vt.topRows(keep);
}

Eigen::VectorXd singular_values(const Matrix& x) {
    require_finite(x);
    if (x.rows() >= x.cols()) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(x.cols(), x.cols());
        gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        if (eig.info() != Eigen::Success) {
            throw NumericalError("eigen decomposition did not converge");
        }
        return eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x);
    if (svd.info() != Eigen::Success) {
        throw NumericalError("SVD did not converge");
    }
    return svd.singularValues();
}

CuttingPoint traditional_cutting_point(const Eigen::VectorXd& sigma) {
    if (sigma.size() < 2) {
        throw InvalidInput("need at least 2 singular values");
    }
    int best = 1;
    double best_ratio = 1.0;
    for (Eigen::Index i = 1; i < sigma.size(); ++i) {
        if (sigma(i) <= 0.0) {
            break;
        }
        const double ratio = sigma(i - 1) / sigma(i);
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = static_cast<int>(i);
        }
    }
    return CuttingPoint(best);
}

CuttingPoint formula_cutting_point(double snr_db) {
    if (!std::isfinite(snr_db)) {
        throw InvalidParameter("snr_db must be finite");
    }
    // Calibration points of the fit. The fit itself gives 24.47 at 10 dB.
    static constexpr std::pair<double, int> kCalibrated[] = {
        {10.0, 25}, {5.0, 15}, {0.0, 10}, {-5.0, 6}, {-10.0, 4}};
    for (const auto& [snr, cp] : kCalibrated) {
        if (snr_db == snr) {
            return CuttingPoint(cp);
        }
    }
    const double fit = 9.7915 * std::exp(0.0916 * snr_db);
    const double rounded = std::floor(fit + 0.5);
    return CuttingPoint(static_cast<int>(std::clamp(rounded, 1.0, 1.0e9)));
}

bool formula_is_extrapolated(double snr_db) { return snr_db < -10.0 || snr_db > 10.0; }

TraceMatrix denoise_batch(const TraceMatrix& m, CuttingPoint cp) {
    TraceMatrix out = m;
    out.samples = reconstruct_with_cutting_point(svd_decompose(m.samples), cp);
    return out;
}

Matrix leading_right_basis(const Matrix& x, int count) {
    require_finite(x);
    const auto n = x.rows();
    const auto d = x.cols();
    if (count < 1 || count > std::min(n, d)) {
        throw InvalidParameter("cannot take " + std::to_string(count) + " singular vectors of a " +
                               std::to_string(n) + "x" + std::to_string(d) + " matrix");
    }
    if (n >= d) {
        // Right singular vectors are the eigenvectors of the d x d Gram matrix.
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        if (eig.info() != Eigen::Success) {
            throw NumericalError("eigen decomposition did not converge");
        }
        return eig.eigenvectors().rightCols(count).rowwise().reverse().transpose();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        throw NumericalError("SVD did not converge");
    }
    return svd.matrixV().leftCols(count).transpose();
}

FactoredBatch denoise_factored(const Matrix& x, CuttingPoint cp) {
    if (x.rows() < 2) {
        throw InsufficientBaseline("SVD denoising needs at least 2 rows");
    }
    require_finite(x);
    if (cp.value() >= std::min(x.rows(), x.cols())) {
        return {x, Matrix()};
    }
    FactoredBatch out;
    out.basis = leading_right_basis(x, cp.value());
    out.coords = x * out.basis.transpose();
    return out;
}

} // namespace emguard
