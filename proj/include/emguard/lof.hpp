#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "emguard/signal_model.hpp"

namespace emguard {

/// Baseline point set for Local Outlier Factor scoring.
///
/// Baseline scores are leave-one-out: a point is never its own neighbour.
/// The k-distance neighbourhood includes every point tied with the k-th
/// nearest one. A point whose reachability distances are all zero has
/// infinite local density; the density ratio of two such points is 1.
///
/// Points may be stored as coordinates in an orthonormal basis (rows of
/// `basis`); queries are given in the full space and compared exactly,
/// including their component outside the basis.
class NeighborIndex {
public:
    NeighborIndex(Matrix points, int k);
    NeighborIndex(Matrix coords, Matrix basis, int k);

    int k() const { return k_; }
    std::size_t size() const { return static_cast<std::size_t>(coords_.rows()); }
    /// Dimension of the space queries live in.
    Eigen::Index dimension() const { return basis_.size() > 0 ? basis_.cols() : coords_.cols(); }

    const Matrix& coords() const { return coords_; }
    const Matrix& basis() const { return basis_; }
    /// The baseline points in the full space.
    Matrix points() const;

    const Eigen::VectorXd& baseline_scores() const { return lof_; }
    const Eigen::VectorXd& k_distances() const { return kdist_; }
    const Eigen::VectorXd& local_densities() const { return lrd_; }

    double score(std::span<const double> q) const;
    /// One score per row of `queries`.
    Eigen::VectorXd score_rows(const Matrix& queries) const;

private:
    void build();
    Eigen::VectorXd score_projected(const Matrix& projected, const Eigen::VectorXd& residual) const;

    Matrix coords_;
    Matrix basis_;
    int k_;
    Eigen::VectorXd norms_;
    Eigen::VectorXd kdist_;
    Eigen::VectorXd lrd_;
    Eigen::VectorXd lof_;
};

/// Leave-one-out LOF of every row of `points`.
Eigen::VectorXd lof_scores_baseline(const Matrix& points, int k);

/// LOF of q with neighbours drawn from the baseline only.
double lof_score_query(const NeighborIndex& index, std::span<const double> q);

} // namespace emguard
