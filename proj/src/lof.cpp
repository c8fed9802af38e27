#include "emguard/lof.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "emguard/errors.hpp"

namespace emguard {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Eigen::Index kBlockRows = 256;
// Extra candidates taken from the Gram-based ranking before exact refinement.
constexpr Eigen::Index kSlack = 8;

struct Neighbor {
    Eigen::Index index;
    double dist;
};

struct Hood {
    std::vector<Neighbor> members;
    double kdist = 0.0;
};

/// k-distance neighbourhoods of the rows of `queries` (with squared residual
/// `extra` outside the basis) among the rows of `base`. When `exclude_self`
/// is set, query row r is base row offset + r and is skipped.
class HoodSearch {
public:
    HoodSearch(const Matrix& base, const Eigen::VectorXd& base_norms, int k)
        : base_(base), norms_(base_norms), k_(k), max_norm_(base_norms.size() ? base_norms.maxCoeff() : 0.0) {}

    template <typename Sink>
    void run(const Matrix& queries, const Eigen::VectorXd& extra, bool exclude_self, Sink&& sink) const {
        const Eigen::Index n = base_.rows();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::vector<double> approx(static_cast<std::size_t>(n));
        for (Eigen::Index start = 0; start < queries.rows(); start += kBlockRows) {
            const Eigen::Index len = std::min(kBlockRows, queries.rows() - start);
            const Eigen::MatrixXd gram = queries.middleRows(start, len) * base_.transpose();
            for (Eigen::Index r = 0; r < len; ++r) {
                const Eigen::Index qi = start + r;
                const double qn = queries.row(qi).squaredNorm();
                for (Eigen::Index j = 0; j < n; ++j) {
                    approx[static_cast<std::size_t>(j)] = qn + norms_(j) - 2.0 * gram(r, j);
                }
                const Eigen::Index self = exclude_self ? qi : -1;
                if (self >= 0) {
                    approx[static_cast<std::size_t>(self)] = kInf;
                }
                sink(qi, neighbourhood(queries.row(qi), extra(qi), qn, self, approx, order));
            }
        }
    }

private:
    double exact_sq(const Eigen::Ref<const Eigen::RowVectorXd>& q, double extra, Eigen::Index j) const {
        return (q - base_.row(j)).squaredNorm() + extra;
    }

    Hood collect(const std::vector<Neighbor>& sorted_sq) const {
        Hood hood;
        const double kd2 = sorted_sq[static_cast<std::size_t>(k_ - 1)].dist;
        for (const auto& nb : sorted_sq) {
            if (nb.dist > kd2) {
                break;
            }
            hood.members.push_back({nb.index, std::sqrt(nb.dist)});
        }
        hood.kdist = std::sqrt(kd2);
        return hood;
    }

    Hood full_scan(const Eigen::Ref<const Eigen::RowVectorXd>& q, double extra, Eigen::Index self) const {
        std::vector<Neighbor> all;
        all.reserve(static_cast<std::size_t>(base_.rows()));
        for (Eigen::Index j = 0; j < base_.rows(); ++j) {
            if (j != self) {
                all.push_back({j, exact_sq(q, extra, j)});
            }
        }
        std::sort(all.begin(), all.end(), by_distance);
        return collect(all);
    }

    Hood neighbourhood(const Eigen::Ref<const Eigen::RowVectorXd>& q, double extra, double qn, Eigen::Index self,
                       const std::vector<double>& approx, std::vector<Eigen::Index>& order) const {
        const Eigen::Index n = base_.rows();
        const Eigen::Index available = n - (self >= 0 ? 1 : 0);
        const Eigen::Index take = std::min<Eigen::Index>(available, k_ + kSlack);
        if (take == available) {
            return full_scan(q, extra, self);
        }
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        auto closer = [&](Eigen::Index a, Eigen::Index b) {
            return approx[static_cast<std::size_t>(a)] < approx[static_cast<std::size_t>(b)];
        };
        std::nth_element(order.begin(), order.begin() + take, order.end(), closer);
        const double first_excluded = approx[static_cast<std::size_t>(order[static_cast<std::size_t>(take)])];

        std::vector<Neighbor> cand;
        cand.reserve(static_cast<std::size_t>(take));
        for (Eigen::Index c = 0; c < take; ++c) {
            const auto j = order[static_cast<std::size_t>(c)];
            cand.push_back({j, exact_sq(q, extra, j)});
        }
        std::sort(cand.begin(), cand.end(), by_distance);
        const double kd2 = cand[static_cast<std::size_t>(k_ - 1)].dist;
        // Gram distances lose absolute precision proportional to the norms;
        // only trust the cut when everything left out is clearly farther.
        const double tol = 1e-9 * (qn + max_norm_) + 1e-300;
        if (first_excluded - tol <= kd2 - extra) {
            return full_scan(q, extra, self);
        }
        return collect(cand);
    }

    static bool by_distance(const Neighbor& a, const Neighbor& b) {
        return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
    }

    const Matrix& base_;
    const Eigen::VectorXd& norms_;
    int k_;
    double max_norm_;
};

double density_ratio(double lrd_neighbor, double lrd_self) {
    if (std::isinf(lrd_neighbor) && std::isinf(lrd_self)) {
        return 1.0;
    }
    return lrd_neighbor / lrd_self;
}

double local_density(const Hood& hood, const Eigen::VectorXd& kdist) {
    double reach_sum = 0.0;
    for (const auto& nb : hood.members) {
        reach_sum += std::max(kdist(nb.index), nb.dist);
    }
    if (reach_sum == 0.0) {
        return kInf;
    }
    return static_cast<double>(hood.members.size()) / reach_sum;
}

double lof_from(const Hood& hood, double lrd_self, const Eigen::VectorXd& lrd) {
    double acc = 0.0;
    for (const auto& nb : hood.members) {
        acc += density_ratio(lrd(nb.index), lrd_self);
    }
    return acc / static_cast<double>(hood.members.size());
}

} // namespace

NeighborIndex::NeighborIndex(Matrix points, int k) : coords_(std::move(points)), k_(k) { build(); }

NeighborIndex::NeighborIndex(Matrix coords, Matrix basis, int k)
    : coords_(std::move(coords)), basis_(std::move(basis)), k_(k) {
    if (basis_.size() > 0 && basis_.rows() != coords_.cols()) {
        throw DimensionError("basis has " + std::to_string(basis_.rows()) + " rows, coordinates have " +
                             std::to_string(coords_.cols()) + " columns");
    }
    build();
}

void NeighborIndex::build() {
    const Eigen::Index n = coords_.rows();
    if (k_ < 1) {
        throw InvalidK("k must be at least 1, got " + std::to_string(k_));
    }
    if (k_ >= n) {
        throw InvalidK("k = " + std::to_string(k_) + " needs more than " + std::to_string(n) + " points");
    }
    if (!coords_.allFinite()) {
        throw NumericalError("baseline has non-finite entries");
    }
    norms_ = coords_.rowwise().squaredNorm();

    std::vector<Hood> hoods(static_cast<std::size_t>(n));
    kdist_.resize(n);
    HoodSearch search(coords_, norms_, k_);
    search.run(coords_, Eigen::VectorXd::Zero(n), true, [&](Eigen::Index i, Hood hood) {
        kdist_(i) = hood.kdist;
        hoods[static_cast<std::size_t>(i)] = std::move(hood);
    });

    lrd_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lrd_(i) = local_density(hoods[static_cast<std::size_t>(i)], kdist_);
    }
    lof_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lof_(i) = lof_from(hoods[static_cast<std::size_t>(i)], lrd_(i), lrd_);
    }
}

Matrix NeighborIndex::points() const { return basis_.size() > 0 ? Matrix(coords_ * basis_) : coords_; }

Eigen::VectorXd NeighborIndex::score_projected(const Matrix& projected, const Eigen::VectorXd& residual) const {
    Eigen::VectorXd out(projected.rows());
    HoodSearch search(coords_, norms_, k_);
    search.run(projected, residual, false, [&](Eigen::Index i, const Hood& hood) {
        out(i) = lof_from(hood, local_density(hood, kdist_), lrd_);
    });
    return out;
}

Eigen::VectorXd NeighborIndex::score_rows(const Matrix& queries) const {
    if (queries.cols() != dimension()) {
        throw DimensionError("query dimension " + std::to_string(queries.cols()) + " does not match index dimension " +
                             std::to_string(dimension()));
    }
    if (!queries.allFinite()) {
        throw NumericalError("query has non-finite entries");
    }
    if (basis_.size() == 0) {
        return score_projected(queries, Eigen::VectorXd::Zero(queries.rows()));
    }
    const Matrix projected = queries * basis_.transpose();
    const Eigen::VectorXd residual =
        (queries.rowwise().squaredNorm() - projected.rowwise().squaredNorm()).cwiseMax(0.0);
    return score_projected(projected, residual);
}

double NeighborIndex::score(std::span<const double> q) const {
    const Matrix row = Eigen::Map<const Matrix>(q.data(), 1, static_cast<Eigen::Index>(q.size()));
    return score_rows(row)(0);
}

Eigen::VectorXd lof_scores_baseline(const Matrix& points, int k) { return NeighborIndex(points, k).baseline_scores(); }

double lof_score_query(const NeighborIndex& index, std::span<const double> q) { return index.score(q); }

} // namespace emguard
