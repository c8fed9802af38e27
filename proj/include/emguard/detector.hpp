#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "emguard/denoise.hpp"
#include "emguard/lof.hpp"
#include "emguard/signal_model.hpp"

namespace emguard {

enum class Status : std::uint8_t { Normal = 0, Anomalous = 1 };

/// Fingerprint of benign behaviour: the denoised baseline, its leave-one-out
/// LOF strangeness values and the hyperparameters that produced them.
struct BaselineModel {
    std::shared_ptr<const NeighborIndex> index;
    /// Strangeness of each baseline row, in row order.
    Eigen::VectorXd strangeness;
    int k = 3;
    /// Cutting point used on the training batch; empty when not denoised.
    std::optional<CuttingPoint> train_cp;
    std::optional<double> train_snr_db;

    std::size_t size() const { return static_cast<std::size_t>(strangeness.size()); }
    Eigen::Index dimension() const { return index->dimension(); }
    /// Denoised baseline rows.
    TraceMatrix baseline() const;
    /// Strangeness values in ascending order.
    const std::vector<double>& sorted_strangeness() const { return sorted_; }

    /// Sets strangeness and the sorted copy used for p-values.
    void set_strangeness(Eigen::VectorXd values);

private:
    std::vector<double> sorted_;
};

struct Detection {
    double p_value = 1.0;
    double strangeness = 0.0;
    std::optional<Status> status;
    std::optional<double> confidence;
};

/// Denoises the benign batch (when cp is set) and scores every row against
/// the others.
BaselineModel fingerprint(const TraceMatrix& benign, std::optional<CuttingPoint> cp, int k,
                          std::optional<double> train_snr_db = std::nullopt);

/// (n + 1) / (|X| + 1) where n counts baseline strangeness values >= s.
double transductive_p_value(std::span<const double> sorted_strangeness, double s);

/// Anomalous iff p <= 1 - confidence.
Status classify(double p_value, double confidence);

/// Denoises the cohort as one batch with test_cp (when set) and returns
/// p-value and strangeness for every row.
std::vector<Detection> transduce_cohort(const BaselineModel& model, const TraceMatrix& cohort,
                                        std::optional<CuttingPoint> test_cp);

/// Strangeness scores only, in cohort row order.
Eigen::VectorXd score_cohort(const BaselineModel& model, const TraceMatrix& cohort,
                             std::optional<CuttingPoint> test_cp);

/// Scores cohort rows after projecting them onto the subspace the baseline
/// was denoised into, instead of denoising the cohort as its own batch.
/// Deployment rows then share the baseline's distribution under the null,
/// which keeps p-values calibrated, at the cost of AUC in heavy noise.
Eigen::VectorXd score_in_baseline_subspace(const BaselineModel& model, const TraceMatrix& cohort);
std::vector<Detection> detect_in_baseline_subspace(const BaselineModel& model, const TraceMatrix& cohort,
                                                   double confidence);

/// transduce_cohort for the single row of `cohort` equal to q.
Detection transduce(const BaselineModel& model, const Trace& q, std::optional<CuttingPoint> test_cp,
                    const TraceMatrix& cohort);

Detection detect(const BaselineModel& model, const Trace& q, std::optional<CuttingPoint> test_cp,
                 const TraceMatrix& cohort, double confidence);

std::vector<Detection> detect_cohort(const BaselineModel& model, const TraceMatrix& cohort,
                                     std::optional<CuttingPoint> test_cp, double confidence);

/// Model container: magic "EMMD", version byte, hyperparameters, baseline
/// coordinates and basis, strangeness, then a JSON manifest.
void save_model(const BaselineModel& model, const std::filesystem::path& path,
                const nlohmann::json& manifest = nlohmann::json::object());
BaselineModel load_model(const std::filesystem::path& path, nlohmann::json* manifest = nullptr);

} // namespace emguard
