#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dmseg/ingest.hpp"

namespace dmseg
{

enum class Mode
{
    dmr,
    vmr,
};

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// Least-squares projections for the design [1, group, covariates], shared
/// by every CpG response.
class DesignSummary
{
   public:
    /// Throws RankDeficient for collinear columns and TooFewSamples when
    /// fewer than two residual degrees of freedom remain.
    static DesignSummary build(
        std::span<const std::uint8_t> group,
        const Eigen::MatrixXd& covariates);

    static DesignSummary build(const PhenotypeTable& phenotypes)
    {
        return build(phenotypes.group, phenotypes.covariates);
    }

    [[nodiscard]] std::size_t n_samples() const { return n_samples_; }
    [[nodiscard]] std::size_t n_predictors() const { return n_predictors_; }
    [[nodiscard]] std::size_t residual_df() const
    {
        return n_samples_ - n_predictors_;
    }
    /// Column of the group indicator in the design.
    [[nodiscard]] static constexpr std::size_t effect_column() { return 1; }

    /// Orthonormal basis of the design's column space (n x p).
    [[nodiscard]] const Eigen::MatrixXd& basis() const { return basis_; }
    /// beta1 = effect_weights . y
    [[nodiscard]] const Eigen::VectorXd& effect_weights() const
    {
        return effect_weights_;
    }
    /// Diagonal element of (X'X)^-1 for the group column.
    [[nodiscard]] double effect_variance_factor() const
    {
        return effect_variance_factor_;
    }

   private:
    std::size_t n_samples_ = 0;
    std::size_t n_predictors_ = 0;
    Eigen::MatrixXd basis_;
    Eigen::VectorXd effect_weights_;
    double effect_variance_factor_ = 0.0;
};

struct CpGAssociation
{
    double beta1 = 0.0;
    double se = 0.0;
    double z = 0.0;
    /// Residual variance below the degeneracy threshold; excluded from
    /// segment search.
    bool degenerate = false;
};

inline constexpr double kDegenerateResidualVariance = 1e-12;

/// Fits every row of `responses` (CpGs x samples) against the design.
/// Rows are processed in fixed blocks, so results do not depend on
/// `threads`.
std::vector<CpGAssociation> fit_rows(
    const RowMatrix& responses,
    const DesignSummary& design,
    std::size_t threads = 1);

std::vector<CpGAssociation> fit_all_cpgs(
    const AnalysisDataset& dataset,
    const DesignSummary& design,
    std::size_t threads = 1);

/// |y - median of the sample's group| per cell, medians taken under
/// `group_labels`.
RowMatrix levene_rows(
    const RowMatrix& values,
    std::span<const std::uint8_t> group_labels);

/// Brown-Forsythe transform of an M-value dataset. Throws ScaleMismatch on
/// beta-scale data.
RowMatrix levene_transform(
    const AnalysisDataset& dataset,
    std::span<const std::uint8_t> group_labels);

/// CpG statistics under `group_labels` (observed or permuted) with the
/// dataset's covariates. VMR mode fits the variability transform and needs
/// M-values.
std::vector<CpGAssociation> association_stats(
    const AnalysisDataset& dataset,
    std::span<const std::uint8_t> group_labels,
    Mode mode,
    std::size_t threads = 1);

/// Midpoint of the central order statistics for even sizes. Reorders input.
double median_inplace(std::span<double> values);

}  // namespace dmseg
