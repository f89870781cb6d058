#include "dmseg/assoc.hpp"

#include <Eigen/QR>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "dmseg/error.hpp"
#include "dmseg/parallel.hpp"

namespace dmseg
{

namespace
{

constexpr Eigen::Index kBlockRows = 2048;

}  // namespace

std::string_view to_string(Mode mode)
{
    return mode == Mode::dmr ? "dmr" : "vmr";
}

Mode parse_mode(std::string_view text)
{
    if (text == "dmr" || text == "DMR")
    {
        return Mode::dmr;
    }
    if (text == "vmr" || text == "VMR")
    {
        return Mode::vmr;
    }
    throw Error(ErrorCode::invalid_config,
                fmt::format("unknown mode '{}'", text));
}

DesignSummary DesignSummary::build(
    std::span<const std::uint8_t> group,
    const Eigen::MatrixXd& covariates)
{
    const auto n = static_cast<Eigen::Index>(group.size());
    const Eigen::Index n_cov = covariates.cols();
    if (n_cov > 0 && covariates.rows() != n)
    {
        throw Error(ErrorCode::parse, "covariate rows != group length");
    }
    const Eigen::Index k = 2 + n_cov;
    if (n < k + 2)
    {
        throw Error(
            ErrorCode::too_few_samples,
            fmt::format("{} samples leave fewer than 2 residual degrees of "
                        "freedom for {} predictors",
                        n, k));
    }
    Eigen::MatrixXd x(n, k);
    x.col(0).setOnes();
    for (Eigen::Index i = 0; i < n; ++i)
    {
        x(i, 1) = group[i];
    }
    if (n_cov > 0)
    {
        x.rightCols(n_cov) = covariates;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pivoted(x);
    pivoted.setThreshold(1e-10);
    if (pivoted.rank() < k)
    {
        throw Error(
            ErrorCode::rank_deficient,
            fmt::format("design matrix has rank {} < {} columns (collinear "
                        "covariates or a covariate equal to the group)",
                        pivoted.rank(), k));
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    DesignSummary d;
    d.n_samples_ = static_cast<std::size_t>(n);
    d.n_predictors_ = static_cast<std::size_t>(k);
    d.basis_ = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    const Eigen::MatrixXd r
        = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    // Group coefficient = e1' R^-1 Q' y, so its weight vector is Q R^-T e1.
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(k);
    e1(effect_column()) = 1.0;
    const Eigen::VectorXd u
        = r.transpose().triangularView<Eigen::Lower>().solve(e1);
    d.effect_weights_ = d.basis_ * u;
    d.effect_variance_factor_ = u.squaredNorm();
    return d;
}

std::vector<CpGAssociation> fit_rows(
    const RowMatrix& responses,
    const DesignSummary& design,
    std::size_t threads)
{
    const Eigen::Index p = responses.rows();
    if (static_cast<std::size_t>(responses.cols()) != design.n_samples())
    {
        throw Error(ErrorCode::parse, "response columns != design samples");
    }
    std::vector<CpGAssociation> out(static_cast<std::size_t>(p));
    const auto n_blocks
        = static_cast<std::size_t>((p + kBlockRows - 1) / kBlockRows);
    const double df = static_cast<double>(design.residual_df());
    const double vf = design.effect_variance_factor();
    const auto& q = design.basis();
    const auto& a = design.effect_weights();

    parallel_for(
        n_blocks,
        threads,
        [&](std::size_t b)
        {
            const Eigen::Index r0 = static_cast<Eigen::Index>(b) * kBlockRows;
            const Eigen::Index len = std::min(kBlockRows, p - r0);
            const auto y = responses.middleRows(r0, len);
            const Eigen::VectorXd beta1 = y * a;
            const Eigen::MatrixXd coords = y * q;
            const RowMatrix residual = y - coords * q.transpose();
            const Eigen::VectorXd rss = residual.rowwise().squaredNorm();
            for (Eigen::Index i = 0; i < len; ++i)
            {
                auto& s = out[static_cast<std::size_t>(r0 + i)];
                const double sigma2 = rss(i) / df;
                s.beta1 = beta1(i);
                s.se = std::sqrt(sigma2 * vf);
                s.degenerate = sigma2 < kDegenerateResidualVariance;
                s.z = s.degenerate ? 0.0 : s.beta1 / s.se;
            }
        });
    return out;
}

std::vector<CpGAssociation> fit_all_cpgs(
    const AnalysisDataset& dataset,
    const DesignSummary& design,
    std::size_t threads)
{
    return fit_rows(dataset.values(), design, threads);
}

double median_inplace(std::span<double> values)
{
    const auto n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (n % 2 == 1)
    {
        return *mid;
    }
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

RowMatrix levene_rows(
    const RowMatrix& values,
    std::span<const std::uint8_t> group_labels)
{
    const auto n = static_cast<std::size_t>(values.cols());
    if (group_labels.size() != n)
    {
        throw Error(ErrorCode::parse, "label count != sample count");
    }
    const auto n_case = static_cast<std::size_t>(
        std::count(group_labels.begin(), group_labels.end(), 1));
    if (n_case == 0 || n_case == n)
    {
        throw Error(ErrorCode::singleton_group, "a group has no samples");
    }
    RowMatrix out(values.rows(), values.cols());
    std::vector<double> g0;
    std::vector<double> g1;
    g0.reserve(n);
    g1.reserve(n);
    for (Eigen::Index r = 0; r < values.rows(); ++r)
    {
        g0.clear();
        g1.clear();
        for (std::size_t i = 0; i < n; ++i)
        {
            (group_labels[i] ? g1 : g0).push_back(values(r, i));
        }
        const double m0 = median_inplace(g0);
        const double m1 = median_inplace(g1);
        for (std::size_t i = 0; i < n; ++i)
        {
            out(r, i) = std::abs(values(r, i) - (group_labels[i] ? m1 : m0));
        }
    }
    return out;
}

std::vector<CpGAssociation> association_stats(
    const AnalysisDataset& dataset,
    std::span<const std::uint8_t> group_labels,
    Mode mode,
    std::size_t threads)
{
    const auto design = DesignSummary::build(
        group_labels, dataset.phenotypes().covariates);
    if (mode == Mode::dmr)
    {
        return fit_rows(dataset.values(), design, threads);
    }
    return fit_rows(levene_transform(dataset, group_labels), design, threads);
}

RowMatrix levene_transform(
    const AnalysisDataset& dataset,
    std::span<const std::uint8_t> group_labels)
{
    if (dataset.scale() != Scale::mvalue)
    {
        throw Error(
            ErrorCode::scale_mismatch,
            "the variability transform requires M-values; convert beta "
            "values first");
    }
    return levene_rows(dataset.values(), group_labels);
}

}  // namespace dmseg
