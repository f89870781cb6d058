#include "dmseg/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "dmseg/error.hpp"

namespace dmseg
{

double pearson(std::span<const double> x, std::span<const double> y)
{
    const auto n = x.size();
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0)
    {
        return 0.0;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<AdjacentPairStats> adjacent_pair_stats(
    const AnalysisDataset& dataset)
{
    if (dataset.n_samples() < 3)
    {
        throw Error(
            ErrorCode::too_few_samples,
            "correlation between CpGs needs at least 3 samples");
    }
    const auto& values = dataset.values();
    const auto& ann = dataset.annotations();
    const auto n = static_cast<std::size_t>(values.cols());
    std::vector<AdjacentPairStats> out;
    for (std::size_t i = 0; i + 1 < ann.size(); ++i)
    {
        if (ann[i].chromosome != ann[i + 1].chromosome)
        {
            continue;
        }
        std::span<const double> left(values.row(i).data(), n);
        std::span<const double> right(values.row(i + 1).data(), n);
        AdjacentPairStats s;
        s.left_index = i;
        s.right_index = i + 1;
        s.gap_bp = ann[i + 1].position - ann[i].position;
        const bool left_const
            = values.row(i).maxCoeff() == values.row(i).minCoeff();
        const bool right_const
            = values.row(i + 1).maxCoeff() == values.row(i + 1).minCoeff();
        s.constant_row = left_const || right_const;
        s.correlation = s.constant_row ? 0.0 : pearson(left, right);
        out.push_back(s);
    }
    return out;
}

std::vector<Cluster> build_clusters(
    const AnalysisDataset& dataset,
    std::span<const AdjacentPairStats> pair_stats,
    const ClusterParams& params)
{
    const auto& ann = dataset.annotations();
    std::vector<Cluster> out;
    if (ann.empty())
    {
        return out;
    }
    // joins[i]: 0 = boundary after row i, 1 = gap join, 2 = correlation only
    std::vector<std::uint8_t> joins(ann.size(), 0);
    for (const auto& s : pair_stats)
    {
        if (s.right_index != s.left_index + 1 || s.right_index >= ann.size())
        {
            throw Error(ErrorCode::parse, "pair stats do not match dataset");
        }
        if (s.gap_bp < params.max_gap_bp)
        {
            joins[s.left_index] = 1;
        }
        else if (s.correlation > params.corr_min)
        {
            joins[s.left_index] = 2;
        }
    }
    Cluster current;
    current.chromosome = ann[0].chromosome;
    current.size = 1;
    for (std::size_t i = 0; i + 1 < ann.size(); ++i)
    {
        const bool same_chr = ann[i].chromosome == ann[i + 1].chromosome;
        if (same_chr && joins[i] != 0)
        {
            ++current.size;
            current.correlation_joins += joins[i] == 2 ? 1 : 0;
            continue;
        }
        out.push_back(current);
        current = Cluster{};
        current.cluster_id = out.size();
        current.chromosome = ann[i + 1].chromosome;
        current.first = i + 1;
        current.size = 1;
    }
    out.push_back(current);
    return out;
}

std::vector<Cluster> filter_clusters(
    std::span<const Cluster> clusters,
    std::size_t min_size)
{
    std::vector<Cluster> out;
    std::ranges::copy_if(
        clusters,
        std::back_inserter(out),
        [min_size](const Cluster& c) { return c.size >= min_size; });
    return out;
}

double median_gap_correlation(
    std::span<const AdjacentPairStats> pair_stats,
    std::int64_t max_gap_bp)
{
    std::vector<double> r;
    for (const auto& s : pair_stats)
    {
        if (s.gap_bp < max_gap_bp)
        {
            r.push_back(s.correlation);
        }
    }
    if (r.empty())
    {
        return 0.6;
    }
    std::ranges::sort(r);
    const auto m = r.size() / 2;
    return r.size() % 2 == 1 ? r[m] : 0.5 * (r[m - 1] + r[m]);
}

}  // namespace dmseg
