#include "dmseg/segment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "dmseg/error.hpp"

namespace dmseg
{

namespace
{

/// Shared by find_spans and the allocation-free cluster scan. `abs_z(i)`
/// returns |z| of offset i; `emit(start, end)` receives each kept span.
/// Neumaier-compensated running sum.
struct CompensatedSum
{
    double sum = 0.0;
    double carry = 0.0;

    void add(double x)
    {
        const double t = sum + x;
        carry += std::fabs(sum) >= std::fabs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    [[nodiscard]] double value() const { return sum + carry; }
};

template <typename AbsZ, typename Emit>
void scan_spans(std::size_t n, AbsZ&& abs_z, const SearchParams& params,
                Emit&& emit)
{
    std::size_t i = 0;
    bool open = false;
    std::size_t start = 0;
    std::size_t end = 0;
    while (i < n)
    {
        if (abs_z(i) < params.z_main)
        {
            ++i;
            continue;
        }
        std::size_t run_end = i;
        while (run_end + 1 < n && abs_z(run_end + 1) >= params.z_main)
        {
            ++run_end;
        }
        if (open && i == end + 2 && abs_z(end + 1) >= params.z_bridge)
        {
            end = run_end;
        }
        else
        {
            if (open && end - start + 1 >= params.min_cpgs)
            {
                emit(start, end);
            }
            open = true;
            start = i;
            end = run_end;
        }
        i = run_end + 1;
    }
    if (open && end - start + 1 >= params.min_cpgs)
    {
        emit(start, end);
    }
}

}  // namespace

std::vector<Span> find_spans(std::span<const double> z,
                             const SearchParams& params)
{
    std::vector<Span> out;
    scan_spans(
        z.size(),
        [&](std::size_t i) { return std::abs(z[i]); },
        params,
        [&](std::size_t s, std::size_t e) { out.push_back({s, e}); });
    return out;
}

std::vector<Segment> find_candidates(
    const Cluster& cluster,
    std::span<const CpGAssociation> stats,
    const SearchParams& params)
{
    if (cluster.end() > stats.size())
    {
        throw Error(ErrorCode::parse, "statistics do not cover the cluster");
    }
    std::vector<Segment> out;
    scan_spans(
        cluster.size,
        [&](std::size_t i)
        {
            const auto& s = stats[cluster.first + i];
            return s.degenerate ? 0.0 : std::abs(s.z);
        },
        params,
        [&](std::size_t s, std::size_t e)
        {
            Segment seg;
            seg.cluster_id = cluster.cluster_id;
            seg.start_index = cluster.first + s;
            seg.end_index = cluster.first + e;
            out.push_back(seg);
        });
    return out;
}

LrtScore lrt_score(std::span<const double> betas,
                   std::span<const double> variances)
{
    if (betas.size() != variances.size() || betas.empty())
    {
        throw Error(ErrorCode::parse,
                    "lrt_score needs equal, non-zero lengths");
    }
    CompensatedSum sum_w;
    CompensatedSum sum_wb;
    for (std::size_t j = 0; j < betas.size(); ++j)
    {
        if (!(variances[j] > 0.0))
        {
            throw Error(
                ErrorCode::non_positive_variance,
                fmt::format("variance {} at offset {}", variances[j], j));
        }
        sum_w.add(1.0 / variances[j]);
        sum_wb.add(betas[j] / variances[j]);
    }
    const double mean = sum_wb.value() / sum_w.value();
    return {mean, mean * sum_wb.value()};
}

LrtScore lrt_score(std::span<const CpGAssociation> stats,
                   std::size_t start,
                   std::size_t end)
{
    CompensatedSum sum_w;
    CompensatedSum sum_wb;
    for (std::size_t j = start; j <= end; ++j)
    {
        const double v = stats[j].se * stats[j].se;
        if (!(v > 0.0))
        {
            throw Error(
                ErrorCode::non_positive_variance,
                fmt::format("variance {} at row {}", v, j));
        }
        sum_w.add(1.0 / v);
        sum_wb.add(stats[j].beta1 / v);
    }
    const double mean = sum_wb.value() / sum_w.value();
    return {mean, mean * sum_wb.value()};
}

ScanResult scan_dataset(std::span<const Cluster> clusters,
                        std::span<const CpGAssociation> stats,
                        const SearchParams& params,
                        Mode mode)
{
    ScanResult result;
    result.cluster_max_lrt.assign(clusters.size(), 0.0);
    for (std::size_t c = 0; c < clusters.size(); ++c)
    {
        for (auto& seg : find_candidates(clusters[c], stats, params))
        {
            const auto score
                = lrt_score(stats, seg.start_index, seg.end_index);
            seg.segment_mean = score.segment_mean;
            seg.lrt = score.lrt;
            seg.mode = mode;
            result.cluster_max_lrt[c]
                = std::max(result.cluster_max_lrt[c], seg.lrt);
            result.segments.push_back(seg);
        }
    }
    std::ranges::stable_sort(
        result.segments,
        [](const Segment& a, const Segment& b) { return a.lrt > b.lrt; });
    return result;
}

void cluster_max_lrts(std::span<const Cluster> clusters,
                      std::span<const CpGAssociation> stats,
                      const SearchParams& params,
                      std::span<double> out)
{
    for (std::size_t c = 0; c < clusters.size(); ++c)
    {
        const auto& cluster = clusters[c];
        double best = 0.0;
        scan_spans(
            cluster.size,
            [&](std::size_t i)
            {
                const auto& s = stats[cluster.first + i];
                return s.degenerate ? 0.0 : std::abs(s.z);
            },
            params,
            [&](std::size_t s, std::size_t e)
            {
                best = std::max(
                    best,
                    lrt_score(stats, cluster.first + s, cluster.first + e).lrt);
            });
        out[c] = best;
    }
}

}  // namespace dmseg
