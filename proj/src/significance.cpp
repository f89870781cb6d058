#include "dmseg/significance.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmseg/error.hpp"
#include "dmseg/log.hpp"
#include "dmseg/parallel.hpp"
#include "dmseg/rng.hpp"

namespace dmseg
{

Strata::Strata(std::vector<std::size_t> upper_bounds)
    : bounds_(std::move(upper_bounds))
{
    for (std::size_t i = 0; i < bounds_.size(); ++i)
    {
        if (bounds_[i] == 0 || (i > 0 && bounds_[i] <= bounds_[i - 1]))
        {
            throw Error(
                ErrorCode::invalid_config,
                "strata bounds must be positive and strictly increasing");
        }
    }
}

Strata Strata::parse(const std::string& text)
{
    std::vector<std::size_t> bounds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        if (item.empty())
        {
            continue;
        }
        try
        {
            std::size_t used = 0;
            const auto v = std::stoull(item, &used);
            if (used != item.size())
            {
                throw std::invalid_argument(item);
            }
            bounds.push_back(static_cast<std::size_t>(v));
        }
        catch (const std::exception&)
        {
            throw Error(ErrorCode::invalid_config,
                        fmt::format("bad strata bound '{}'", item));
        }
    }
    return Strata(std::move(bounds));
}

std::size_t Strata::index_of(std::size_t n_cpgs) const
{
    return static_cast<std::size_t>(
        std::ranges::lower_bound(bounds_, n_cpgs) - bounds_.begin());
}

std::size_t Strata::lower(std::size_t stratum) const
{
    return stratum == 0 ? 0 : bounds_[stratum - 1];
}

std::size_t Strata::upper(std::size_t stratum) const
{
    return stratum < bounds_.size() ? bounds_[stratum]
                                    : std::numeric_limits<std::size_t>::max();
}

std::string Strata::label(std::size_t stratum) const
{
    if (stratum < bounds_.size())
    {
        return fmt::format("({},{}]", lower(stratum), upper(stratum));
    }
    return fmt::format("({},inf)", lower(stratum));
}

std::vector<std::uint8_t> permuted_labels(
    std::span<const std::uint8_t> group,
    std::uint64_t seed,
    std::uint64_t index)
{
    std::vector<std::uint8_t> out(group.begin(), group.end());
    CounterStream stream(seed, index);
    stream.shuffle(std::span<std::uint8_t>(out));
    return out;
}

PermutationPlan make_plan(
    const PhenotypeTable& phenotypes,
    std::size_t n_permutations,
    std::uint64_t seed)
{
    if (n_permutations == 0)
    {
        throw Error(ErrorCode::invalid_plan,
                    "the number of permutations must be at least 1");
    }
    PermutationPlan plan;
    plan.master_seed = seed;
    plan.labels.reserve(n_permutations);
    for (std::size_t b = 0; b < n_permutations; ++b)
    {
        plan.labels.push_back(permuted_labels(phenotypes.group, seed, b));
    }
    return plan;
}

double NullPool::finding_rate() const
{
    const auto total = total_draws();
    return total == 0 ? 0.0
                      : static_cast<double>(null_lrts.size())
                            / static_cast<double>(total);
}

double NullPool::quantile(double prob) const
{
    const auto total = total_draws();
    if (total == 0)
    {
        throw Error(ErrorCode::empty_pool, "quantile of an empty pool");
    }
    auto rank = static_cast<std::size_t>(
        std::ceil(prob * static_cast<double>(total)));
    rank = std::clamp<std::size_t>(rank, 1, total);
    if (rank <= zero_count)
    {
        return 0.0;
    }
    return null_lrts[rank - zero_count - 1];
}

NullScan null_scan(
    const AnalysisDataset& dataset,
    std::span<const Cluster> clusters,
    const PermutationPlan& plan,
    Mode mode,
    const SearchParams& params,
    const Strata& strata,
    std::size_t threads)
{
    const auto n_perm = plan.n_permutations();
    if (n_perm == 0)
    {
        throw Error(ErrorCode::invalid_plan, "empty permutation plan");
    }
    const auto n_strata = strata.size();
    std::vector<std::size_t> stratum_of(clusters.size());
    std::vector<std::size_t> clusters_in(n_strata, 0);
    for (std::size_t c = 0; c < clusters.size(); ++c)
    {
        stratum_of[c] = strata.index_of(clusters[c].size);
        ++clusters_in[stratum_of[c]];
    }

    // Per-permutation positive cluster maxima, merged in permutation order
    // afterwards so the pools do not depend on scheduling.
    std::vector<std::vector<std::pair<std::uint32_t, double>>> hits(n_perm);
    std::vector<std::uint8_t> deficient(n_perm, 0);
    parallel_for(
        n_perm,
        threads,
        [&](std::size_t b)
        {
            std::vector<CpGAssociation> stats;
            try
            {
                stats = association_stats(dataset, plan.labels[b], mode, 1);
            }
            catch (const Error& e)
            {
                if (e.code() != ErrorCode::rank_deficient)
                {
                    throw;
                }
                deficient[b] = 1;
                return;
            }
            std::vector<double> maxima(clusters.size(), 0.0);
            cluster_max_lrts(clusters, stats, params, maxima);
            for (std::size_t c = 0; c < maxima.size(); ++c)
            {
                if (maxima[c] > 0.0)
                {
                    hits[b].emplace_back(static_cast<std::uint32_t>(c),
                                         maxima[c]);
                }
            }
        });

    NullScan scan{strata, {}, {}, 0};
    scan.pools.resize(n_strata);
    for (std::size_t s = 0; s < n_strata; ++s)
    {
        scan.pools[s].stratum = s;
        scan.pools[s].n_clusters = clusters_in[s];
    }
    scan.stratum_max.assign(n_perm, std::vector<double>(n_strata, 0.0));
    for (std::size_t b = 0; b < n_perm; ++b)
    {
        scan.rank_deficient += deficient[b];
        for (const auto& [c, v] : hits[b])
        {
            const auto s = stratum_of[c];
            scan.pools[s].null_lrts.push_back(v);
            scan.stratum_max[b][s] = std::max(scan.stratum_max[b][s], v);
        }
        std::vector<std::pair<std::uint32_t, double>>().swap(hits[b]);
    }
    for (auto& pool : scan.pools)
    {
        pool.zero_count = pool.n_clusters * n_perm - pool.null_lrts.size();
    }
    for (auto& pool : scan.pools)
    {
        std::ranges::sort(pool.null_lrts);
    }
    if (scan.rank_deficient > 0)
    {
        log::info("{} permutations had a rank-deficient design and were "
                  "counted as finding nothing",
                  scan.rank_deficient);
    }
    return scan;
}

double p_value(double observed_lrt, const NullPool& pool)
{
    const auto total = pool.total_draws();
    if (total == 0)
    {
        throw Error(ErrorCode::empty_pool,
                    fmt::format("null pool for stratum {} has no draws",
                                pool.stratum));
    }
    if (!(observed_lrt > 0.0))
    {
        return 1.0;
    }
    const auto at_least = static_cast<std::size_t>(
        pool.null_lrts.end()
        - std::ranges::lower_bound(pool.null_lrts, observed_lrt));
    return static_cast<double>(1 + at_least) / static_cast<double>(1 + total);
}

double p_value_leave_one_out(double pooled_lrt, const NullPool& pool)
{
    const auto total = pool.total_draws();
    const auto at_least = static_cast<std::size_t>(
        pool.null_lrts.end()
        - std::ranges::lower_bound(pool.null_lrts, pooled_lrt));
    if (at_least == 0)
    {
        throw Error(ErrorCode::empty_pool, "value is not a draw of this pool");
    }
    return static_cast<double>(at_least) / static_cast<double>(1 + total);
}

std::vector<double> permutation_min_p(const NullScan& scan)
{
    std::vector<double> out(scan.stratum_max.size(), 1.0);
    for (std::size_t b = 0; b < out.size(); ++b)
    {
        for (std::size_t s = 0; s < scan.pools.size(); ++s)
        {
            const double v = scan.stratum_max[b][s];
            if (v > 0.0)
            {
                out[b] = std::min(out[b], p_value_leave_one_out(v, scan.pools[s]));
            }
        }
    }
    return out;
}

double fwer(double p, std::span<const double> permutation_min_p)
{
    if (permutation_min_p.empty())
    {
        throw Error(ErrorCode::invalid_plan, "no permutations for FWER");
    }
    const auto hits = std::ranges::count_if(
        permutation_min_p, [p](double m) { return m <= p; });
    return static_cast<double>(hits)
           / static_cast<double>(permutation_min_p.size());
}

void apply_fwer(std::span<RegionResult> results,
                std::span<const double> permutation_min_p)
{
    for (auto& r : results)
    {
        r.fwer = fwer(r.p_value, permutation_min_p);
    }
}

SignificanceRun run_significance(
    const AnalysisDataset& dataset,
    std::span<const Cluster> clusters,
    std::span<const Segment> observed,
    std::size_t n_permutations,
    std::uint64_t seed,
    Mode mode,
    const SearchParams& params,
    const Strata& strata,
    std::size_t threads)
{
    const auto plan = make_plan(dataset.phenotypes(), n_permutations, seed);
    SignificanceRun run;
    run.n_permutations = n_permutations;
    run.null = null_scan(dataset, clusters, plan, mode, params, strata,
                         threads);
    run.min_p = permutation_min_p(run.null);

    const auto& ann = dataset.annotations();
    for (const auto& seg : observed)
    {
        const auto it = std::ranges::lower_bound(
            clusters, seg.cluster_id, {}, &Cluster::cluster_id);
        if (it == clusters.end() || it->cluster_id != seg.cluster_id)
        {
            throw Error(ErrorCode::unknown_segment,
                        fmt::format("segment refers to unknown cluster {}",
                                    seg.cluster_id));
        }
        RegionResult r;
        r.segment = seg;
        r.stratum = strata.index_of(it->size);
        r.p_value = p_value(seg.lrt, run.null.pools[r.stratum]);
        r.chromosome = ann[seg.start_index].chromosome;
        r.start_probe = ann[seg.start_index].probe_id;
        r.end_probe = ann[seg.end_index].probe_id;
        r.start_position = ann[seg.start_index].position;
        r.end_position = ann[seg.end_index].position;
        run.results.push_back(std::move(r));
    }
    apply_fwer(run.results, run.min_p);
    std::ranges::sort(
        run.results,
        [](const RegionResult& a, const RegionResult& b)
        {
            if (a.fwer != b.fwer)
            {
                return a.fwer < b.fwer;
            }
            if (a.p_value != b.p_value)
            {
                return a.p_value < b.p_value;
            }
            if (a.segment.lrt != b.segment.lrt)
            {
                return a.segment.lrt > b.segment.lrt;
            }
            return a.segment.start_index < b.segment.start_index;
        });
    return run;
}

}  // namespace dmseg
