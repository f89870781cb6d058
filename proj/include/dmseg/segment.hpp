#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "dmseg/assoc.hpp"
#include "dmseg/cluster.hpp"

namespace dmseg
{

/// A candidate region: dataset rows [start_index, end_index] inside one
/// cluster, scored by the common-effect likelihood ratio.
struct Segment
{
    std::size_t cluster_id = 0;
    std::size_t start_index = 0;
    std::size_t end_index = 0;
    double segment_mean = 0.0;
    double lrt = 0.0;
    Mode mode = Mode::dmr;

    [[nodiscard]] std::size_t n_cpgs() const
    {
        return end_index - start_index + 1;
    }

    bool operator==(const Segment&) const = default;
};

struct SearchParams
{
    double z_main = 1.96;
    double z_bridge = 1.64;
    std::size_t min_cpgs = 2;
};

/// Inclusive [start, end] offsets into a z-score vector.
struct Span
{
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const Span&) const = default;
};

/// Hits are |z| >= z_main regardless of sign. Two hit runs separated by a
/// single CpG with |z| >= z_bridge are merged through it (merges chain).
/// Spans shorter than min_cpgs are dropped.
std::vector<Span> find_spans(
    std::span<const double> z,
    const SearchParams& params = {});

/// Unscored segments of one cluster. Degenerate CpGs count as |z| = 0.
std::vector<Segment> find_candidates(
    const Cluster& cluster,
    std::span<const CpGAssociation> stats,
    const SearchParams& params = {});

struct LrtScore
{
    double segment_mean = 0.0;
    double lrt = 0.0;
};

/// Inverse-variance weighted mean and the likelihood ratio of "one common
/// effect" against "no effect": mean^2 * sum(1 / variance).
LrtScore lrt_score(
    std::span<const double> betas,
    std::span<const double> variances);

/// lrt_score over dataset rows [start, end] of `stats`.
LrtScore lrt_score(
    std::span<const CpGAssociation> stats,
    std::size_t start,
    std::size_t end);

struct ScanResult
{
    /// All scored segments, descending LRT.
    std::vector<Segment> segments;
    /// Largest LRT per cluster (parallel to the cluster list), 0 when the
    /// cluster has no segment.
    std::vector<double> cluster_max_lrt;
};

ScanResult scan_dataset(
    std::span<const Cluster> clusters,
    std::span<const CpGAssociation> stats,
    const SearchParams& params = {},
    Mode mode = Mode::dmr);

/// Only the per-cluster maxima; the hot path of the permutation scan.
void cluster_max_lrts(
    std::span<const Cluster> clusters,
    std::span<const CpGAssociation> stats,
    const SearchParams& params,
    std::span<double> out);

}  // namespace dmseg
