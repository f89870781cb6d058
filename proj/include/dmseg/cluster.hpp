#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmseg/ingest.hpp"

namespace dmseg
{

/// Statistics for two coordinate-adjacent CpGs on one chromosome.
struct AdjacentPairStats
{
    std::size_t left_index = 0;
    std::size_t right_index = 0;
    std::int64_t gap_bp = 0;
    double correlation = 0.0;
    /// Either row was constant; correlation forced to 0.
    bool constant_row = false;
};

struct Cluster
{
    std::size_t cluster_id = 0;
    std::string chromosome;
    /// Half-open range [first, first + size) of dataset rows.
    std::size_t first = 0;
    std::size_t size = 0;
    std::size_t correlation_joins = 0;

    [[nodiscard]] std::size_t last() const { return first + size - 1; }
    [[nodiscard]] std::size_t end() const { return first + size; }

    bool operator==(const Cluster&) const = default;
};

struct ClusterParams
{
    std::int64_t max_gap_bp = 500;
    double corr_min = 0.6;
};

/// Pearson correlation of two equal-length rows; 0 when either is constant.
double pearson(std::span<const double> x, std::span<const double> y);

std::vector<AdjacentPairStats> adjacent_pair_stats(
    const AnalysisDataset& dataset);

/// Adjacent CpGs i and i+1 join when they share a chromosome and
/// gap < max_gap_bp or correlation > corr_min. Ids follow coordinate order.
std::vector<Cluster> build_clusters(
    const AnalysisDataset& dataset,
    std::span<const AdjacentPairStats> pair_stats,
    const ClusterParams& params = {});

/// Drops clusters with fewer than `min_size` CpGs; ids are kept.
std::vector<Cluster> filter_clusters(
    std::span<const Cluster> clusters,
    std::size_t min_size = 2);

/// Median correlation of adjacent pairs whose gap alone would join them.
/// Returns 0.6 when no such pair exists.
double median_gap_correlation(
    std::span<const AdjacentPairStats> pair_stats,
    std::int64_t max_gap_bp);

struct ClusterSummary
{
    std::size_t gap_only = 0;
    std::size_t merged = 0;
    std::size_t joined_by_correlation = 0;
    std::size_t after_filter = 0;
};

}  // namespace dmseg
