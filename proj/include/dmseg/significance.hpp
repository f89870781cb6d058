#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dmseg/cluster.hpp"
#include "dmseg/ingest.hpp"
#include "dmseg/segment.hpp"

namespace dmseg
{

/// Half-open CpG-count intervals (lower, upper] partitioning [1, inf).
class Strata
{
   public:
    /// Interior upper bounds, strictly increasing; {10, 20, 40} gives
    /// (0,10], (10,20], (20,40], (40,inf).
    explicit Strata(std::vector<std::size_t> upper_bounds = {10, 20, 40});

    /// Parses "10,20,40".
    static Strata parse(const std::string& text);

    [[nodiscard]] std::size_t size() const { return bounds_.size() + 1; }
    [[nodiscard]] std::size_t index_of(std::size_t n_cpgs) const;
    [[nodiscard]] std::size_t lower(std::size_t stratum) const;
    /// max() for the open-ended last stratum.
    [[nodiscard]] std::size_t upper(std::size_t stratum) const;
    [[nodiscard]] std::string label(std::size_t stratum) const;
    [[nodiscard]] const std::vector<std::size_t>& bounds() const
    {
        return bounds_;
    }

   private:
    std::vector<std::size_t> bounds_;
};

/// Label orderings for B permutations. Each ordering permutes the observed
/// group vector; covariates stay with their samples.
struct PermutationPlan
{
    std::uint64_t master_seed = 0;
    std::vector<std::vector<std::uint8_t>> labels;

    [[nodiscard]] std::size_t n_permutations() const { return labels.size(); }
};

/// The ordering for permutation `index`, derived from (seed, index) only.
std::vector<std::uint8_t> permuted_labels(
    std::span<const std::uint8_t> group,
    std::uint64_t seed,
    std::uint64_t index);

/// Throws InvalidPlan for B = 0.
PermutationPlan make_plan(
    const PhenotypeTable& phenotypes,
    std::size_t n_permutations,
    std::uint64_t seed);

/// Permutation null for one stratum.
struct NullPool
{
    std::size_t stratum = 0;
    std::size_t n_clusters = 0;
    /// Positive per-cluster maximum LRTs, ascending.
    std::vector<double> null_lrts;
    /// Cluster x permutation draws with no segment.
    std::size_t zero_count = 0;

    [[nodiscard]] std::size_t total_draws() const
    {
        return null_lrts.size() + zero_count;
    }
    /// Fraction of draws that found a segment.
    [[nodiscard]] double finding_rate() const;
    /// Empirical quantile with zero draws included (type 1, inverse CDF).
    [[nodiscard]] double quantile(double prob) const;
};

struct NullScan
{
    Strata strata;
    std::vector<NullPool> pools;
    /// [permutation][stratum]: largest cluster LRT of that permutation in
    /// that stratum, 0 when none.
    std::vector<std::vector<double>> stratum_max;
    /// Permutations whose design was rank deficient; counted as no-finding.
    std::size_t rank_deficient = 0;
};

/// For every permutation, refits all CpGs under the permuted labels, reruns
/// the segment search in every cluster and pools each cluster's maximum LRT
/// by the stratum of the cluster's CpG count.
NullScan null_scan(
    const AnalysisDataset& dataset,
    std::span<const Cluster> clusters,
    const PermutationPlan& plan,
    Mode mode,
    const SearchParams& params = {},
    const Strata& strata = Strata{},
    std::size_t threads = 1);

/// (1 + #draws >= observed) / (1 + total draws); 1 when observed <= 0.
/// Throws EmptyPool when the pool has no draws.
double p_value(double observed_lrt, const NullPool& pool);

/// p_value for a value that is itself one of the pool's draws, with that
/// draw left out: #(draws >= value) / (1 + total draws). This puts a
/// permutation's maximum on the same footing as an observed value, which is
/// never part of the pool.
double p_value_leave_one_out(double pooled_lrt, const NullPool& pool);

/// Per permutation, the smallest stratified p-value over all clusters with
/// the permutation's own draw left out (1 when it found nothing).
std::vector<double> permutation_min_p(const NullScan& scan);

/// Fraction of permutations whose min-p is <= p.
double fwer(double p, std::span<const double> permutation_min_p);

struct RegionResult
{
    Segment segment;
    double p_value = 1.0;
    double fwer = 1.0;
    std::size_t stratum = 0;
    std::string chromosome;
    std::string start_probe;
    std::string end_probe;
    std::int64_t start_position = 0;
    std::int64_t end_position = 0;
};

/// Fills fwer for every result from its p-value.
void apply_fwer(
    std::span<RegionResult> results,
    std::span<const double> permutation_min_p);

struct SignificanceRun
{
    std::vector<RegionResult> results;
    NullScan null;
    std::vector<double> min_p;
    std::size_t n_permutations = 0;
};

/// plan -> null_scan -> p-values -> FWER, results ordered by
/// (fwer, p_value, -lrt).
SignificanceRun run_significance(
    const AnalysisDataset& dataset,
    std::span<const Cluster> clusters,
    std::span<const Segment> observed,
    std::size_t n_permutations,
    std::uint64_t seed,
    Mode mode,
    const SearchParams& params = {},
    const Strata& strata = Strata{},
    std::size_t threads = 1);

}  // namespace dmseg
