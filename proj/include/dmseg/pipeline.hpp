#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmseg/assoc.hpp"
#include "dmseg/cluster.hpp"
#include "dmseg/ingest.hpp"
#include "dmseg/segment.hpp"
#include "dmseg/significance.hpp"

namespace dmseg
{

inline constexpr const char* kVersion = "1.0.0";

/// Every user-settable quantity of a run. Keys of the config file and long
/// CLI flags share the names used by serialize().
struct RunConfig
{
    std::string matrix;
    std::string phenotypes;
    std::string manifest;
    std::string out_dir = ".";
    std::string group_column = "group";
    std::vector<std::string> covariates;
    std::optional<std::string> case_label;

    Scale scale = Scale::beta;
    Mode mode = Mode::dmr;

    std::int64_t max_gap = 500;
    double corr_min = 0.6;
    bool corr_auto = false;
    std::size_t min_cluster_size = 2;

    double z_main = 1.96;
    double z_bridge = 1.64;
    std::size_t min_cpgs = 2;

    std::size_t permutations = 500;
    std::uint64_t seed = 20230101;
    std::string strata = "10,20,40";
    std::size_t threads = 1;

    std::string cpg_stats;
    /// validate: regions TSV.
    std::string regions;
    /// plot-data: results TSV and the rank to plot.
    std::string results;
    std::size_t rank = 0;

    /// Throws InvalidConfig when a parameter is outside its range.
    void validate() const;

    [[nodiscard]] SearchParams search_params() const
    {
        return {z_main, z_bridge, min_cpgs};
    }
    [[nodiscard]] ClusterParams cluster_params() const
    {
        return {max_gap, corr_min};
    }
};

/// key=value lines in a fixed order.
std::string serialize(const RunConfig& config);

/// FNV-1a over the analysis-relevant part of the config (everything except
/// threads and the output directory).
std::uint64_t config_hash(const RunConfig& config);

/// "# dmseg <version> config_hash=<hex> seed=<seed>"
std::string output_header(const RunConfig& config);

/// Reads a flat key=value file into (key, value) pairs; '#' starts a
/// comment line.
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path);

AnalysisDataset load_dataset(const RunConfig& config);

struct ClusteringOutcome
{
    std::vector<Cluster> all;
    std::vector<Cluster> kept;
    ClusterSummary summary;
    double corr_min = 0.6;
};

ClusteringOutcome cluster_dataset(
    const AnalysisDataset& dataset,
    const RunConfig& config);

/// In-memory DMR/VMR pipeline; the dataset must already be on the analysis
/// scale (M-values for VMR).
struct PipelineResult
{
    ClusteringOutcome clustering;
    std::vector<CpGAssociation> stats;
    ScanResult scan;
    SignificanceRun significance;
};

PipelineResult run_pipeline(
    const AnalysisDataset& dataset,
    const RunConfig& config);

/// Result TSV in rank order.
std::string format_results(
    const RunConfig& config,
    const SignificanceRun& run);

int cmd_dmr(RunConfig config);
int cmd_vmr(RunConfig config);
int cmd_validate(RunConfig config);
int cmd_cluster_stats(RunConfig config);
int cmd_plot_data(RunConfig config);

}  // namespace dmseg
