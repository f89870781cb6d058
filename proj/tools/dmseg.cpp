// dmseg: differentially / variably methylated region calling with
// stratified permutation significance.

#include <CLI11.hpp>
#include <fmt/core.h>

#include <cstdio>
#include <string>
#include <vector>

#include "dmseg/error.hpp"
#include "dmseg/log.hpp"
#include "dmseg/pipeline.hpp"

namespace
{

struct CliState
{
    dmseg::RunConfig config;
    std::string scale = "beta";
    std::string covariates;
    std::string case_label;
    std::string config_file;
    bool quiet = false;
    bool verbose = false;
};

void add_common_options(CLI::App& sub, CliState& s)
{
    auto& c = s.config;
    sub.add_option("--config", s.config_file,
                   "key=value file; command-line flags override it");
    sub.add_option("--matrix", c.matrix, "methylation matrix (TSV/CSV)");
    sub.add_option("--phenotypes", c.phenotypes, "phenotype table (TSV/CSV)");
    sub.add_option("--manifest", c.manifest,
                   "probe manifest with probe_id, chromosome, position");
    sub.add_option("--out", c.out_dir, "output directory");
    sub.add_option("--group-column", c.group_column, "binary group column");
    sub.add_option("--covariates", s.covariates,
                   "comma-separated numeric covariate columns");
    sub.add_option("--case-label", s.case_label,
                   "group label coded as 1 (default: lexicographically larger)");
    sub.add_option("--scale", s.scale, "beta or mvalue");
    sub.add_option("--max-gap", c.max_gap, "join CpGs closer than this (bp)");
    sub.add_option("--corr-min", c.corr_min,
                   "join adjacent CpGs correlated above this");
    sub.add_flag("--corr-auto", c.corr_auto,
                 "use the median adjacent correlation within gap clusters");
    sub.add_option("--min-cluster-size", c.min_cluster_size,
                   "drop clusters with fewer CpGs");
    sub.add_option("--z-main", c.z_main, "|z| threshold for a hit");
    sub.add_option("--z-bridge", c.z_bridge,
                   "|z| threshold for a single bridging CpG");
    sub.add_option("--min-cpgs", c.min_cpgs, "minimum CpGs per segment");
    sub.add_option("--permutations", c.permutations, "label permutations B");
    sub.add_option("--seed", c.seed, "permutation seed");
    sub.add_option("--strata", c.strata,
                   "cluster-size strata upper bounds, e.g. 10,20,40");
    sub.add_option("--threads", c.threads, "worker threads")
        ->envname("DMSEG_THREADS");
    sub.add_option("--cpg-stats", c.cpg_stats,
                   "also write per-CpG beta1, se, z to this file");
    sub.add_flag("--quiet", s.quiet, "no log output");
    sub.add_flag("--verbose", s.verbose, "debug log output");
}

/// Splices key=value lines of --config in front of the user's flags so the
/// latter win.
std::vector<std::string> expand_config(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i)
    {
        if (args[i] == "--config" && i + 1 < args.size())
        {
            path = args[i + 1];
        }
        else if (args[i].rfind("--config=", 0) == 0)
        {
            path = args[i].substr(9);
        }
    }
    if (path.empty() || args.empty())
    {
        return args;
    }
    std::vector<std::string> injected;
    for (const auto& [key, value] : dmseg::read_config_file(path))
    {
        if (!value.empty())
        {
            injected.push_back("--" + key + "=" + value);
        }
    }
    args.insert(args.begin() + 1, injected.begin(), injected.end());
    return args;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"dmseg: DMR/VMR detection with permutation FWER"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", dmseg::kVersion);

    CliState s;
    auto* dmr = app.add_subcommand("dmr", "differentially methylated regions");
    auto* vmr = app.add_subcommand("vmr", "variably methylated regions");
    auto* validate = app.add_subcommand(
        "validate", "re-test previously found regions in another dataset");
    auto* cluster_stats
        = app.add_subcommand("cluster-stats", "write the CpG cluster table");
    auto* plot_data = app.add_subcommand(
        "plot-data", "per-CpG data behind one reported segment");
    for (auto* sub : {dmr, vmr, validate, cluster_stats, plot_data})
    {
        add_common_options(*sub, s);
    }
    std::string validate_mode = "dmr";
    validate->add_option("--regions", s.config.regions,
                         "TSV with chromosome, start_pos, end_pos")
        ->required();
    validate->add_option("--mode", validate_mode, "dmr or vmr");
    plot_data->add_option("--results", s.config.results, "results TSV")
        ->required();
    plot_data->add_option("--rank", s.config.rank, "rank of the segment")
        ->required();

    try
    {
        auto args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    }
    catch (const CLI::ParseError& e)
    {
        return app.exit(e);
    }
    catch (const dmseg::Error& e)
    {
        fmt::print(stderr, "dmseg: error={} message=\"{}\"\n",
                   dmseg::error_name(e.code()), e.what());
        return 1;
    }

    dmseg::log::set_level(s.quiet     ? dmseg::log::Level::quiet
                          : s.verbose ? dmseg::log::Level::debug
                                      : dmseg::log::Level::info);
    try
    {
        auto& c = s.config;
        c.scale = dmseg::parse_scale(s.scale);
        c.covariates.clear();
        std::string item;
        for (const char ch : s.covariates + ",")
        {
            if (ch == ',')
            {
                if (!item.empty())
                {
                    c.covariates.push_back(item);
                }
                item.clear();
            }
            else
            {
                item += ch;
            }
        }
        if (!s.case_label.empty())
        {
            c.case_label = s.case_label;
        }
        if (*dmr)
        {
            return dmseg::cmd_dmr(c);
        }
        if (*vmr)
        {
            return dmseg::cmd_vmr(c);
        }
        if (*validate)
        {
            c.mode = dmseg::parse_mode(validate_mode);
            return dmseg::cmd_validate(c);
        }
        if (*cluster_stats)
        {
            return dmseg::cmd_cluster_stats(c);
        }
        return dmseg::cmd_plot_data(c);
    }
    catch (const dmseg::Error& e)
    {
        fmt::print(stderr, "dmseg: error={} message=\"{}\"\n",
                   dmseg::error_name(e.code()), e.what());
        return 1;
    }
    catch (const std::exception& e)
    {
        fmt::print(stderr, "dmseg: error=Internal message=\"{}\"\n", e.what());
        return 1;
    }
}
