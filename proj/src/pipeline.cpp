#include "dmseg/pipeline.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <map>

#include "dmseg/error.hpp"
#include "dmseg/log.hpp"
#include "table_reader.hpp"

namespace dmseg
{

namespace
{

class PhaseTimer
{
   public:
    explicit PhaseTimer(std::string name)
        : name_(std::move(name)), start_(std::chrono::steady_clock::now())
    {
    }
    ~PhaseTimer()
    {
        const std::chrono::duration<double> elapsed
            = std::chrono::steady_clock::now() - start_;
        log::info("phase {}: {:.2f} s", name_, elapsed.count());
    }
    PhaseTimer(const PhaseTimer&) = delete;
    PhaseTimer& operator=(const PhaseTimer&) = delete;

   private:
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

std::string join(const std::vector<std::string>& items, char sep)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        if (i > 0)
        {
            out += sep;
        }
        out += items[i];
    }
    return out;
}

std::size_t find_header(
    const std::vector<std::string>& header,
    std::initializer_list<std::string_view> names,
    const std::string& path)
{
    for (const auto name : names)
    {
        const auto it = std::ranges::find(header, name);
        if (it != header.end())
        {
            return static_cast<std::size_t>(it - header.begin());
        }
    }
    throw Error(ErrorCode::missing_column,
                fmt::format("{}: no column named {}", path,
                            *names.begin()));
}

std::int64_t to_int(std::string_view s, const detail::DelimitedReader& reader)
{
    try
    {
        std::size_t used = 0;
        const std::string text(s);
        const auto v = std::stoll(text, &used);
        if (used == text.size())
        {
            return v;
        }
    }
    catch (const std::exception&)
    {
    }
    reader.fail(ErrorCode::parse,
                fmt::format("cannot parse '{}' as an integer", s));
}

std::filesystem::path output_path(const RunConfig& config,
                                  const std::string& name)
{
    std::filesystem::create_directories(config.out_dir);
    return std::filesystem::path(config.out_dir) / name;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
    {
        throw Error(ErrorCode::io, "cannot write " + path.string());
    }
    out << text;
}

std::string format_p(double p, std::size_t total_draws)
{
    const double floor = 1.0 / static_cast<double>(1 + total_draws);
    if (p <= floor)
    {
        return fmt::format("<{:.3g}", floor);
    }
    return fmt::format("{:.6g}", p);
}

std::string format_fwer(double f, std::size_t n_permutations)
{
    if (f <= 0.0)
    {
        return fmt::format("<{:.3g}", 1.0 / static_cast<double>(n_permutations));
    }
    return fmt::format("{:.6g}", f);
}

void write_cpg_stats(const RunConfig& config,
                     const AnalysisDataset& dataset,
                     const std::vector<CpGAssociation>& stats)
{
    std::string text = output_header(config) + "\n";
    text += "probe_id\tbeta1\tse\tz\tdegenerate\n";
    for (std::size_t i = 0; i < stats.size(); ++i)
    {
        const auto& s = stats[i];
        text += fmt::format("{}\t{:.10g}\t{:.10g}\t{:.10g}\t{}\n",
                            dataset.annotations()[i].probe_id, s.beta1, s.se,
                            s.z, s.degenerate ? 1 : 0);
    }
    const std::filesystem::path path(config.cpg_stats);
    if (path.has_parent_path())
    {
        std::filesystem::create_directories(path.parent_path());
    }
    write_text(path, text);
}

}  // namespace

void RunConfig::validate() const
{
    auto fail = [](const std::string& what)
    { throw Error(ErrorCode::invalid_config, what); };
    if (permutations < 1)
    {
        fail("permutations must be >= 1");
    }
    if (!(corr_min > 0.0 && corr_min <= 1.0))
    {
        fail("corr-min must lie in (0, 1]");
    }
    if (!(z_bridge > 0.0 && z_bridge <= z_main))
    {
        fail("z-bridge must satisfy 0 < z-bridge <= z-main");
    }
    if (max_gap < 1)
    {
        fail("max-gap must be >= 1");
    }
    if (min_cpgs < 1 || min_cluster_size < 1)
    {
        fail("min-cpgs and min-cluster-size must be >= 1");
    }
    if (threads < 1)
    {
        fail("threads must be >= 1");
    }
    Strata::parse(strata);
}

std::string serialize(const RunConfig& c)
{
    std::string out;
    auto put = [&out](std::string_view key, const auto& value)
    { out += fmt::format("{}={}\n", key, value); };
    put("matrix", c.matrix);
    put("phenotypes", c.phenotypes);
    put("manifest", c.manifest);
    put("out", c.out_dir);
    put("group-column", c.group_column);
    put("covariates", join(c.covariates, ','));
    put("case-label", c.case_label.value_or(""));
    put("scale", to_string(c.scale));
    put("max-gap", c.max_gap);
    put("corr-min", c.corr_min);
    put("corr-auto", c.corr_auto ? "true" : "false");
    put("min-cluster-size", c.min_cluster_size);
    put("z-main", c.z_main);
    put("z-bridge", c.z_bridge);
    put("min-cpgs", c.min_cpgs);
    put("permutations", c.permutations);
    put("seed", c.seed);
    put("strata", c.strata);
    put("threads", c.threads);
    put("cpg-stats", c.cpg_stats);
    return out;
}

std::uint64_t config_hash(const RunConfig& config)
{
    RunConfig c = config;
    c.threads = 1;
    c.out_dir.clear();
    c.cpg_stats.clear();
    std::string text = serialize(c);
    text += fmt::format("mode={}\n", to_string(c.mode));
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char ch : text)
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string output_header(const RunConfig& config)
{
    return fmt::format("# dmseg {} config_hash={:016x} seed={}", kVersion,
                       config_hash(config), config.seed);
}

std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw Error(ErrorCode::io, "cannot open config " + path.string());
    }
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t number = 0;
    auto trim = [](std::string s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line))
    {
        ++number;
        line = trim(line);
        if (line.empty() || line.front() == '#')
        {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
        {
            throw Error(ErrorCode::parse,
                        fmt::format("{}:{}: expected key=value", path.string(),
                                    number));
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

AnalysisDataset load_dataset(const RunConfig& config)
{
    PhaseTimer timer("load");
    auto matrix = load_methylation_matrix(config.matrix, config.scale);
    const auto phenotypes = load_phenotypes(
        config.phenotypes, config.group_column, config.covariates,
        config.case_label);
    const auto manifest = load_manifest(config.manifest);
    auto dataset = align(matrix, manifest, phenotypes);
    log::info("dataset: {} CpGs x {} samples ({} scale)", dataset.n_cpgs(),
              dataset.n_samples(), to_string(dataset.scale()));
    if (config.mode == Mode::vmr && dataset.scale() == Scale::beta)
    {
        log::info("VMR analysis: converting beta values to M-values");
        dataset = dataset.to_mvalues();
    }
    return dataset;
}

ClusteringOutcome cluster_dataset(const AnalysisDataset& dataset,
                                  const RunConfig& config)
{
    PhaseTimer timer("cluster");
    ClusteringOutcome out;
    const auto pairs = adjacent_pair_stats(dataset);
    out.corr_min = config.corr_min;
    if (config.corr_auto)
    {
        out.corr_min = median_gap_correlation(pairs, config.max_gap);
        log::info("corr-auto: median adjacent correlation within gap "
                  "clusters = {:.4f}",
                  out.corr_min);
    }
    auto params = config.cluster_params();
    params.corr_min = out.corr_min;
    out.all = build_clusters(dataset, pairs, params);
    out.kept = filter_clusters(out.all, config.min_cluster_size);

    ClusterParams gap_only = params;
    gap_only.corr_min = std::numeric_limits<double>::infinity();
    out.summary.gap_only = build_clusters(dataset, pairs, gap_only).size();
    out.summary.merged = out.all.size();
    for (const auto& c : out.all)
    {
        out.summary.joined_by_correlation += c.correlation_joins;
    }
    out.summary.after_filter = out.kept.size();
    log::info("clusters: {} by gap only, {} after correlation merging ({} "
              "correlation joins), {} with >= {} CpGs",
              out.summary.gap_only, out.summary.merged,
              out.summary.joined_by_correlation, out.summary.after_filter,
              config.min_cluster_size);
    return out;
}

PipelineResult run_pipeline(const AnalysisDataset& dataset,
                            const RunConfig& config)
{
    config.validate();
    const Strata strata = Strata::parse(config.strata);
    PipelineResult result;
    result.clustering = cluster_dataset(dataset, config);
    {
        PhaseTimer timer("association");
        const auto design = DesignSummary::build(dataset.phenotypes());
        log::info("design: {} samples, {} predictors, {} residual df",
                  design.n_samples(), design.n_predictors(),
                  design.residual_df());
        result.stats = association_stats(
            dataset, dataset.phenotypes().group, config.mode, config.threads);
        const auto n_degenerate = std::ranges::count_if(
            result.stats, [](const CpGAssociation& s) { return s.degenerate; });
        if (n_degenerate > 0)
        {
            log::info("{} degenerate CpGs excluded from the search",
                      n_degenerate);
        }
    }
    {
        PhaseTimer timer("segment search");
        result.scan = scan_dataset(result.clustering.kept, result.stats,
                                   config.search_params(), config.mode);
        log::info("{} candidate {} segments", result.scan.segments.size(),
                  to_string(config.mode));
    }
    {
        PhaseTimer timer("permutation");
        result.significance = run_significance(
            dataset, result.clustering.kept, result.scan.segments,
            config.permutations, config.seed, config.mode,
            config.search_params(), strata, config.threads);
    }
    return result;
}

std::string format_results(const RunConfig& config,
                           const SignificanceRun& run)
{
    std::string text = output_header(config) + "\n";
    text += "rank\tmode\tchromosome\tstart_probe\tend_probe\tstart_pos\t"
            "end_pos\tn_cpgs\tsegment_mean\tlrt\tp_value\tfwer\n";
    for (std::size_t i = 0; i < run.results.size(); ++i)
    {
        const auto& r = run.results[i];
        text += fmt::format(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6g}\t{:.4f}\t{}\t{}\n", i + 1,
            to_string(r.segment.mode), r.chromosome, r.start_probe,
            r.end_probe, r.start_position, r.end_position, r.segment.n_cpgs(),
            r.segment.segment_mean, r.segment.lrt,
            format_p(r.p_value, run.null.pools[r.stratum].total_draws()),
            format_fwer(r.fwer, run.n_permutations));
    }
    return text;
}

namespace
{

int run_region_mode(RunConfig config, Mode mode)
{
    config.mode = mode;
    config.validate();
    const auto dataset = load_dataset(config);
    const auto result = run_pipeline(dataset, config);
    if (!config.cpg_stats.empty())
    {
        write_cpg_stats(config, dataset, result.stats);
    }
    const auto name = std::string(to_string(mode));
    write_text(output_path(config, name + "_results.tsv"),
               format_results(config, result.significance));
    write_text(output_path(config, name + "_config.txt"), serialize(config));

    std::size_t significant = 0;
    for (const auto& r : result.significance.results)
    {
        significant += r.fwer < 0.05 ? 1 : 0;
    }
    log::info("{} {} regions with FWER < 0.05", significant, name);
    const auto& results = result.significance.results;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, results.size()); ++i)
    {
        const auto& r = results[i];
        log::info("  #{} {}:{}-{} n={} mean={:.4g} lrt={:.2f} p={:.4g} "
                  "fwer={:.4g}",
                  i + 1, r.chromosome, r.start_position, r.end_position,
                  r.segment.n_cpgs(), r.segment.segment_mean, r.segment.lrt,
                  r.p_value, r.fwer);
    }
    return 0;
}

struct Region
{
    std::string chromosome;
    std::int64_t start = 0;
    std::int64_t end = 0;
};

std::vector<Region> load_regions(const std::filesystem::path& path)
{
    detail::DelimitedReader reader(path, delimiter_for(path));
    std::vector<std::string_view> fields;
    if (!reader.next(fields))
    {
        throw Error(ErrorCode::parse, path.string() + ": empty file");
    }
    const std::vector<std::string> header(fields.begin(), fields.end());
    const auto chr = find_header(header, {"chromosome", "chr"}, reader.path());
    const auto start = find_header(
        header, {"start_pos", "start_position", "start"}, reader.path());
    const auto end = find_header(header, {"end_pos", "end_position", "end"},
                                 reader.path());
    std::vector<Region> out;
    while (reader.next(fields))
    {
        if (fields.size() != header.size())
        {
            reader.fail(ErrorCode::parse, "field count differs from header");
        }
        Region r;
        r.chromosome = std::string(fields[chr]);
        r.start = to_int(fields[start], reader);
        r.end = to_int(fields[end], reader);
        if (r.end < r.start)
        {
            reader.fail(ErrorCode::parse, "region end precedes start");
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

int cmd_dmr(RunConfig config) { return run_region_mode(std::move(config), Mode::dmr); }

int cmd_vmr(RunConfig config) { return run_region_mode(std::move(config), Mode::vmr); }

int cmd_validate(RunConfig config)
{
    config.validate();
    if (config.regions.empty())
    {
        throw Error(ErrorCode::invalid_config, "validate needs --regions");
    }
    const auto regions = load_regions(config.regions);
    const auto dataset = load_dataset(config);
    const auto& ann = dataset.annotations();
    const auto clustering = cluster_dataset(dataset, config);

    // Clusters overlapping each region, and their union in id order.
    std::vector<std::vector<std::size_t>> overlaps(regions.size());
    std::vector<Cluster> selected;
    for (std::size_t r = 0; r < regions.size(); ++r)
    {
        for (const auto& c : clustering.kept)
        {
            if (c.chromosome != regions[r].chromosome
                || ann[c.last()].position < regions[r].start
                || ann[c.first].position > regions[r].end)
            {
                continue;
            }
            overlaps[r].push_back(c.cluster_id);
            selected.push_back(c);
        }
    }
    std::ranges::sort(selected, {}, &Cluster::cluster_id);
    const auto dup = std::ranges::unique(selected, {}, &Cluster::cluster_id);
    selected.erase(dup.begin(), dup.end());
    log::info("{} of {} regions overlap {} clusters", std::ranges::count_if(
                  overlaps, [](const auto& o) { return !o.empty(); }),
              regions.size(), selected.size());

    std::map<std::size_t, std::vector<RegionResult>> by_cluster;
    std::size_t n_permutations = config.permutations;
    std::map<std::size_t, std::size_t> draws_of_stratum;
    if (!selected.empty())
    {
        const auto stats = association_stats(
            dataset, dataset.phenotypes().group, config.mode, config.threads);
        const auto scan = scan_dataset(selected, stats, config.search_params(),
                                       config.mode);
        const auto run = run_significance(
            dataset, selected, scan.segments, config.permutations,
            config.seed, config.mode, config.search_params(),
            Strata::parse(config.strata), config.threads);
        for (const auto& pool : run.null.pools)
        {
            draws_of_stratum[pool.stratum] = pool.total_draws();
        }
        for (const auto& r : run.results)
        {
            by_cluster[r.segment.cluster_id].push_back(r);
        }
    }

    std::string text = output_header(config) + "\n";
    text += "region_chromosome\tregion_start\tregion_end\tstatus\tcluster_id\t"
            "n_region_cpgs\tn_cpgs\tsegment_mean\tlrt\tp_value\n";
    for (std::size_t r = 0; r < regions.size(); ++r)
    {
        const auto& region = regions[r];
        std::size_t in_region = 0;
        for (const auto& a : ann)
        {
            in_region += a.chromosome == region.chromosome
                                 && a.position >= region.start
                                 && a.position <= region.end
                             ? 1
                             : 0;
        }
        if (overlaps[r].empty())
        {
            text += fmt::format("{}\t{}\t{}\tNoOverlap\tNA\t{}\t0\tNA\tNA\tNA\n",
                                region.chromosome, region.start, region.end,
                                in_region);
            continue;
        }
        for (const auto id : overlaps[r])
        {
            auto segments = by_cluster[id];
            std::ranges::sort(segments, {}, [](const RegionResult& x)
                              { return x.segment.start_index; });
            std::size_t n_cpgs = 0;
            std::vector<std::string> means;
            const RegionResult* best = nullptr;
            for (const auto& s : segments)
            {
                n_cpgs += s.segment.n_cpgs();
                means.push_back(fmt::format("{:.4g}", s.segment.segment_mean));
                if (best == nullptr || s.segment.lrt > best->segment.lrt)
                {
                    best = &s;
                }
            }
            if (best == nullptr)
            {
                text += fmt::format("{}\t{}\t{}\tNoSegment\t{}\t{}\t0\tNA\t0\t1\n",
                                    region.chromosome, region.start,
                                    region.end, id, in_region);
                continue;
            }
            text += fmt::format(
                "{}\t{}\t{}\tOK\t{}\t{}\t{}\t{}\t{:.4f}\t{}\n",
                region.chromosome, region.start, region.end, id, in_region,
                n_cpgs, join(means, ';'), best->segment.lrt,
                format_p(best->p_value, draws_of_stratum[best->stratum]));
        }
    }
    write_text(output_path(config, "validation.tsv"), text);
    write_text(output_path(config, "validate_config.txt"), serialize(config));
    return 0;
}

int cmd_cluster_stats(RunConfig config)
{
    config.validate();
    const auto dataset = load_dataset(config);
    const auto clustering = cluster_dataset(dataset, config);
    const auto& ann = dataset.annotations();
    std::string text = output_header(config) + "\n";
    text += "cluster_id\tchromosome\tstart_position\tend_position\tn_cpgs\t"
            "correlation_joins\n";
    for (const auto& c : clustering.all)
    {
        text += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", c.cluster_id,
                            c.chromosome, ann[c.first].position,
                            ann[c.last()].position, c.size,
                            c.correlation_joins);
    }
    write_text(output_path(config, "cluster_stats.tsv"), text);
    return 0;
}

int cmd_plot_data(RunConfig config)
{
    if (config.results.empty())
    {
        throw Error(ErrorCode::invalid_config, "plot-data needs --results");
    }
    detail::DelimitedReader reader(config.results, '\t');
    std::vector<std::string_view> fields;
    if (!reader.next(fields))
    {
        throw Error(ErrorCode::parse, config.results + ": empty file");
    }
    const std::vector<std::string> header(fields.begin(), fields.end());
    const auto rank_col = find_header(header, {"rank"}, reader.path());
    const auto mode_col = find_header(header, {"mode"}, reader.path());
    const auto chr_col = find_header(header, {"chromosome"}, reader.path());
    const auto start_col = find_header(header, {"start_pos"}, reader.path());
    const auto end_col = find_header(header, {"end_pos"}, reader.path());
    std::optional<Region> region;
    while (reader.next(fields))
    {
        if (fields.size() != header.size())
        {
            reader.fail(ErrorCode::parse, "field count differs from header");
        }
        if (to_int(fields[rank_col], reader)
            == static_cast<std::int64_t>(config.rank))
        {
            config.mode = parse_mode(fields[mode_col]);
            region = Region{std::string(fields[chr_col]),
                            to_int(fields[start_col], reader),
                            to_int(fields[end_col], reader)};
            break;
        }
    }
    if (!region)
    {
        throw Error(ErrorCode::unknown_segment,
                    fmt::format("no segment with rank {} in {}", config.rank,
                                config.results));
    }
    config.validate();
    const auto dataset = load_dataset(config);
    const auto stats = association_stats(
        dataset, dataset.phenotypes().group, config.mode, config.threads);
    const auto& group = dataset.phenotypes().group;
    const auto& values = dataset.values();
    std::string text = output_header(config) + "\n";
    text += "probe_id\tposition\tgroup0_mean\tgroup1_mean\tdifference\tz\n";
    std::size_t rows = 0;
    for (std::size_t i = 0; i < dataset.n_cpgs(); ++i)
    {
        const auto& a = dataset.annotations()[i];
        if (a.chromosome != region->chromosome || a.position < region->start
            || a.position > region->end)
        {
            continue;
        }
        double sum0 = 0.0;
        double sum1 = 0.0;
        std::size_t n1 = 0;
        for (std::size_t s = 0; s < group.size(); ++s)
        {
            (group[s] ? sum1 : sum0) += values(i, s);
            n1 += group[s];
        }
        const double m0 = sum0 / static_cast<double>(group.size() - n1);
        const double m1 = sum1 / static_cast<double>(n1);
        text += fmt::format("{}\t{}\t{:.6g}\t{:.6g}\t{:.6g}\t{:.6g}\n",
                            a.probe_id, a.position, m0, m1, m1 - m0,
                            stats[i].z);
        ++rows;
    }
    if (rows == 0)
    {
        throw Error(ErrorCode::unknown_segment,
                    "segment coordinates match no CpG in the dataset");
    }
    write_text(output_path(config,
                           fmt::format("plot_data_rank{}.tsv", config.rank)),
               text);
    return 0;
}

}  // namespace dmseg
