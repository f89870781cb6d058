// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if
// any criterion fails.

#include <fmt/format.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "dmseg/assoc.hpp"
#include "dmseg/cluster.hpp"
#include "dmseg/log.hpp"
#include "dmseg/pipeline.hpp"
#include "dmseg/segment.hpp"
#include "dmseg/significance.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace dmseg;

namespace
{

// Pinned tolerances and bands.
constexpr double kLrtIdentityRelTol = 1e-9;
constexpr double kExactRelTol = 4.0 * 2.220446049250313e-16;
constexpr double kOlsRelTol = 1e-10;
constexpr double kNullBandHigh = 0.12;
constexpr double kPowerFloorAt015 = 0.9;
constexpr double kVmrShiftCleanFloor = 0.95;
constexpr double kVmrDetectFloor = 0.8;
constexpr double kSignificant = 0.05;

constexpr double kLrtSeconds = 5.0;
constexpr double kOlsSeconds = 30.0;
constexpr double kThroughputSeconds = 300.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome
{
    bool pass = false;
    std::string detail;
};

double rel_err(double got, double want, double scale)
{
    return scale == 0.0 ? std::fabs(got - want) : std::fabs(got - want) / scale;
}

// ---------------------------------------------------------------------------

Outcome lrt_identity()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> var_dist(1e-3, 5.0);
    double worst = 0.0;
    double worst_single = 0.0;
    double worst_homo = 0.0;
    bool nonneg = true;
    for (int trial = 0; trial < 10000; ++trial)
    {
        const std::size_t len = 1 + rng() % 100;
        std::vector<double> b(len);
        std::vector<double> v(len);
        for (std::size_t j = 0; j < len; ++j)
        {
            b[j] = normal(rng);
            v[j] = var_dist(rng);
        }
        const auto s = lrt_score(b, v);
        const double q = oracle::lrt_quadratic_form(b, v);
        worst = std::max(worst, rel_err(s.lrt, q, std::fabs(q)));
        nonneg = nonneg && s.lrt >= 0.0;

        const double z = b[0] / std::sqrt(v[0]);
        const auto one = lrt_score(std::span(b).first(1), std::span(v).first(1));
        worst_single = std::max(worst_single, rel_err(one.lrt, z * z, z * z));

        const std::vector<double> hb(len, b[0]);
        const std::vector<double> hv(len, v[0]);
        const double want = static_cast<double>(len) * b[0] * b[0] / v[0];
        worst_homo = std::max(worst_homo,
                              rel_err(lrt_score(hb, hv).lrt, want, want));
    }
    const double secs = seconds_since(t0);
    return {worst <= kLrtIdentityRelTol && worst_single <= kExactRelTol
                && worst_homo <= kExactRelTol && nonneg && secs < kLrtSeconds,
            fmt::format("max rel err quadratic form {:.2e} (tol {:.0e}), "
                        "single-CpG {:.2e}, homoscedastic {:.2e} (tol {:.1e}), "
                        "{:.2f} s",
                        worst, kLrtIdentityRelTol, worst_single, worst_homo,
                        kExactRelTol, secs)};
}

Outcome ols_oracle()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2002);
    std::normal_distribution<double> normal;
    double worst_beta = 0.0;
    double worst_se = 0.0;
    std::size_t n_fits = 0;
    for (int trial = 0; trial < 200; ++trial)
    {
        const std::size_t n = 10 + rng() % 91;
        const std::size_t p = 5 + rng() % 46;
        const std::size_t k = rng() % 4;
        std::vector<std::uint8_t> g(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            g[i] = i < n / 2 ? 0 : 1;
        }
        std::ranges::shuffle(g, rng);
        Eigen::MatrixXd cov(static_cast<Eigen::Index>(n),
                            static_cast<Eigen::Index>(k));
        std::vector<std::vector<double>> design(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            design[i] = {1.0, static_cast<double>(g[i])};
            for (std::size_t c = 0; c < k; ++c)
            {
                const double x = normal(rng) * 10.0 + 40.0;
                cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c))
                    = x;
                design[i].push_back(x);
            }
        }
        RowMatrix y(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
        for (Eigen::Index r = 0; r < y.rows(); ++r)
        {
            const double effect = normal(rng) * 0.3;
            for (Eigen::Index i = 0; i < y.cols(); ++i)
            {
                y(r, i) = normal(rng) * 0.5 + effect * g[static_cast<std::size_t>(i)];
            }
        }
        const auto fit = fit_rows(y, DesignSummary::build(g, cov));
        for (Eigen::Index r = 0; r < y.rows(); ++r)
        {
            const std::vector<double> row(y.row(r).data(),
                                          y.row(r).data() + n);
            const auto ref = oracle::naive_ols(design, row);
            const auto& got = fit[static_cast<std::size_t>(r)];
            worst_beta = std::max(
                worst_beta, rel_err(got.beta1, ref.beta1,
                                    std::max(std::fabs(ref.beta1), ref.se)));
            worst_se = std::max(worst_se, rel_err(got.se, ref.se, ref.se));
            ++n_fits;
        }
    }
    const double secs = seconds_since(t0);
    return {worst_beta <= kOlsRelTol && worst_se <= kOlsRelTol
                && secs < kOlsSeconds,
            fmt::format("{} CpG fits, max rel err beta1 {:.2e}, se {:.2e} "
                        "(tol {:.0e}), {:.2f} s",
                        n_fits, worst_beta, worst_se, kOlsRelTol, secs)};
}

std::vector<std::size_t> partition_labels(const std::vector<Cluster>& clusters,
                                          std::size_t n)
{
    std::vector<std::size_t> label(n, n);
    for (const auto& c : clusters)
    {
        for (std::size_t i = c.first; i < c.end(); ++i)
        {
            label[i] = c.first;
        }
    }
    return label;
}

Outcome cluster_oracle()
{
    std::mt19937_64 rng(3003);
    std::normal_distribution<double> normal;
    std::size_t mismatches = 0;
    std::size_t gap_mismatches = 0;
    std::size_t total_rows = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        const std::size_t n_rows = 5 + rng() % 150;
        const std::size_t n_samples = 5 + rng() % 20;
        std::vector<std::vector<double>> rows;
        std::vector<std::int64_t> pos;
        std::vector<std::string> chr;
        std::vector<double> latent(n_samples);
        std::int64_t p = 0;
        int c = 1;
        for (std::size_t r = 0; r < n_rows; ++r)
        {
            if (rng() % 20 == 0)
            {
                ++c;
                p = 0;
            }
            p += 1 + static_cast<std::int64_t>(rng() % 1500);
            pos.push_back(p);
            chr.push_back(fmt::format("chr{:02}", c));
            if (rng() % 3 == 0)
            {
                for (auto& l : latent)
                {
                    l = normal(rng);
                }
            }
            const double w = static_cast<double>(rng() % 100) / 100.0;
            std::vector<double> row(n_samples);
            for (std::size_t i = 0; i < n_samples; ++i)
            {
                row[i] = w * latent[i] + (1.0 - w) * normal(rng);
            }
            rows.push_back(std::move(row));
        }
        const auto d = testing::make_dataset(rows, pos, chr);
        const std::int64_t max_gap = 100 + static_cast<std::int64_t>(rng() % 900);
        const double corr_min = 0.2 + 0.7 * static_cast<double>(rng() % 100) / 100.0;
        const auto pairs = adjacent_pair_stats(d);

        const auto got = build_clusters(d, pairs, {max_gap, corr_min});
        const auto want = oracle::brute_partition(
            n_rows,
            [&](std::size_t k)
            {
                return chr[k] == chr[k + 1]
                       && (pos[k + 1] - pos[k] < max_gap
                           || oracle::pearson(rows[k], rows[k + 1]) > corr_min);
            });
        const auto labels = partition_labels(got, n_rows);
        for (std::size_t i = 0; i < n_rows; ++i)
        {
            mismatches += labels[i] != want[i] ? 1 : 0;
        }

        const auto gap_only = build_clusters(d, pairs, {max_gap, 1.5});
        const auto g = oracle::gap_scan(chr, pos, max_gap);
        const auto gl = partition_labels(gap_only, n_rows);
        for (std::size_t i = 1; i < n_rows; ++i)
        {
            gap_mismatches += (gl[i] == gl[i - 1]) != (g[i] == g[i - 1]) ? 1 : 0;
        }
        total_rows += n_rows;
    }
    return {mismatches == 0 && gap_mismatches == 0,
            fmt::format("100 fixtures, {} rows: {} partition mismatches vs "
                        "brute force, {} vs gap scan",
                        total_rows, mismatches, gap_mismatches)};
}

Outcome segment_oracle()
{
    std::mt19937_64 rng(4004);
    std::normal_distribution<double> normal;
    const std::vector<double> levels = {0.0, 1.0, 1.63, 1.64, 1.8, 1.95,
                                        1.96, 2.2, 3.5};
    std::size_t mismatched_vectors = 0;
    std::size_t n_spans = 0;
    for (int trial = 0; trial < 500; ++trial)
    {
        const std::size_t n = 1 + rng() % 30;
        std::vector<double> z(n);
        for (auto& v : z)
        {
            v = rng() % 2 ? levels[rng() % levels.size()] : 2.0 * normal(rng);
            v *= rng() % 2 ? 1.0 : -1.0;
        }
        std::vector<CpGAssociation> stats(n + 3);
        for (std::size_t i = 0; i < n; ++i)
        {
            stats[i + 3] = {z[i], 1.0, z[i], false};
        }
        const Cluster cluster{0, "chr1", 3, n, 0};
        const std::size_t min_cpgs = 1 + rng() % 3;
        const auto got = find_candidates(cluster, stats, {1.96, 1.64, min_cpgs});
        const auto want = oracle::exhaustive_spans(z, 1.96, 1.64, min_cpgs);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
        {
            same = got[i].start_index == want[i].start + 3
                   && got[i].end_index == want[i].end + 3;
        }
        mismatched_vectors += same ? 0 : 1;
        n_spans += want.size();
    }
    return {mismatched_vectors == 0,
            fmt::format("500 z-vectors, {} oracle spans, {} mismatching vectors",
                        n_spans, mismatched_vectors)};
}

// ---------------------------------------------------------------------------
// Simulation criteria share one backbone layout.

const std::vector<std::size_t>& backbone_sizes()
{
    static const auto sizes = testing::default_cluster_sizes(7);
    return sizes;
}

/// Index of the first cluster with at least `min_size` CpGs whose size is
/// at most `max_size`.
std::size_t cluster_with_size(std::size_t min_size, std::size_t max_size)
{
    const auto& s = backbone_sizes();
    for (std::size_t k = 0; k < s.size(); ++k)
    {
        if (s[k] >= min_size && s[k] <= max_size)
        {
            return k;
        }
    }
    return 0;
}

RunConfig sim_config(Mode mode)
{
    RunConfig c;
    c.mode = mode;
    c.permutations = 200;
    c.seed = 99;
    c.threads = 1;
    return c;
}

bool overlaps_block(const RegionResult& r, std::size_t first, std::size_t n,
                    std::size_t min_overlap = 1)
{
    const auto lo = std::max(r.segment.start_index, first);
    const auto hi = std::min(r.segment.end_index, first + n - 1);
    return hi >= lo && hi - lo + 1 >= min_overlap;
}

bool any_significant(const PipelineResult& p)
{
    return std::ranges::any_of(p.significance.results, [](const auto& r)
                               { return r.fwer < kSignificant; });
}

Outcome null_calibration()
{
    const auto t0 = Clock::now();
    testing::BackboneSpec spec;
    spec.cluster_sizes = backbone_sizes();
    const auto config = sim_config(Mode::dmr);
    std::size_t hits = 0;
    std::size_t n_cpgs = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep)
    {
        const auto d = testing::make_backbone(spec, 50000 + rep);
        n_cpgs = d.n_cpgs();
        hits += any_significant(run_pipeline(d, config)) ? 1 : 0;
    }
    const double rate = static_cast<double>(hits) / 100.0;
    return {rate >= 0.0 && rate <= kNullBandHigh,
            fmt::format("{} CpGs, 32 vs 32, B=200: {} of 100 replicates with "
                        "any fwer<0.05 (rate {:.2f}, band [0, {:.2f}]), {:.1f} s",
                        n_cpgs, hits, rate, kNullBandHigh, seconds_since(t0))};
}

Outcome power_monotonicity()
{
    const auto t0 = Clock::now();
    const auto k = cluster_with_size(12, 20);
    const auto first = testing::cluster_offset(backbone_sizes(), k) + 1;
    const auto config = sim_config(Mode::dmr);
    std::vector<double> power;
    for (const double effect : {0.05, 0.10, 0.15})
    {
        testing::BackboneSpec spec;
        spec.cluster_sizes = backbone_sizes();
        spec.spikes = {{first, 10, effect, 1.0}};
        std::size_t detected = 0;
        for (std::uint64_t rep = 0; rep < 50; ++rep)
        {
            const auto d = testing::make_backbone(spec, 60000 + rep);
            const auto p = run_pipeline(d, config);
            detected += std::ranges::any_of(
                            p.significance.results,
                            [&](const RegionResult& r)
                            {
                                return r.fwer < kSignificant
                                       && overlaps_block(r, first, 10);
                            })
                            ? 1
                            : 0;
        }
        power.push_back(static_cast<double>(detected) / 50.0);
    }
    const bool monotone = power[0] <= power[1] && power[1] <= power[2];
    return {monotone && power[2] >= kPowerFloorAt015,
            fmt::format("power at beta shift 0.05/0.10/0.15 = {:.2f}/{:.2f}/{:.2f} "
                        "(non-decreasing, floor {:.2f} at 0.15), {:.1f} s",
                        power[0], power[1], power[2], kPowerFloorAt015,
                        seconds_since(t0))};
}

Outcome vmr_discrimination()
{
    const auto t0 = Clock::now();
    const auto k = cluster_with_size(8, 20);
    const auto first = testing::cluster_offset(backbone_sizes(), k) + 1;
    const auto config = sim_config(Mode::vmr);

    testing::BackboneSpec base;
    base.cluster_sizes = backbone_sizes();
    base.scale = Scale::mvalue;
    base.sd_min = 0.3;
    base.sd_max = 0.6;

    auto shift = base;
    shift.spikes = {{first, 6, 1.5, 1.0}};
    std::size_t clean_block = 0;
    std::size_t clean_genome = 0;
    for (std::uint64_t rep = 0; rep < 50; ++rep)
    {
        const auto p = run_pipeline(testing::make_backbone(shift, 70000 + rep),
                                    config);
        clean_block += std::ranges::none_of(
                           p.significance.results,
                           [&](const RegionResult& r)
                           {
                               return r.fwer < kSignificant
                                      && overlaps_block(r, first, 6);
                           })
                           ? 1
                           : 0;
        clean_genome += any_significant(p) ? 0 : 1;
    }

    auto inflate = base;
    inflate.spikes = {{first, 6, 0.0, 3.0}};
    std::size_t detected = 0;
    for (std::uint64_t rep = 0; rep < 50; ++rep)
    {
        const auto p = run_pipeline(
            testing::make_backbone(inflate, 80000 + rep), config);
        detected += std::ranges::any_of(p.significance.results,
                                        [&](const RegionResult& r)
                                        {
                                            return r.fwer < kSignificant
                                                   && overlaps_block(r, first,
                                                                     6, 4);
                                        })
                        ? 1
                        : 0;
    }
    const double clean_rate = static_cast<double>(clean_block) / 50.0;
    const double detect_rate = static_cast<double>(detected) / 50.0;
    return {clean_rate >= kVmrShiftCleanFloor && detect_rate >= kVmrDetectFloor,
            fmt::format("mean shift: {}/50 replicates without a VMR at the "
                        "shifted block ({}/50 with none anywhere); variance x3: "
                        "{}/50 cover >= 4 of 6 CpGs (floors {:.2f}, {:.2f}), "
                        "{:.1f} s",
                        clean_block, clean_genome, detected,
                        kVmrShiftCleanFloor, kVmrDetectFloor, seconds_since(t0))};
}

Outcome stratum_ordering()
{
    const auto t0 = Clock::now();
    testing::BackboneSpec spec;
    spec.cluster_sizes = backbone_sizes();
    const auto d = testing::make_backbone(spec, 90000);
    std::vector<Cluster> clusters;
    std::size_t first = 0;
    for (auto s : spec.cluster_sizes)
    {
        clusters.push_back({clusters.size(), "chr1", first, s, 0});
        first += s;
    }
    const auto scan = null_scan(d, clusters, make_plan(d.phenotypes(), 200, 3),
                                Mode::dmr);
    std::vector<double> q95;
    std::vector<double> rate;
    for (const auto& pool : scan.pools)
    {
        q95.push_back(pool.quantile(0.95));
        rate.push_back(pool.finding_rate());
    }
    bool increasing = true;
    for (std::size_t i = 1; i < q95.size(); ++i)
    {
        increasing = increasing && q95[i] > q95[i - 1] && rate[i] > rate[i - 1];
    }
    std::string cols;
    for (std::size_t i = 0; i < q95.size(); ++i)
    {
        cols += fmt::format("{}{} q95={:.1f} finding={:.1f}%",
                            i == 0 ? "" : "; ", scan.strata.label(i), q95[i],
                            100.0 * rate[i]);
    }
    return {increasing, fmt::format("{}, {:.1f} s", cols, seconds_since(t0))};
}

// ---------------------------------------------------------------------------
// CLI criteria.

int run_cli(const std::string& args)
{
    const auto cmd = fmt::format("\"{}\" {}", DMSEG_CLI_PATH, args);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string data_flags(const testing::DatasetFiles& f)
{
    return fmt::format("--matrix \"{}\" --phenotypes \"{}\" --manifest \"{}\"",
                       f.matrix.string(), f.phenotypes.string(),
                       f.manifest.string());
}

Outcome determinism()
{
    const auto dir = testing::temp_dir("acceptance_determinism");
    testing::BackboneSpec spec;
    spec.cluster_sizes = backbone_sizes();
    const auto k = cluster_with_size(12, 20);
    spec.spikes = {{testing::cluster_offset(backbone_sizes(), k), 8, 0.1, 1.0}};
    spec.n_covariates = 1;
    const auto files = testing::write_dataset(testing::make_backbone(spec, 5),
                                              dir / "in");
    const auto base = fmt::format("dmr {} --covariates cov0 --permutations 200 "
                                  "--seed 17 --quiet",
                                  data_flags(files));
    const int a = run_cli(fmt::format("{} --threads 1 --out \"{}\"", base,
                                      (dir / "t1").string()));
    const int b = run_cli(fmt::format("{} --threads 8 --out \"{}\"", base,
                                      (dir / "t8").string()));
    const auto r1 = slurp(dir / "t1" / "dmr_results.tsv");
    const auto r8 = slurp(dir / "t8" / "dmr_results.tsv");
    const auto rows = static_cast<std::size_t>(std::ranges::count(r1, '\n'));
    return {a == 0 && b == 0 && !r1.empty() && r1 == r8,
            fmt::format("--threads 1 vs 8: exit {}/{}, {} lines, {} bytes, {}",
                        a, b, rows, r1.size(),
                        r1 == r8 ? "byte-identical" : "DIFFERENT")};
}

Outcome throughput()
{
    const auto dir = testing::temp_dir("acceptance_throughput");
    testing::BackboneSpec spec;
    std::uint64_t seed = 100;
    std::size_t total = 0;
    while (total < 30000)
    {
        for (auto s : testing::default_cluster_sizes(seed++))
        {
            const auto take = std::min(s, 30000 - total);
            if (take == 0)
            {
                break;
            }
            spec.cluster_sizes.push_back(take);
            total += take;
        }
    }
    spec.spikes = {{100, 10, 0.1, 1.0}};
    const auto files = testing::write_dataset(testing::make_backbone(spec, 8),
                                              dir / "in");
    const auto t0 = Clock::now();
    const int rc = run_cli(fmt::format("dmr {} --permutations 500 --threads 4 "
                                       "--out \"{}\" --quiet",
                                       data_flags(files), (dir / "out").string()));
    const double secs = seconds_since(t0);
    return {rc == 0 && secs < kThroughputSeconds,
            fmt::format("{} CpGs x 64 samples, B=500, --threads 4 on {} "
                        "hardware thread(s): exit {}, {:.1f} s (limit {:.0f} s)",
                        total, std::thread::hardware_concurrency(), rc, secs,
                        kThroughputSeconds)};
}

}  // namespace

int main(int argc, char** argv)
{
    // Optional arguments select criteria by number.
    std::vector<std::size_t> only;
    for (int i = 1; i < argc; ++i)
    {
        only.push_back(static_cast<std::size_t>(std::stoul(argv[i])));
    }
    log::set_level(log::Level::quiet);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria
        = {
            {"LRT identity suite", lrt_identity},
            {"OLS oracle equivalence", ols_oracle},
            {"Cluster oracle", cluster_oracle},
            {"Segment-search oracle", segment_oracle},
            {"Null calibration", null_calibration},
            {"Power monotonicity", power_monotonicity},
            {"Levene/VMR discrimination", vmr_discrimination},
            {"Stratum non-exchangeability", stratum_ordering},
            {"Determinism across thread counts", determinism},
            {"Throughput", throughput},
        };
    int failures = 0;
    std::size_t ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        if (!only.empty() && std::ranges::find(only, i + 1) == only.end())
        {
            continue;
        }
        ++ran;
        Outcome o;
        try
        {
            o = criteria[i].second();
        }
        catch (const std::exception& e)
        {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        failures += o.pass ? 0 : 1;
        fmt::print("{} criterion {:2} [PRIMARY] {}: {}\n",
                   o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                   o.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
