#include "dmseg/ingest.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "dmseg/error.hpp"
#include "dmseg/log.hpp"
#include "table_reader.hpp"

namespace dmseg
{

namespace
{

bool is_missing_token(std::string_view s)
{
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan"
           || s == "NAN" || s == ".";
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::ranges::transform(
        out,
        out.begin(),
        [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Strict full-field parse; no trailing garbage.
bool parse_double(std::string_view s, double& out)
{
    if (!s.empty() && s.front() == '+')
    {
        s.remove_prefix(1);
    }
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_int(std::string_view s, std::int64_t& out)
{
    if (!s.empty() && s.front() == '+')
    {
        s.remove_prefix(1);
    }
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

template <typename Range>
void require_unique(const Range& ids, std::string_view what)
{
    std::unordered_set<std::string_view> seen;
    for (const auto& id : ids)
    {
        if (!seen.insert(id).second)
        {
            throw Error(
                ErrorCode::duplicate_id,
                fmt::format("duplicate {} '{}'", what, id));
        }
    }
}

std::size_t find_column(
    const std::vector<std::string>& header,
    std::string_view name,
    const std::string& path,
    bool case_insensitive = false)
{
    for (std::size_t i = 0; i < header.size(); ++i)
    {
        const bool match = case_insensitive ? lower(header[i]) == lower(name)
                                            : header[i] == name;
        if (match)
        {
            return i;
        }
    }
    throw Error(
        ErrorCode::missing_column,
        fmt::format("{}: column '{}' not found", path, name));
}

}  // namespace

std::string_view to_string(Scale scale)
{
    return scale == Scale::beta ? "beta" : "mvalue";
}

Scale parse_scale(std::string_view text)
{
    const auto t = lower(text);
    if (t == "beta")
    {
        return Scale::beta;
    }
    if (t == "mvalue" || t == "m" || t == "m-value")
    {
        return Scale::mvalue;
    }
    throw Error(
        ErrorCode::invalid_config,
        fmt::format("unknown scale '{}' (expected beta or mvalue)", text));
}

double beta_to_m(double beta)
{
    if (!(beta > 0.0 && beta < 1.0))
    {
        throw Error(
            ErrorCode::out_of_range,
            fmt::format("beta value {} outside (0,1)", beta));
    }
    return std::log2(beta / (1.0 - beta));
}

char delimiter_for(const std::filesystem::path& path)
{
    return lower(path.extension().string()) == ".csv" ? ',' : '\t';
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void PhenotypeTable::validate() const
{
    const auto n = sample_ids.size();
    require_unique(sample_ids, "sample id");
    if (group.size() != n)
    {
        throw Error(ErrorCode::parse, "group vector length != sample count");
    }
    std::size_t n_case = 0;
    for (auto g : group)
    {
        if (g > 1)
        {
            throw Error(ErrorCode::non_binary_group, "group must be 0/1");
        }
        n_case += g;
    }
    if (n_case < 2 || n - n_case < 2)
    {
        throw Error(
            ErrorCode::singleton_group,
            fmt::format(
                "each group needs >= 2 samples (got {} and {})",
                n - n_case,
                n_case));
    }
    if (static_cast<std::size_t>(covariates.rows()) != n
        && covariates.cols() > 0)
    {
        throw Error(ErrorCode::parse, "covariate rows != sample count");
    }
    if (static_cast<std::size_t>(covariates.cols()) != covariate_names.size())
    {
        throw Error(ErrorCode::parse, "covariate names != covariate columns");
    }
    for (Eigen::Index c = 0; c < covariates.cols(); ++c)
    {
        const auto col = covariates.col(c);
        if (!col.allFinite())
        {
            throw Error(
                ErrorCode::missing_value,
                fmt::format("covariate '{}' has missing values",
                            covariate_names[c]));
        }
        if (col.maxCoeff() == col.minCoeff())
        {
            throw Error(
                ErrorCode::invalid_covariate,
                fmt::format("covariate '{}' is constant", covariate_names[c]));
        }
    }
}

bool PhenotypeTable::operator==(const PhenotypeTable& other) const
{
    return sample_ids == other.sample_ids && group == other.group
           && covariate_names == other.covariate_names
           && control_label == other.control_label
           && case_label == other.case_label
           && covariates.rows() == other.covariates.rows()
           && covariates.cols() == other.covariates.cols()
           && covariates == other.covariates;
}

void MethylationMatrix::validate() const
{
    if (static_cast<std::size_t>(values.rows()) != row_ids.size()
        || static_cast<std::size_t>(values.cols()) != col_ids.size())
    {
        throw Error(ErrorCode::parse, "matrix shape does not match its ids");
    }
    require_unique(row_ids, "probe id");
    require_unique(col_ids, "sample id");
    for (Eigen::Index r = 0; r < values.rows(); ++r)
    {
        for (Eigen::Index c = 0; c < values.cols(); ++c)
        {
            const double v = values(r, c);
            if (std::isnan(v))
            {
                throw Error(
                    ErrorCode::missing_value,
                    fmt::format("missing value at probe '{}', sample '{}'",
                                row_ids[r], col_ids[c]));
            }
            const bool ok = scale == Scale::beta ? (v > 0.0 && v < 1.0)
                                                 : std::isfinite(v);
            if (!ok)
            {
                throw Error(
                    ErrorCode::out_of_range,
                    fmt::format(
                        "value {} at probe '{}', sample '{}' out of range for "
                        "{} scale",
                        v, row_ids[r], col_ids[c], to_string(scale)));
            }
        }
    }
}

bool MethylationMatrix::operator==(const MethylationMatrix& other) const
{
    return scale == other.scale && row_ids == other.row_ids
           && col_ids == other.col_ids && values.rows() == other.values.rows()
           && values.cols() == other.values.cols() && values == other.values;
}

AnalysisDataset AnalysisDataset::from_parts(
    MethylationMatrix matrix,
    std::vector<CpGAnnotation> annotations,
    PhenotypeTable phenotypes)
{
    matrix.validate();
    phenotypes.validate();
    if (annotations.size() != matrix.n_rows())
    {
        throw Error(ErrorCode::parse, "annotation count != matrix rows");
    }
    if (phenotypes.n_samples() != matrix.n_cols())
    {
        throw Error(ErrorCode::missing_sample, "sample count != matrix columns");
    }
    for (std::size_t i = 0; i < annotations.size(); ++i)
    {
        const auto& a = annotations[i];
        if (a.probe_id != matrix.row_ids[i])
        {
            throw Error(
                ErrorCode::unknown_probe,
                fmt::format("row {} is '{}' but annotation is '{}'",
                            i, matrix.row_ids[i], a.probe_id));
        }
        if (a.position <= 0)
        {
            throw Error(
                ErrorCode::non_positive_position,
                fmt::format("probe '{}' has position {}", a.probe_id,
                            a.position));
        }
        if (i == 0)
        {
            continue;
        }
        const auto& prev = annotations[i - 1];
        if (prev.chromosome == a.chromosome && prev.position == a.position)
        {
            throw Error(
                ErrorCode::duplicate_position,
                fmt::format("probes '{}' and '{}' share {}:{}",
                            prev.probe_id, a.probe_id, a.chromosome,
                            a.position));
        }
        if (std::tie(prev.chromosome, prev.position)
            > std::tie(a.chromosome, a.position))
        {
            throw Error(
                ErrorCode::unsorted_rows,
                fmt::format("probe '{}' is out of coordinate order",
                            a.probe_id));
        }
    }
    for (std::size_t i = 0; i < phenotypes.n_samples(); ++i)
    {
        if (phenotypes.sample_ids[i] != matrix.col_ids[i])
        {
            throw Error(
                ErrorCode::missing_sample,
                fmt::format("column {} is '{}' but phenotype row is '{}'",
                            i, matrix.col_ids[i], phenotypes.sample_ids[i]));
        }
    }
    AnalysisDataset d;
    d.matrix_ = std::move(matrix);
    d.annotations_ = std::move(annotations);
    d.phenotypes_ = std::move(phenotypes);
    return d;
}

AnalysisDataset AnalysisDataset::to_mvalues() const
{
    if (matrix_.scale == Scale::mvalue)
    {
        return *this;
    }
    AnalysisDataset d = *this;
    d.matrix_.values = matrix_.values.unaryExpr(
        [](double b) { return std::log2(b / (1.0 - b)); });
    d.matrix_.scale = Scale::mvalue;
    return d;
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

MethylationMatrix load_methylation_matrix(
    const std::filesystem::path& path,
    Scale scale)
{
    detail::DelimitedReader reader(path, delimiter_for(path));
    std::vector<std::string_view> fields;
    if (!reader.next(fields))
    {
        throw Error(ErrorCode::parse, path.string() + ": empty file");
    }
    MethylationMatrix m;
    m.scale = scale;
    for (std::size_t i = 1; i < fields.size(); ++i)
    {
        m.col_ids.emplace_back(fields[i]);
    }
    const auto n_cols = m.col_ids.size();
    if (n_cols == 0)
    {
        reader.fail(ErrorCode::parse, "header has no sample columns");
    }
    require_unique(m.col_ids, "sample id");

    std::vector<double> body;
    while (reader.next(fields))
    {
        if (fields.size() != n_cols + 1)
        {
            reader.fail(
                ErrorCode::parse,
                fmt::format("expected {} fields, found {}", n_cols + 1,
                            fields.size()));
        }
        m.row_ids.emplace_back(fields[0]);
        for (std::size_t c = 0; c < n_cols; ++c)
        {
            const auto cell = fields[c + 1];
            if (is_missing_token(cell))
            {
                reader.fail(
                    ErrorCode::missing_value,
                    fmt::format("missing value in column {} (sample '{}')",
                                c + 2, m.col_ids[c]));
            }
            double v = 0.0;
            if (!parse_double(cell, v))
            {
                reader.fail(
                    ErrorCode::parse,
                    fmt::format("column {}: cannot parse '{}' as a number",
                                c + 2, cell));
            }
            if (std::isnan(v))
            {
                reader.fail(
                    ErrorCode::missing_value,
                    fmt::format("NaN in column {} (sample '{}')", c + 2,
                                m.col_ids[c]));
            }
            const bool ok
                = scale == Scale::beta ? (v > 0.0 && v < 1.0) : std::isfinite(v);
            if (!ok)
            {
                reader.fail(
                    ErrorCode::out_of_range,
                    fmt::format("value {} at probe '{}', sample '{}' (column "
                                "{}) out of range for {} scale",
                                cell, m.row_ids.back(), m.col_ids[c], c + 2,
                                to_string(scale)));
            }
            body.push_back(v);
        }
    }
    require_unique(m.row_ids, "probe id");
    m.values = Eigen::Map<RowMatrix>(
        body.data(),
        static_cast<Eigen::Index>(m.row_ids.size()),
        static_cast<Eigen::Index>(n_cols));
    return m;
}

void write_methylation_matrix(
    const MethylationMatrix& matrix,
    const std::filesystem::path& path)
{
    const char sep = delimiter_for(path);
    auto out = fmt::output_file(path.string());
    out.print("probe_id");
    for (const auto& id : matrix.col_ids)
    {
        out.print("{}{}", sep, id);
    }
    out.print("\n");
    for (std::size_t r = 0; r < matrix.n_rows(); ++r)
    {
        out.print("{}", matrix.row_ids[r]);
        for (std::size_t c = 0; c < matrix.n_cols(); ++c)
        {
            out.print("{}{}", sep, matrix.values(r, c));
        }
        out.print("\n");
    }
}

PhenotypeTable load_phenotypes(
    const std::filesystem::path& path,
    const std::string& group_column,
    const std::vector<std::string>& covariate_columns,
    const std::optional<std::string>& case_label)
{
    detail::DelimitedReader reader(path, delimiter_for(path));
    std::vector<std::string_view> fields;
    if (!reader.next(fields))
    {
        throw Error(ErrorCode::parse, path.string() + ": empty file");
    }
    const std::vector<std::string> header(fields.begin(), fields.end());
    const auto group_idx = find_column(header, group_column, reader.path());
    std::vector<std::size_t> cov_idx;
    for (const auto& name : covariate_columns)
    {
        cov_idx.push_back(find_column(header, name, reader.path()));
    }

    std::vector<std::string> ids;
    std::vector<std::string> labels;
    std::vector<double> cov_values;
    while (reader.next(fields))
    {
        if (fields.size() != header.size())
        {
            reader.fail(
                ErrorCode::parse,
                fmt::format("expected {} fields, found {}", header.size(),
                            fields.size()));
        }
        ids.emplace_back(fields[0]);
        if (is_missing_token(fields[group_idx]))
        {
            reader.fail(ErrorCode::missing_value, "missing group label");
        }
        labels.emplace_back(fields[group_idx]);
        for (const auto c : cov_idx)
        {
            double v = 0.0;
            if (is_missing_token(fields[c]))
            {
                reader.fail(
                    ErrorCode::missing_value,
                    fmt::format("missing value for covariate '{}'",
                                header[c]));
            }
            if (!parse_double(fields[c], v) || !std::isfinite(v))
            {
                reader.fail(
                    ErrorCode::parse,
                    fmt::format("covariate '{}': cannot parse '{}' as a "
                                "number (one-hot encode categorical columns)",
                                header[c], fields[c]));
            }
            cov_values.push_back(v);
        }
    }

    const std::set<std::string> levels(labels.begin(), labels.end());
    if (levels.size() != 2)
    {
        throw Error(
            ErrorCode::non_binary_group,
            fmt::format("{}: group column '{}' has {} distinct values; "
                        "exactly 2 required",
                        reader.path(), group_column, levels.size()));
    }
    PhenotypeTable t;
    t.control_label = *levels.begin();
    t.case_label = *levels.rbegin();
    if (case_label)
    {
        if (!levels.contains(*case_label))
        {
            throw Error(
                ErrorCode::invalid_config,
                fmt::format("case label '{}' is not a level of '{}'",
                            *case_label, group_column));
        }
        if (*case_label != t.case_label)
        {
            std::swap(t.control_label, t.case_label);
        }
    }
    log::info("group '{}': '{}' -> 0, '{}' -> 1", group_column,
              t.control_label, t.case_label);

    t.sample_ids = std::move(ids);
    for (const auto& label : labels)
    {
        t.group.push_back(label == t.case_label ? 1 : 0);
    }
    t.covariate_names = covariate_columns;
    const auto n = static_cast<Eigen::Index>(t.sample_ids.size());
    const auto k = static_cast<Eigen::Index>(cov_idx.size());
    t.covariates.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        for (Eigen::Index c = 0; c < k; ++c)
        {
            t.covariates(i, c) = cov_values[i * k + c];
        }
    }
    t.validate();
    return t;
}

std::vector<CpGAnnotation> load_manifest(const std::filesystem::path& path)
{
    detail::DelimitedReader reader(path, delimiter_for(path));
    std::vector<std::string_view> fields;
    if (!reader.next(fields))
    {
        throw Error(ErrorCode::parse, path.string() + ": empty file");
    }
    const std::vector<std::string> header(fields.begin(), fields.end());
    const auto id_idx = find_column(header, "probe_id", reader.path(), true);
    const auto chr_idx = find_column(header, "chromosome", reader.path(), true);
    const auto pos_idx = find_column(header, "position", reader.path(), true);

    std::vector<CpGAnnotation> out;
    std::unordered_set<std::string> seen;
    while (reader.next(fields))
    {
        if (fields.size() != header.size())
        {
            reader.fail(
                ErrorCode::parse,
                fmt::format("expected {} fields, found {}", header.size(),
                            fields.size()));
        }
        CpGAnnotation a;
        a.probe_id = std::string(fields[id_idx]);
        a.chromosome = std::string(fields[chr_idx]);
        if (!parse_int(fields[pos_idx], a.position))
        {
            reader.fail(
                ErrorCode::parse,
                fmt::format("cannot parse position '{}'", fields[pos_idx]));
        }
        if (a.position <= 0)
        {
            reader.fail(
                ErrorCode::non_positive_position,
                fmt::format("probe '{}' has position {}", a.probe_id,
                            a.position));
        }
        if (!seen.insert(a.probe_id).second)
        {
            reader.fail(
                ErrorCode::duplicate_id,
                fmt::format("duplicate probe id '{}'", a.probe_id));
        }
        out.push_back(std::move(a));
    }
    return out;
}

AnalysisDataset align(
    const MethylationMatrix& matrix,
    std::span<const CpGAnnotation> manifest,
    const PhenotypeTable& phenotypes)
{
    std::unordered_map<std::string_view, std::size_t> by_probe;
    for (std::size_t i = 0; i < manifest.size(); ++i)
    {
        if (!by_probe.emplace(manifest[i].probe_id, i).second)
        {
            throw Error(
                ErrorCode::duplicate_id,
                fmt::format("duplicate manifest probe '{}'",
                            manifest[i].probe_id));
        }
    }
    std::vector<std::size_t> manifest_of_row(matrix.n_rows());
    for (std::size_t r = 0; r < matrix.n_rows(); ++r)
    {
        const auto it = by_probe.find(matrix.row_ids[r]);
        if (it == by_probe.end())
        {
            throw Error(
                ErrorCode::unknown_probe,
                fmt::format("probe '{}' is not in the manifest",
                            matrix.row_ids[r]));
        }
        manifest_of_row[r] = it->second;
    }
    if (manifest.size() > matrix.n_rows())
    {
        log::info("{} manifest probes absent from the matrix were dropped",
                  manifest.size() - matrix.n_rows());
    }

    std::vector<std::size_t> order(matrix.n_rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::sort(
        order,
        [&](std::size_t a, std::size_t b)
        {
            const auto& x = manifest[manifest_of_row[a]];
            const auto& y = manifest[manifest_of_row[b]];
            return std::tie(x.chromosome, x.position)
                   < std::tie(y.chromosome, y.position);
        });

    std::unordered_map<std::string_view, std::size_t> by_sample;
    for (std::size_t c = 0; c < matrix.n_cols(); ++c)
    {
        by_sample.emplace(matrix.col_ids[c], c);
    }
    std::vector<std::size_t> col_order;
    for (const auto& id : phenotypes.sample_ids)
    {
        const auto it = by_sample.find(id);
        if (it == by_sample.end())
        {
            throw Error(
                ErrorCode::missing_sample,
                fmt::format("sample '{}' is not a matrix column", id));
        }
        col_order.push_back(it->second);
    }
    if (col_order.size() != matrix.n_cols())
    {
        const std::unordered_set<std::string_view> known(
            phenotypes.sample_ids.begin(), phenotypes.sample_ids.end());
        for (const auto& id : matrix.col_ids)
        {
            if (!known.contains(id))
            {
                throw Error(
                    ErrorCode::missing_sample,
                    fmt::format("matrix column '{}' has no phenotype row", id));
            }
        }
    }

    MethylationMatrix sorted;
    sorted.scale = matrix.scale;
    sorted.col_ids = phenotypes.sample_ids;
    sorted.values.resize(
        static_cast<Eigen::Index>(order.size()),
        static_cast<Eigen::Index>(col_order.size()));
    std::vector<CpGAnnotation> annotations;
    annotations.reserve(order.size());
    for (std::size_t r = 0; r < order.size(); ++r)
    {
        sorted.row_ids.push_back(matrix.row_ids[order[r]]);
        annotations.push_back(manifest[manifest_of_row[order[r]]]);
        for (std::size_t c = 0; c < col_order.size(); ++c)
        {
            sorted.values(r, c) = matrix.values(order[r], col_order[c]);
        }
    }
    return AnalysisDataset::from_parts(
        std::move(sorted), std::move(annotations), phenotypes);
}

}  // namespace dmseg
