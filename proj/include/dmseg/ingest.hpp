#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dmseg
{

/// Row-major so that one CpG (one row) is contiguous in memory.
using RowMatrix
    = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Scale
{
    beta,
    mvalue,
};

std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view text);

struct CpGAnnotation
{
    std::string probe_id;
    std::string chromosome;
    std::int64_t position = 0;

    bool operator==(const CpGAnnotation&) const = default;
};

/// Samples with a binary group indicator and numeric covariates.
/// `covariates` is samples x covariate columns.
struct PhenotypeTable
{
    std::vector<std::string> sample_ids;
    std::vector<std::uint8_t> group;
    std::vector<std::string> covariate_names;
    Eigen::MatrixXd covariates;
    /// Original labels recoded to 0 and 1.
    std::string control_label;
    std::string case_label;

    [[nodiscard]] std::size_t n_samples() const { return sample_ids.size(); }

    /// Rejects duplicate ids, a missing or undersized group level, and
    /// non-finite or constant covariates.
    void validate() const;

    bool operator==(const PhenotypeTable& other) const;
};

struct MethylationMatrix
{
    RowMatrix values;
    Scale scale = Scale::beta;
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;

    [[nodiscard]] std::size_t n_rows() const { return row_ids.size(); }
    [[nodiscard]] std::size_t n_cols() const { return col_ids.size(); }

    void validate() const;

    bool operator==(const MethylationMatrix& other) const;
};

/// Matrix, annotations and phenotypes aligned row-for-row and
/// column-for-column, rows in (chromosome, position) order.
class AnalysisDataset
{
   public:
    /// Validates every cross-table invariant; does not reorder anything.
    static AnalysisDataset from_parts(
        MethylationMatrix matrix,
        std::vector<CpGAnnotation> annotations,
        PhenotypeTable phenotypes);

    [[nodiscard]] const MethylationMatrix& matrix() const { return matrix_; }
    [[nodiscard]] const RowMatrix& values() const { return matrix_.values; }
    [[nodiscard]] Scale scale() const { return matrix_.scale; }
    [[nodiscard]] const std::vector<CpGAnnotation>& annotations() const
    {
        return annotations_;
    }
    [[nodiscard]] const PhenotypeTable& phenotypes() const
    {
        return phenotypes_;
    }
    [[nodiscard]] std::size_t n_cpgs() const { return annotations_.size(); }
    [[nodiscard]] std::size_t n_samples() const
    {
        return phenotypes_.n_samples();
    }

    /// Same dataset on the M-value scale. Identity for M-value input.
    [[nodiscard]] AnalysisDataset to_mvalues() const;

    bool operator==(const AnalysisDataset&) const = default;

   private:
    AnalysisDataset() = default;

    MethylationMatrix matrix_;
    std::vector<CpGAnnotation> annotations_;
    PhenotypeTable phenotypes_;
};

/// ',' for .csv files, tab otherwise.
char delimiter_for(const std::filesystem::path& path);

MethylationMatrix load_methylation_matrix(
    const std::filesystem::path& path,
    Scale scale);

/// Writes values with shortest round-trip formatting.
void write_methylation_matrix(
    const MethylationMatrix& matrix,
    const std::filesystem::path& path);

/// The lexicographically smaller group label becomes 0 unless `case_label`
/// names the label to code as 1.
PhenotypeTable load_phenotypes(
    const std::filesystem::path& path,
    const std::string& group_column,
    const std::vector<std::string>& covariate_columns,
    const std::optional<std::string>& case_label = std::nullopt);

std::vector<CpGAnnotation> load_manifest(const std::filesystem::path& path);

/// Sorts rows by (chromosome, position), reorders columns to phenotype
/// order and drops manifest probes that the matrix does not measure.
AnalysisDataset align(
    const MethylationMatrix& matrix,
    std::span<const CpGAnnotation> manifest,
    const PhenotypeTable& phenotypes);

/// log2(beta / (1 - beta)).
double beta_to_m(double beta);

}  // namespace dmseg
