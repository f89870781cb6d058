#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmseg
{

enum class ErrorCode
{
    io,
    parse,
    missing_value,
    out_of_range,
    duplicate_id,
    non_positive_position,
    missing_column,
    non_binary_group,
    singleton_group,
    invalid_covariate,
    unknown_probe,
    missing_sample,
    duplicate_position,
    unsorted_rows,
    too_few_samples,
    rank_deficient,
    scale_mismatch,
    non_positive_variance,
    empty_pool,
    invalid_plan,
    invalid_config,
    unknown_segment,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error
{
   public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code)
    {
    }

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

   private:
    ErrorCode code_;
};

}  // namespace dmseg
