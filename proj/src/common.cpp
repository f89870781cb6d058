#include <atomic>

#include "dmseg/error.hpp"
#include "dmseg/log.hpp"

namespace dmseg
{

std::string_view error_name(ErrorCode code)
{
    switch (code)
    {
        case ErrorCode::io:
            return "IoError";
        case ErrorCode::parse:
            return "ParseError";
        case ErrorCode::missing_value:
            return "MissingValue";
        case ErrorCode::out_of_range:
            return "OutOfRange";
        case ErrorCode::duplicate_id:
            return "DuplicateId";
        case ErrorCode::non_positive_position:
            return "NonPositivePosition";
        case ErrorCode::missing_column:
            return "MissingColumn";
        case ErrorCode::non_binary_group:
            return "NonBinaryGroup";
        case ErrorCode::singleton_group:
            return "SingletonGroup";
        case ErrorCode::invalid_covariate:
            return "InvalidCovariate";
        case ErrorCode::unknown_probe:
            return "UnknownProbe";
        case ErrorCode::missing_sample:
            return "MissingSample";
        case ErrorCode::duplicate_position:
            return "DuplicatePosition";
        case ErrorCode::unsorted_rows:
            return "UnsortedRows";
        case ErrorCode::too_few_samples:
            return "TooFewSamples";
        case ErrorCode::rank_deficient:
            return "RankDeficient";
        case ErrorCode::scale_mismatch:
            return "ScaleMismatch";
        case ErrorCode::non_positive_variance:
            return "NonPositiveVariance";
        case ErrorCode::empty_pool:
            return "EmptyPool";
        case ErrorCode::invalid_plan:
            return "InvalidPlan";
        case ErrorCode::invalid_config:
            return "InvalidConfig";
        case ErrorCode::unknown_segment:
            return "UnknownSegment";
    }
    return "Error";
}

namespace log
{

namespace
{
std::atomic<Level> g_level{Level::info};
}

void set_level(Level level) { g_level.store(level); }

Level level() { return g_level.load(); }

}  // namespace log

}  // namespace dmseg
