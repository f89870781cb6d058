#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "dmseg/error.hpp"

namespace dmseg::detail
{

/// Line-oriented reader for delimited text. Skips blank lines and lines
/// starting with '#'; tracks 1-based line numbers for error messages.
class DelimitedReader
{
   public:
    DelimitedReader(const std::filesystem::path& path, char delimiter)
        : in_(path), path_(path.string()), delimiter_(delimiter)
    {
        if (!in_)
        {
            throw Error(ErrorCode::io, "cannot open " + path_);
        }
    }

    /// False at end of input.
    bool next(std::vector<std::string_view>& fields)
    {
        while (std::getline(in_, line_))
        {
            ++line_number_;
            if (!line_.empty() && line_.back() == '\r')
            {
                line_.pop_back();
            }
            if (line_.empty() || line_.front() == '#')
            {
                continue;
            }
            split(fields);
            return true;
        }
        return false;
    }

    [[nodiscard]] std::size_t line_number() const { return line_number_; }
    [[nodiscard]] const std::string& path() const { return path_; }

    [[noreturn]] void fail(ErrorCode code, const std::string& what) const
    {
        throw Error(
            code,
            path_ + ":" + std::to_string(line_number_) + ": " + what);
    }

   private:
    void split(std::vector<std::string_view>& fields) const
    {
        fields.clear();
        std::string_view rest(line_);
        while (true)
        {
            const auto cut = rest.find(delimiter_);
            fields.push_back(trim(rest.substr(0, cut)));
            if (cut == std::string_view::npos)
            {
                break;
            }
            rest.remove_prefix(cut + 1);
        }
    }

    static std::string_view trim(std::string_view s)
    {
        while (!s.empty() && (s.front() == ' ' || s.front() == '"'))
        {
            s.remove_prefix(1);
        }
        while (!s.empty() && (s.back() == ' ' || s.back() == '"'))
        {
            s.remove_suffix(1);
        }
        return s;
    }

    std::ifstream in_;
    std::string path_;
    char delimiter_;
    std::string line_;
    std::size_t line_number_ = 0;
};

}  // namespace dmseg::detail
