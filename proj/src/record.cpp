#include "newsim/record.hpp"

#include "newsim/error.hpp"

#include <algorithm>
#include <cctype>

namespace newsim {

bool in_range(const ScoreVector &scores) noexcept
{
    return std::all_of(scores.values.begin(), scores.values.end(), [](double v) {
        return v >= ScoreVector::min_score && v <= ScoreVector::max_score;
    });
}

std::string_view to_string(Provenance p) noexcept
{
    switch (p) {
    case Provenance::original: return "original";
    case Provenance::back_translated: return "back_translated";
    case Provenance::translate_train: return "translate_train";
    }
    return "original";
}

Provenance parse_provenance(std::string_view s)
{
    for (auto p : {Provenance::original, Provenance::back_translated, Provenance::translate_train})
        if (to_string(p) == s)
            return p;
    throw DataError{"unknown provenance '" + std::string{s} + "'"};
}

namespace {

bool all_digits(std::string_view s) noexcept
{
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

} // namespace

bool is_original_pair_id(std::string_view id) noexcept
{
    const auto us = id.find('_');
    if (us == std::string_view::npos || id.find('_', us + 1) != std::string_view::npos)
        return false;
    return all_digits(id.substr(0, us)) && all_digits(id.substr(us + 1));
}

std::string_view source_pair_id(std::string_view id) noexcept
{
    // "<a>_<b>" possibly followed by "_bt" and/or "_tt_<tag>".
    const auto first = id.find('_');
    if (first == std::string_view::npos)
        return id;
    const auto second = id.find('_', first + 1);
    return second == std::string_view::npos ? id : id.substr(0, second);
}

} // namespace newsim
