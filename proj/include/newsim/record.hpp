#pragma once

#include "newsim/lang.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace newsim {

// Similarity scores in fixed dimension order. All components lie in [1, 4].
struct ScoreVector {
    static constexpr std::size_t size = 7;
    static constexpr std::size_t overall_index = 4;
    static constexpr std::array<std::string_view, size> names{
        "geography", "entities", "time", "narrative", "overall", "style", "tone"};

    static constexpr double min_score = 1.0;
    static constexpr double max_score = 4.0;

    std::array<double, size> values{};

    double overall() const noexcept { return values[overall_index]; }
    double &operator[](std::size_t i) noexcept { return values[i]; }
    double operator[](std::size_t i) const noexcept { return values[i]; }
    bool operator==(const ScoreVector &) const = default;
};

/// True when every component is within [min_score, max_score].
bool in_range(const ScoreVector &scores) noexcept;

enum class Provenance { original, back_translated, translate_train };

std::string_view to_string(Provenance p) noexcept;
Provenance parse_provenance(std::string_view s);

struct ArticleRecord {
    std::string pair_id;
    Lang lang1 = Lang::en;
    Lang lang2 = Lang::en;
    std::string title1;
    std::string text1;
    std::string title2;
    std::string text2;
    ScoreVector scores;
    Provenance provenance = Provenance::original;

    LangPair langs() const noexcept { return {lang1, lang2}; }
    bool operator==(const ArticleRecord &) const = default;
};

/// Whether `id` has the "<digits>_<digits>" form of an original pair.
bool is_original_pair_id(std::string_view id) noexcept;

/// Strips the augmentation suffix ("_bt", "_tt_<tag>") from a pair id.
std::string_view source_pair_id(std::string_view id) noexcept;

} // namespace newsim
