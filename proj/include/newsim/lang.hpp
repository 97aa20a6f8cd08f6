#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace newsim {

// The ten languages covered by the task.
enum class Lang { es, it, de, en, zh, ar, pl, fr, tr, ru };

inline constexpr std::array<Lang, 10> all_langs{Lang::es, Lang::it, Lang::de, Lang::en, Lang::zh,
                                                Lang::ar, Lang::pl, Lang::fr, Lang::tr, Lang::ru};

std::string_view to_string(Lang lang) noexcept;

std::optional<Lang> parse_lang(std::string_view code) noexcept;

/// Ordered language pair, e.g. "de-en". Monolingual pairs are written "en-en"
/// in plan files and collapsed to "en" in evaluation reports.
struct LangPair {
    Lang first;
    Lang second;

    bool monolingual() const noexcept { return first == second; }
    bool operator==(const LangPair &) const = default;
};

/// "xx-yy" form.
std::string to_tag(LangPair pair);

/// "xx" for monolingual pairs, "xx-yy" otherwise.
std::string to_group_tag(LangPair pair);

/// Accepts "xx-yy"; throws DataError otherwise.
LangPair parse_lang_pair(std::string_view tag);

} // namespace newsim
