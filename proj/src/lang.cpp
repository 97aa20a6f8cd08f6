#include "newsim/lang.hpp"

#include "newsim/error.hpp"

namespace newsim {

std::string_view to_string(Lang lang) noexcept
{
    switch (lang) {
    case Lang::es: return "es";
    case Lang::it: return "it";
    case Lang::de: return "de";
    case Lang::en: return "en";
    case Lang::zh: return "zh";
    case Lang::ar: return "ar";
    case Lang::pl: return "pl";
    case Lang::fr: return "fr";
    case Lang::tr: return "tr";
    case Lang::ru: return "ru";
    }
    return "??";
}

std::optional<Lang> parse_lang(std::string_view code) noexcept
{
    for (Lang lang : all_langs)
        if (to_string(lang) == code)
            return lang;
    return std::nullopt;
}

std::string to_tag(LangPair pair)
{
    std::string tag{to_string(pair.first)};
    tag += '-';
    tag += to_string(pair.second);
    return tag;
}

std::string to_group_tag(LangPair pair)
{
    return pair.monolingual() ? std::string{to_string(pair.first)} : to_tag(pair);
}

LangPair parse_lang_pair(std::string_view tag)
{
    const auto dash = tag.find('-');
    if (dash == std::string_view::npos)
        throw DataError{"language pair tag '" + std::string{tag} + "' is not of the form xx-yy"};
    const auto first = parse_lang(tag.substr(0, dash));
    const auto second = parse_lang(tag.substr(dash + 1));
    if (!first || !second)
        throw DataError{"language pair tag '" + std::string{tag} + "' names an unsupported language"};
    return {*first, *second};
}

} // namespace newsim
