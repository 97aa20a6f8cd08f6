#include "newsim/tokenize.hpp"

#include "newsim/error.hpp"
#include "newsim/rng.hpp"
#include "newsim/unicode.hpp"

namespace newsim {

Tokenizer::Tokenizer(std::size_t vocab_size) : vocab_size_{vocab_size}
{
    if (vocab_size <= static_cast<std::size_t>(first_content_id))
        throw ConfigError{"vocabulary size must exceed the 4 reserved ids"};
}

std::vector<std::string> Tokenizer::surface_tokens(std::string_view text) const
{
    std::vector<std::string> tokens;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (char32_t cp : unicode::decode_utf8(text)) {
        if (unicode::is_whitespace(cp)) {
            flush();
        } else if (unicode::is_punctuation(cp) || unicode::is_cjk_ideograph(cp)) {
            flush();
            std::string single;
            unicode::append_utf8(single, unicode::to_lower(cp));
            tokens.push_back(std::move(single));
        } else {
            unicode::append_utf8(current, unicode::to_lower(cp));
        }
    }
    flush();
    return tokens;
}

TokenId Tokenizer::token_id(std::string_view surface) const noexcept
{
    const auto content = static_cast<std::uint64_t>(vocab_size_) - first_content_id;
    return static_cast<TokenId>(first_content_id + fnv1a64(surface) % content);
}

TokenSequence Tokenizer::tokenize(std::string_view text) const
{
    TokenSequence seq;
    for (const auto &tok : surface_tokens(text))
        seq.ids.push_back(token_id(tok));
    return seq;
}

std::optional<TruncationPolicy> find_policy(std::string_view name) noexcept
{
    for (const auto &preset : policy_presets)
        if (preset.name == name)
            return preset.policy;
    return std::nullopt;
}

TruncationPolicy policy_from_name(std::string_view name)
{
    if (auto policy = find_policy(name))
        return *policy;
    throw ConfigError{"unknown truncation policy '" + std::string{name} +
                      "' (expected h256t0, h200t56, h128t128, h56t200 or h0t256)"};
}

TokenSequence head_tail_truncate(const TokenSequence &tokens, TruncationPolicy policy)
{
    if (tokens.size() <= policy.budget())
        return tokens;
    TokenSequence out;
    out.ids.reserve(policy.budget());
    out.ids.insert(out.ids.end(), tokens.ids.begin(), tokens.ids.begin() + static_cast<std::ptrdiff_t>(policy.head_len));
    out.ids.insert(out.ids.end(), tokens.ids.end() - static_cast<std::ptrdiff_t>(policy.tail_len), tokens.ids.end());
    return out;
}

EncodedPair assemble_pair(const TokenSequence &doc1, const TokenSequence &doc2)
{
    EncodedPair pair;
    pair.ids.reserve(doc1.size() + doc2.size() + 3);
    pair.ids.push_back(cls_id);
    pair.ids.insert(pair.ids.end(), doc1.ids.begin(), doc1.ids.end());
    pair.article_boundaries[0] = pair.ids.size();
    pair.ids.push_back(sep_id);
    pair.ids.insert(pair.ids.end(), doc2.ids.begin(), doc2.ids.end());
    pair.article_boundaries[1] = pair.ids.size();
    pair.ids.push_back(sep_id);
    return pair;
}

EncodedPair encode_pair(const Tokenizer &tokenizer, std::string_view doc1, std::string_view doc2,
                        TruncationPolicy policy)
{
    return assemble_pair(head_tail_truncate(tokenizer.tokenize(doc1), policy),
                         head_tail_truncate(tokenizer.tokenize(doc2), policy));
}

} // namespace newsim
