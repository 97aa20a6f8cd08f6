#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace newsim {

using TokenId = std::int32_t;

inline constexpr TokenId pad_id = 0;
inline constexpr TokenId cls_id = 1;
inline constexpr TokenId sep_id = 2;
inline constexpr TokenId unk_id = 3;
inline constexpr TokenId first_content_id = 4;

inline constexpr std::size_t default_vocab_size = 32768;

struct TokenSequence {
    std::vector<TokenId> ids;

    std::size_t size() const noexcept { return ids.size(); }
    bool operator==(const TokenSequence &) const = default;
};

// Hashing tokenizer. Text is lowercased and split on whitespace; punctuation
// marks and CJK ideographs become single-character tokens. Each surface token
// maps to 4 + fnv1a64(utf8 bytes) % (vocab_size - 4).
class Tokenizer {
public:
    explicit Tokenizer(std::size_t vocab_size = default_vocab_size);

    std::size_t vocab_size() const noexcept { return vocab_size_; }

    /// Lowercased surface tokens, before hashing.
    std::vector<std::string> surface_tokens(std::string_view text) const;

    TokenId token_id(std::string_view surface) const noexcept;

    TokenSequence tokenize(std::string_view text) const;

private:
    std::size_t vocab_size_;
};

// Keeps the first head_len and the last tail_len tokens of a long document.
struct TruncationPolicy {
    std::size_t head_len = 200;
    std::size_t tail_len = 56;

    std::size_t budget() const noexcept { return head_len + tail_len; }
    bool operator==(const TruncationPolicy &) const = default;
};

struct NamedPolicy {
    std::string_view name;
    TruncationPolicy policy;
};

inline constexpr std::array<NamedPolicy, 5> policy_presets{{
    {"h256t0", {256, 0}},
    {"h200t56", {200, 56}},
    {"h128t128", {128, 128}},
    {"h56t200", {56, 200}},
    {"h0t256", {0, 256}},
}};

inline constexpr std::string_view default_policy_name = "h200t56";

std::optional<TruncationPolicy> find_policy(std::string_view name) noexcept;

/// Throws ConfigError for an unknown preset name.
TruncationPolicy policy_from_name(std::string_view name);

TokenSequence head_tail_truncate(const TokenSequence &tokens, TruncationPolicy policy);

/// Layout [CLS] doc1 [SEP] doc2 [SEP]; no padding.
struct EncodedPair {
    std::vector<TokenId> ids;
    std::array<std::size_t, 2> article_boundaries{}; // positions of the two SEP tokens

    std::size_t length() const noexcept { return ids.size(); }
    bool operator==(const EncodedPair &) const = default;
};

EncodedPair assemble_pair(const TokenSequence &doc1, const TokenSequence &doc2);

EncodedPair encode_pair(const Tokenizer &tokenizer, std::string_view doc1, std::string_view doc2,
                        TruncationPolicy policy);

} // namespace newsim
