#include "newsim/error.hpp"
#include "newsim/rng.hpp"
#include "newsim/tokenize.hpp"

#include <algorithm>
#include <numeric>

#include "doctest.h"

using namespace newsim;

namespace {

TokenSequence iota_tokens(std::size_t n)
{
    TokenSequence t;
    t.ids.resize(n);
    std::iota(t.ids.begin(), t.ids.end(), 4);
    return t;
}

TokenSequence slice(const TokenSequence &t, std::size_t from, std::size_t to)
{
    return TokenSequence{{t.ids.begin() + static_cast<std::ptrdiff_t>(from),
                          t.ids.begin() + static_cast<std::ptrdiff_t>(to)}};
}

} // namespace

TEST_CASE("tokenize: empty, case folding, determinism")
{
    const Tokenizer tok;
    CHECK(tok.tokenize("").ids.empty());
    const auto aa = tok.tokenize("A a");
    REQUIRE(aa.size() == 2);
    CHECK(aa.ids[0] == aa.ids[1]);
    CHECK(tok.tokenize("some text, twice") == tok.tokenize("some text, twice"));
}

TEST_CASE("tokenize: punctuation and CJK ideographs are single tokens")
{
    const Tokenizer tok;
    const std::vector<std::string> expected{"hello", ",", "world", "!"};
    CHECK(tok.surface_tokens("Hello, world!") == expected);
    const std::vector<std::string> cjk{"北", "京", "2022"};
    CHECK(tok.surface_tokens("北京 2022") == cjk);
    const std::vector<std::string> mixed{"straße", "«", "größe"};
    CHECK(tok.surface_tokens("STRASSE") == std::vector<std::string>{"strasse"});
    CHECK(tok.surface_tokens("Straße«Größe") == mixed);
}

TEST_CASE("tokenize: ids follow 4 + fnv1a64 mod (V - 4)")
{
    const Tokenizer tok{1000};
    const auto ids = tok.tokenize("Zebra");
    REQUIRE(ids.size() == 1);
    CHECK(ids.ids[0] == static_cast<TokenId>(4 + fnv1a64("zebra") % 996));
    for (TokenId id : Tokenizer{}.tokenize("any text at all, with punctuation; 1 2 3").ids) {
        CHECK(id >= first_content_id);
        CHECK(id < static_cast<TokenId>(default_vocab_size));
    }
}

TEST_CASE("tokenizer rejects tiny vocabularies")
{
    CHECK_THROWS_AS(Tokenizer{4}, ConfigError);
}

TEST_CASE("policy presets sum to 256 and are found by name")
{
    for (const auto &p : policy_presets)
        CHECK(p.policy.budget() == 256);
    CHECK(policy_from_name("h200t56") == TruncationPolicy{200, 56});
    CHECK(policy_from_name(default_policy_name) == TruncationPolicy{200, 56});
    CHECK(policy_from_name("h0t256") == TruncationPolicy{0, 256});
    CHECK_FALSE(find_policy("h100t100").has_value());
    CHECK_THROWS_AS(policy_from_name("h100t100"), ConfigError);
}

TEST_CASE("head_tail_truncate examples")
{
    const auto t300 = iota_tokens(300);
    SUBCASE("300 tokens, h200t56 -> 0..199 then 244..299")
    {
        const auto out = head_tail_truncate(t300, {200, 56});
        REQUIRE(out.size() == 256);
        auto expected = slice(t300, 0, 200);
        const auto tail = slice(t300, 244, 300);
        expected.ids.insert(expected.ids.end(), tail.ids.begin(), tail.ids.end());
        CHECK(out == expected);
    }
    SUBCASE("100 tokens unchanged")
    {
        const auto t100 = iota_tokens(100);
        CHECK(head_tail_truncate(t100, {200, 56}) == t100);
    }
    SUBCASE("300 tokens, h0t256 -> 44..299")
    {
        CHECK(head_tail_truncate(t300, {0, 256}) == slice(t300, 44, 300));
    }
    SUBCASE("300 tokens, h256t0 -> 0..255")
    {
        CHECK(head_tail_truncate(t300, {256, 0}) == slice(t300, 0, 256));
    }
    SUBCASE("overlap region returns the whole sequence")
    {
        const auto t230 = iota_tokens(230);
        CHECK(head_tail_truncate(t230, {200, 56}) == t230);
    }
}

TEST_CASE("head_tail_truncate properties over random lengths and policies")
{
    Rng rng{2024};
    for (int trial = 0; trial < 500; ++trial) {
        const auto len = static_cast<std::size_t>(rng.below(700));
        const TruncationPolicy policy{static_cast<std::size_t>(rng.below(300)),
                                      static_cast<std::size_t>(rng.below(300))};
        const auto in = iota_tokens(len);
        const auto out = head_tail_truncate(in, policy);
        REQUIRE(out.size() == std::min(len, policy.budget()));

        // Strictly increasing ids mean the output is an order-preserving
        // subsequence of the input.
        CHECK(std::is_sorted(out.ids.begin(), out.ids.end()));
        CHECK(std::adjacent_find(out.ids.begin(), out.ids.end()) == out.ids.end());

        const auto head = std::min(len, policy.head_len);
        const auto tail = std::min(len, policy.tail_len);
        CHECK(std::equal(in.ids.begin(), in.ids.begin() + static_cast<std::ptrdiff_t>(head), out.ids.begin()));
        CHECK(std::equal(in.ids.end() - static_cast<std::ptrdiff_t>(tail), in.ids.end(),
                         out.ids.end() - static_cast<std::ptrdiff_t>(tail)));
    }
}

namespace {

std::string words(std::size_t n, const char *stem)
{
    std::string s;
    for (std::size_t i = 0; i < n; ++i)
        s += std::string{stem} + std::to_string(i) + " ";
    return s;
}

} // namespace

TEST_CASE("encode_pair layout")
{
    const Tokenizer tok;
    SUBCASE("both empty")
    {
        const auto p = encode_pair(tok, "", "", {200, 56});
        CHECK(p.ids == std::vector<TokenId>{cls_id, sep_id, sep_id});
        CHECK(p.length() == 3);
        CHECK(p.article_boundaries == std::array<std::size_t, 2>{1, 2});
    }
    SUBCASE("300 and 100 raw tokens")
    {
        const auto p = encode_pair(tok, words(300, "a"), words(100, "b"), {200, 56});
        CHECK(p.length() == 3 + 256 + 100);
        CHECK(p.article_boundaries == std::array<std::size_t, 2>{257, 358});
    }
    SUBCASE("long inputs stay within 515")
    {
        const auto p = encode_pair(tok, words(2000, "a"), words(900, "b"), {128, 128});
        CHECK(p.length() == 515);
    }
}

TEST_CASE("encode_pair invariants on random documents")
{
    const Tokenizer tok;
    Rng rng{77};
    const std::vector<std::string> pieces{"alpha", "beta", ",", "gamma.", "北京", "Ünïcode", "x"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string d1, d2;
        for (auto n = rng.below(400); n > 0; --n)
            d1 += pieces[rng.below(pieces.size())] + " ";
        for (auto n = rng.below(400); n > 0; --n)
            d2 += pieces[rng.below(pieces.size())] + " ";
        const auto policy = policy_presets[rng.below(policy_presets.size())].policy;
        const auto p = encode_pair(tok, d1, d2, policy);
        CHECK(p.length() <= 515);
        CHECK(p.ids.front() == cls_id);
        CHECK(std::count(p.ids.begin(), p.ids.end(), cls_id) == 1);
        CHECK(std::count(p.ids.begin(), p.ids.end(), sep_id) == 2);
        CHECK(p.ids[p.article_boundaries[0]] == sep_id);
        CHECK(p.article_boundaries[1] == p.length() - 1);
        CHECK(encode_pair(tok, d1, d2, policy) == p);
    }
}
