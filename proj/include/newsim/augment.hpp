#pragma once

#include "newsim/lang.hpp"
#include "newsim/record.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace newsim {

// Translation port. Implementations must be deterministic per instance and
// input, and safe to call from several threads at once.
class Translator {
public:
    virtual ~Translator() = default;

    virtual std::string translate(std::string_view text, Lang source, Lang target) = 0;

    virtual bool supports(Lang source, Lang target) const { return source != target; }
};

class IdentityTranslator final : public Translator {
public:
    std::string translate(std::string_view text, Lang source, Lang target) override;
};

// Wraps the input as "[xx]text[/xx]" for target language xx.
class TaggingTranslator final : public Translator {
public:
    std::string translate(std::string_view text, Lang source, Lang target) override;
};

// Forwards to another translator and counts calls per (text, source, target).
class CountingTranslator final : public Translator {
public:
    using Key = std::tuple<std::string, Lang, Lang>;

    explicit CountingTranslator(Translator &inner) : inner_{inner} {}

    std::string translate(std::string_view text, Lang source, Lang target) override;
    bool supports(Lang source, Lang target) const override { return inner_.supports(source, target); }

    std::size_t total_calls() const;
    std::map<Key, std::size_t> calls() const;

private:
    Translator &inner_;
    mutable std::mutex mutex_;
    std::map<Key, std::size_t> calls_;
};

struct AugmentPlanRow {
    LangPair origin;
    std::size_t quantity = 0;
    std::vector<LangPair> targets;

    bool operator==(const AugmentPlanRow &) const = default;
};

struct AugmentPlan {
    std::vector<AugmentPlanRow> rows;

    /// Sum over rows of quantity * |targets|.
    std::size_t emitted_count() const noexcept;

    /// Throws ConfigError for a row without targets or with a target equal
    /// to its origin.
    void validate() const;

    bool operator==(const AugmentPlan &) const = default;
};

/// The five-row translate-train arrangement (4742 records in total).
AugmentPlan build_default_plan();

nlohmann::json to_json(const AugmentPlanRow &row);
AugmentPlanRow plan_row_from_json(const nlohmann::json &j);

void write_plan(std::ostream &out, const AugmentPlan &plan);
AugmentPlan read_plan(std::istream &in);
AugmentPlan read_plan(const std::filesystem::path &path);

/// Round-trips every side whose language differs from `pivot` through the
/// pivot and back; other sides are copied. The result keeps the language
/// tags and scores, gets provenance back_translated and id "<id>_bt".
/// Throws DataError when both sides are already in the pivot language.
ArticleRecord back_translate(const ArticleRecord &record, Translator &translator, Lang pivot = Lang::en);

/// Whether the ingestion pipeline back-translates this record: non-English
/// monolingual pairs and de-en pairs.
bool back_translation_eligible(const ArticleRecord &record) noexcept;

struct TranslateOptions {
    std::size_t max_in_flight = 4;
    Lang pivot = Lang::en;
};

/// Builds translate-train records for `plan`. Each row draws `quantity`
/// distinct original records tagged with its origin pair by seeded sampling;
/// rows sharing an origin draw disjoint samples. Output is ordered by row,
/// then sample, then target, and never depends on completion order.
/// Every article side is translated at most once per target language; a
/// non-pivot to non-pivot translation goes through the pivot, reusing the
/// side's pivot translation.
/// Throws DataError naming the row when origins run out, ConfigError for an
/// invalid plan or a language pair the translator does not support.
std::vector<ArticleRecord> translate_train(const std::vector<ArticleRecord> &records, const AugmentPlan &plan,
                                           Translator &translator, std::uint64_t seed,
                                           const TranslateOptions &options = {});

} // namespace newsim
