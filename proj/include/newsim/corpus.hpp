#pragma once

#include "newsim/record.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace newsim {

/// Columns of the pair index CSV, in order.
inline constexpr std::array<std::string_view, 10> pair_index_columns{
    "pair_id", "lang1",     "lang2",   "geography", "entities",
    "time",    "narrative", "overall", "style",     "tone"};

struct LoadResult {
    std::vector<ArticleRecord> records;
    std::size_t missing = 0;   // one or both article files absent
    std::size_t malformed = 0; // article file present but unparsable
    std::vector<std::string> warnings;

    std::size_t skipped() const noexcept { return missing + malformed; }
};

/// Reads the pair index and the per-article JSON files referenced by it.
/// Title and text are taken verbatim; every other field is ignored.
/// Throws DataError on a malformed index row or an out-of-range score.
LoadResult load_dataset(const std::filesystem::path &pair_index_path,
                        const std::filesystem::path &article_dir);

/// Removes URLs and file paths, collapses whitespace runs to a single space
/// and trims. A whitespace-delimited token is dropped when it
///  - begins with `scheme://` or `www.`, or
///  - is an absolute path (`/x...`, `~/...`, `C:\...`, `C:/...`, `\\host...`), or
///  - has two or more `/`- or `\`-separated non-empty segments and its last
///    segment ends in an extension (`.` followed by a letter and up to seven
///    alphanumerics).
/// Trailing `.,;:!?)]}'"` are ignored when testing a token. Idempotent.
std::string clean_text(std::string_view raw);

/// Title and body joined by a single newline; an empty side is omitted.
std::string compose_document(std::string_view title, std::string_view body);

/// clean_text applied to both titles and texts.
ArticleRecord clean_record(ArticleRecord record);

struct FoldAssignment {
    std::map<std::string, int, std::less<>> fold_of;
    int k = 10;
    std::uint64_t seed = 0;

    /// Fold of a record; augmented ids resolve through their source id.
    int fold(std::string_view pair_id) const;
};

/// Distinct source pair ids are shuffled with `seed` and dealt round-robin
/// into `k` folds; every record (augmented ones included) is then assigned
/// the fold of its source.
FoldAssignment split_kfold(const std::vector<ArticleRecord> &records, int k, std::uint64_t seed);

nlohmann::json to_json(const ArticleRecord &record);
ArticleRecord record_from_json(const nlohmann::json &j);

nlohmann::json to_json(const FoldAssignment &folds);
FoldAssignment folds_from_json(const nlohmann::json &j);

void write_jsonl(std::ostream &out, const std::vector<ArticleRecord> &records);
void write_jsonl(const std::filesystem::path &path, const std::vector<ArticleRecord> &records);

/// Throws DataError naming the offending line.
std::vector<ArticleRecord> read_jsonl(std::istream &in);
std::vector<ArticleRecord> read_jsonl(const std::filesystem::path &path);

} // namespace newsim
