#include "newsim/corpus.hpp"

#include "newsim/error.hpp"
#include "newsim/rng.hpp"
#include "newsim/unicode.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace newsim {

namespace fs = std::filesystem;

namespace {

std::string line_ref(std::size_t line) { return "line " + std::to_string(line); }

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty() && !was_quoted) {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else {
            if (was_quoted)
                throw DataError{"pair index " + line_ref(line_no) + ": text after closing quote"};
            field.push_back(c);
        }
    }
    if (quoted)
        throw DataError{"pair index " + line_ref(line_no) + ": unterminated quoted field"};
    fields.push_back(std::move(field));
    return fields;
}

double parse_score(const std::string &s, std::string_view column, std::size_t line_no)
{
    double value = 0.0;
    const char *begin = s.data();
    const char *end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || s.empty())
        throw DataError{"pair index " + line_ref(line_no) + ": column '" + std::string{column} +
                        "' is not a number: '" + s + "'"};
    if (!(value >= ScoreVector::min_score && value <= ScoreVector::max_score))
        throw DataError{"pair index " + line_ref(line_no) + ": score " + std::string{column} + "=" + s +
                        " outside [1, 4]"};
    return value;
}

struct Article {
    std::string title;
    std::string text;
};

enum class ArticleStatus { ok, missing, malformed };

ArticleStatus read_article(const fs::path &path, Article &out, std::string &why)
{
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        why = path.string() + ": not found";
        return ArticleStatus::missing;
    }
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
        why = path.string() + ": not a JSON object";
        return ArticleStatus::malformed;
    }
    const auto title = j.find("title");
    const auto text = j.find("text");
    if (title == j.end() || text == j.end() || !title->is_string() || !text->is_string()) {
        why = path.string() + ": missing string field 'title' or 'text'";
        return ArticleStatus::malformed;
    }
    out.title = title->get<std::string>();
    out.text = text->get<std::string>();
    return ArticleStatus::ok;
}

bool is_scheme_char(char c) noexcept
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '+' || c == '.' || c == '-';
}

bool is_opening_punct(char c) noexcept
{
    return c == '(' || c == '[' || c == '{' || c == '<' || c == '"' || c == '\'';
}

bool is_trailing_punct(char c) noexcept
{
    return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == ')' || c == ']' ||
           c == '}' || c == '\'' || c == '"' || c == '>';
}

bool iequals_prefix(std::string_view s, std::string_view prefix) noexcept
{
    if (s.size() < prefix.size())
        return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i])
            return false;
    return true;
}

// Offset where a URL starts inside the token, or npos.
std::size_t find_url(std::string_view token) noexcept
{
    std::size_t best = std::string_view::npos;
    for (auto sep = token.find("://"); sep != std::string_view::npos; sep = token.find("://", sep + 1)) {
        std::size_t start = sep;
        while (start > 0 && is_scheme_char(token[start - 1]))
            --start;
        while (start < sep && std::isalpha(static_cast<unsigned char>(token[start])) == 0)
            ++start;
        if (start < sep) {
            best = start;
            break;
        }
    }
    for (std::size_t pos = 0; pos < token.size(); ++pos) {
        if (pos >= best)
            break;
        if (iequals_prefix(token.substr(pos), "www.") &&
            (pos == 0 || std::isalnum(static_cast<unsigned char>(token[pos - 1])) == 0)) {
            best = pos;
            break;
        }
    }
    if (best == std::string_view::npos)
        return best;
    while (best > 0 && is_opening_punct(token[best - 1]))
        --best;
    return best;
}

bool has_extension(std::string_view segment) noexcept
{
    const auto dot = segment.rfind('.');
    if (dot == std::string_view::npos)
        return false;
    const auto ext = segment.substr(dot + 1);
    if (ext.empty() || ext.size() > 8 || std::isalpha(static_cast<unsigned char>(ext[0])) == 0)
        return false;
    return std::all_of(ext.begin(), ext.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

bool is_file_path(std::string_view token) noexcept
{
    while (!token.empty() && is_opening_punct(token.front()))
        token.remove_prefix(1);
    while (!token.empty() && is_trailing_punct(token.back()))
        token.remove_suffix(1);
    if (token.size() < 2)
        return false;

    const auto is_sep = [](char c) { return c == '/' || c == '\\'; };
    if (token[0] == '/' && !is_sep(token[1]))
        return true;
    if (token[0] == '~' && token[1] == '/')
        return true;
    if (token.size() >= 3 && std::isalpha(static_cast<unsigned char>(token[0])) != 0 && token[1] == ':' &&
        is_sep(token[2]))
        return true;
    if (token.size() >= 3 && token[0] == '\\' && token[1] == '\\' && !is_sep(token[2]))
        return true;

    std::size_t segments = 0;
    std::string_view last;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= token.size(); ++i) {
        if (i == token.size() || is_sep(token[i])) {
            if (i > start) {
                ++segments;
                last = token.substr(start, i - start);
            }
            start = i + 1;
        }
    }
    return segments >= 2 && token.find_first_of("/\\") != std::string_view::npos && has_extension(last);
}

} // namespace

LoadResult load_dataset(const fs::path &pair_index_path, const fs::path &article_dir)
{
    std::ifstream in{pair_index_path, std::ios::binary};
    if (!in)
        throw DataError{"cannot open pair index " + pair_index_path.string()};

    LoadResult result;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!header_seen) {
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
                line.erase(0, 3);
            const auto header = split_csv_line(line, line_no);
            if (!std::equal(header.begin(), header.end(), pair_index_columns.begin(), pair_index_columns.end()))
                throw DataError{"pair index " + line_ref(line_no) +
                                ": header must be pair_id,lang1,lang2,geography,entities,time,narrative,"
                                "overall,style,tone"};
            header_seen = true;
            continue;
        }
        if (line.empty())
            continue;

        const auto fields = split_csv_line(line, line_no);
        if (fields.size() != pair_index_columns.size())
            throw DataError{"pair index " + line_ref(line_no) + ": expected 10 columns, found " +
                            std::to_string(fields.size())};

        ArticleRecord record;
        record.pair_id = fields[0];
        if (!is_original_pair_id(record.pair_id))
            throw DataError{"pair index " + line_ref(line_no) + ": malformed pair_id '" + record.pair_id + "'"};
        const auto lang1 = parse_lang(fields[1]);
        const auto lang2 = parse_lang(fields[2]);
        if (!lang1 || !lang2)
            throw DataError{"pair index " + line_ref(line_no) + ": unsupported language '" +
                            (lang1 ? fields[2] : fields[1]) + "'"};
        record.lang1 = *lang1;
        record.lang2 = *lang2;
        for (std::size_t d = 0; d < ScoreVector::size; ++d)
            record.scores[d] = parse_score(fields[3 + d], pair_index_columns[3 + d], line_no);

        const auto us = record.pair_id.find('_');
        const std::string id1 = record.pair_id.substr(0, us);
        const std::string id2 = record.pair_id.substr(us + 1);

        Article a1, a2;
        std::string why;
        auto status = read_article(article_dir / (id1 + ".json"), a1, why);
        if (status == ArticleStatus::ok)
            status = read_article(article_dir / (id2 + ".json"), a2, why);
        if (status == ArticleStatus::missing) {
            ++result.missing;
            result.warnings.push_back(record.pair_id + ": " + why);
            continue;
        }
        if (status == ArticleStatus::malformed) {
            ++result.malformed;
            result.warnings.push_back(record.pair_id + ": " + why);
            continue;
        }
        record.title1 = std::move(a1.title);
        record.text1 = std::move(a1.text);
        record.title2 = std::move(a2.title);
        record.text2 = std::move(a2.text);
        result.records.push_back(std::move(record));
    }
    if (!header_seen)
        throw DataError{"pair index " + pair_index_path.string() + " is empty (no header row)"};
    return result;
}

std::string clean_text(std::string_view raw)
{
    std::string out;
    out.reserve(raw.size());
    for (std::string_view token : unicode::split_whitespace(raw)) {
        const auto url = find_url(token);
        if (url != std::string_view::npos)
            token = token.substr(0, url);
        if (token.empty() || is_file_path(token))
            continue;
        if (!out.empty())
            out.push_back(' ');
        out.append(token);
    }
    return out;
}

std::string compose_document(std::string_view title, std::string_view body)
{
    if (title.empty())
        return std::string{body};
    if (body.empty())
        return std::string{title};
    std::string doc;
    doc.reserve(title.size() + 1 + body.size());
    doc.append(title);
    doc.push_back('\n');
    doc.append(body);
    return doc;
}

ArticleRecord clean_record(ArticleRecord record)
{
    record.title1 = clean_text(record.title1);
    record.text1 = clean_text(record.text1);
    record.title2 = clean_text(record.title2);
    record.text2 = clean_text(record.text2);
    return record;
}

int FoldAssignment::fold(std::string_view pair_id) const
{
    if (auto it = fold_of.find(pair_id); it != fold_of.end())
        return it->second;
    if (auto it = fold_of.find(source_pair_id(pair_id)); it != fold_of.end())
        return it->second;
    throw DataError{"pair id '" + std::string{pair_id} + "' has no fold assignment"};
}

FoldAssignment split_kfold(const std::vector<ArticleRecord> &records, int k, std::uint64_t seed)
{
    if (k < 2)
        throw ConfigError{"fold count must be at least 2, got " + std::to_string(k)};
    if (records.empty())
        throw DataError{"cannot split an empty dataset"};

    std::set<std::string, std::less<>> sources;
    for (const auto &r : records)
        sources.emplace(source_pair_id(r.pair_id));
    if (static_cast<std::size_t>(k) > sources.size())
        throw DataError{"fold count " + std::to_string(k) + " exceeds the " + std::to_string(sources.size()) +
                        " distinct source pairs"};

    std::vector<std::string> ids(sources.begin(), sources.end());
    Rng rng{seed};
    rng.shuffle(std::span{ids});

    FoldAssignment folds;
    folds.k = k;
    folds.seed = seed;
    for (std::size_t i = 0; i < ids.size(); ++i)
        folds.fold_of.emplace(ids[i], static_cast<int>(i % static_cast<std::size_t>(k)));
    for (const auto &r : records)
        folds.fold_of.emplace(r.pair_id, folds.fold_of.find(source_pair_id(r.pair_id))->second);
    return folds;
}

nlohmann::json to_json(const ArticleRecord &r)
{
    nlohmann::json scores = nlohmann::json::object();
    for (std::size_t d = 0; d < ScoreVector::size; ++d)
        scores[std::string{ScoreVector::names[d]}] = r.scores[d];
    return {
        {"pair_id", r.pair_id},
        {"lang1", to_string(r.lang1)},
        {"lang2", to_string(r.lang2)},
        {"title1", r.title1},
        {"text1", r.text1},
        {"title2", r.title2},
        {"text2", r.text2},
        {"scores", std::move(scores)},
        {"provenance", to_string(r.provenance)},
    };
}

ArticleRecord record_from_json(const nlohmann::json &j)
{
    try {
        ArticleRecord r;
        r.pair_id = j.at("pair_id").get<std::string>();
        const auto lang1 = parse_lang(j.at("lang1").get<std::string>());
        const auto lang2 = parse_lang(j.at("lang2").get<std::string>());
        if (!lang1 || !lang2)
            throw DataError{"record '" + r.pair_id + "' has an unsupported language"};
        r.lang1 = *lang1;
        r.lang2 = *lang2;
        r.title1 = j.at("title1").get<std::string>();
        r.text1 = j.at("text1").get<std::string>();
        r.title2 = j.at("title2").get<std::string>();
        r.text2 = j.at("text2").get<std::string>();
        const auto &scores = j.at("scores");
        for (std::size_t d = 0; d < ScoreVector::size; ++d)
            r.scores[d] = scores.at(std::string{ScoreVector::names[d]}).get<double>();
        if (!in_range(r.scores))
            throw DataError{"record '" + r.pair_id + "' has a score outside [1, 4]"};
        r.provenance = j.contains("provenance") ? parse_provenance(j.at("provenance").get<std::string>())
                                                : Provenance::original;
        return r;
    } catch (const nlohmann::json::exception &e) {
        throw DataError{std::string{"malformed record: "} + e.what()};
    }
}

nlohmann::json to_json(const FoldAssignment &folds)
{
    nlohmann::json fold_of = nlohmann::json::object();
    for (const auto &[id, fold] : folds.fold_of)
        fold_of[id] = fold;
    return {{"k", folds.k}, {"seed", folds.seed}, {"fold_of", std::move(fold_of)}};
}

FoldAssignment folds_from_json(const nlohmann::json &j)
{
    try {
        FoldAssignment folds;
        folds.k = j.at("k").get<int>();
        folds.seed = j.at("seed").get<std::uint64_t>();
        for (const auto &[id, fold] : j.at("fold_of").items()) {
            const int f = fold.get<int>();
            if (f < 0 || f >= folds.k)
                throw DataError{"fold " + std::to_string(f) + " of '" + id + "' is out of range"};
            folds.fold_of.emplace(id, f);
        }
        return folds;
    } catch (const nlohmann::json::exception &e) {
        throw DataError{std::string{"malformed fold assignment: "} + e.what()};
    }
}

void write_jsonl(std::ostream &out, const std::vector<ArticleRecord> &records)
{
    for (const auto &r : records)
        out << to_json(r).dump() << '\n';
}

void write_jsonl(const fs::path &path, const std::vector<ArticleRecord> &records)
{
    std::ofstream out{path, std::ios::binary};
    if (!out)
        throw DataError{"cannot write " + path.string()};
    write_jsonl(out, records);
}

std::vector<ArticleRecord> read_jsonl(std::istream &in)
{
    std::vector<ArticleRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError{"dataset " + line_ref(line_no) + ": invalid JSON"};
        try {
            records.push_back(record_from_json(j));
        } catch (const DataError &e) {
            throw DataError{"dataset " + line_ref(line_no) + ": " + e.what()};
        }
    }
    return records;
}

std::vector<ArticleRecord> read_jsonl(const fs::path &path)
{
    std::ifstream in{path, std::ios::binary};
    if (!in)
        throw DataError{"cannot open dataset " + path.string()};
    return read_jsonl(in);
}

} // namespace newsim
