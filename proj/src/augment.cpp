#include "newsim/augment.hpp"

#include "newsim/error.hpp"
#include "newsim/rng.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <optional>
#include <thread>
#include <utility>

namespace newsim {

std::string IdentityTranslator::translate(std::string_view text, Lang, Lang)
{
    return std::string{text};
}

std::string TaggingTranslator::translate(std::string_view text, Lang, Lang target)
{
    const auto tag = to_string(target);
    std::string out;
    out.reserve(text.size() + 2 * tag.size() + 5);
    out.append("[").append(tag).append("]").append(text).append("[/").append(tag).append("]");
    return out;
}

std::string CountingTranslator::translate(std::string_view text, Lang source, Lang target)
{
    {
        std::lock_guard lock{mutex_};
        ++calls_[Key{std::string{text}, source, target}];
    }
    return inner_.translate(text, source, target);
}

std::size_t CountingTranslator::total_calls() const
{
    std::lock_guard lock{mutex_};
    std::size_t n = 0;
    for (const auto &[key, count] : calls_)
        n += count;
    return n;
}

std::map<CountingTranslator::Key, std::size_t> CountingTranslator::calls() const
{
    std::lock_guard lock{mutex_};
    return calls_;
}

std::size_t AugmentPlan::emitted_count() const noexcept
{
    std::size_t n = 0;
    for (const auto &row : rows)
        n += row.quantity * row.targets.size();
    return n;
}

namespace {

void validate_row(const AugmentPlanRow &row, const std::string &where)
{
    if (row.targets.empty())
        throw ConfigError{where + " has no targets"};
    for (std::size_t t = 0; t < row.targets.size(); ++t) {
        if (row.targets[t] == row.origin)
            throw ConfigError{where + " lists its own origin as a target"};
        if (std::find(row.targets.begin(), row.targets.begin() + static_cast<std::ptrdiff_t>(t),
                      row.targets[t]) != row.targets.begin() + static_cast<std::ptrdiff_t>(t))
            throw ConfigError{where + " repeats target " + to_tag(row.targets[t])};
    }
}

} // namespace

void AugmentPlan::validate() const
{
    for (std::size_t r = 0; r < rows.size(); ++r)
        validate_row(rows[r], "plan row " + std::to_string(r + 1) + " (" + to_tag(rows[r].origin) + ")");
}

AugmentPlan build_default_plan()
{
    using L = Lang;
    return AugmentPlan{{
        {{L::en, L::en}, 401, {{L::ru, L::ru}}},
        {{L::en, L::en}, 800, {{L::zh, L::zh}, {L::zh, L::en}}},
        {{L::en, L::en}, 586, {{L::it, L::it}, {L::es, L::en}, {L::es, L::it}}},
        {{L::pl, L::pl}, 349, {{L::pl, L::en}}},
        {{L::de, L::en}, 317, {{L::de, L::fr}, {L::fr, L::fr}}},
    }};
}

nlohmann::json to_json(const AugmentPlanRow &row)
{
    nlohmann::json targets = nlohmann::json::array();
    for (const auto &t : row.targets)
        targets.push_back(to_tag(t));
    return {{"origin", to_tag(row.origin)}, {"quantity", row.quantity}, {"targets", std::move(targets)}};
}

AugmentPlanRow plan_row_from_json(const nlohmann::json &j)
{
    try {
        AugmentPlanRow row;
        row.origin = parse_lang_pair(j.at("origin").get<std::string>());
        const auto &q = j.at("quantity");
        if (!q.is_number_integer() || q.get<long long>() < 0)
            throw ConfigError{"quantity must be a non-negative integer"};
        row.quantity = q.get<std::size_t>();
        for (const auto &t : j.at("targets"))
            row.targets.push_back(parse_lang_pair(t.get<std::string>()));
        return row;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError{std::string{"malformed plan row: "} + e.what()};
    } catch (const DataError &e) {
        throw ConfigError{std::string{"malformed plan row: "} + e.what()};
    }
}

void write_plan(std::ostream &out, const AugmentPlan &plan)
{
    for (const auto &row : plan.rows)
        out << to_json(row).dump() << '\n';
}

AugmentPlan read_plan(std::istream &in)
{
    AugmentPlan plan;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            plan.rows.push_back(plan_row_from_json(nlohmann::json::parse(line)));
            validate_row(plan.rows.back(), "row " + to_tag(plan.rows.back().origin));
        } catch (const nlohmann::json::exception &e) {
            throw ConfigError{"plan line " + std::to_string(n) + ": " + e.what()};
        } catch (const ConfigError &e) {
            throw ConfigError{"plan line " + std::to_string(n) + ": " + e.what()};
        }
    }
    return plan;
}

AugmentPlan read_plan(const std::filesystem::path &path)
{
    std::ifstream in{path};
    if (!in)
        throw ConfigError{"cannot open plan file " + path.string()};
    return read_plan(in);
}

namespace {

struct Side {
    std::string title;
    std::string text;
};

Side side_of(const ArticleRecord &r, int side)
{
    return side == 0 ? Side{r.title1, r.text1} : Side{r.title2, r.text2};
}

Lang lang_of(const ArticleRecord &r, int side)
{
    return side == 0 ? r.lang1 : r.lang2;
}

// Title and body travel in one request separated by a newline, so one
// article side costs one call.
Side translate_side(Translator &translator, const Side &in, Lang source, Lang target)
{
    if (in.title.empty() && in.text.empty())
        return {};
    if (in.title.empty())
        return {"", translator.translate(in.text, source, target)};
    if (in.text.empty())
        return {translator.translate(in.title, source, target), ""};
    if (in.title.find('\n') != std::string::npos)
        return {translator.translate(in.title, source, target), translator.translate(in.text, source, target)};

    const auto joined = translator.translate(in.title + "\n" + in.text, source, target);
    const auto nl = joined.find('\n');
    if (nl == std::string::npos)
        throw DataError{"translation " + std::string{to_string(source)} + "->" + std::string{to_string(target)} +
                        " dropped the title/body separator"};
    return {joined.substr(0, nl), joined.substr(nl + 1)};
}

void require_support(const Translator &translator, Lang source, Lang target)
{
    if (!translator.supports(source, target))
        throw ConfigError{"translator does not support " + std::string{to_string(source)} + "->" +
                          std::string{to_string(target)}};
}

// Runs task(0..n-1) with at most `limit` tasks in flight. Rethrows the
// exception of the lowest failing index.
void run_bounded(std::size_t n, std::size_t limit, const std::function<void(std::size_t)> &task)
{
    const std::size_t workers = std::min(n, std::max<std::size_t>(limit, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    task(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto &t : pool)
        t.join();
    for (const auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

struct Request {
    std::size_t record;
    int side;
    Lang target;

    auto operator<=>(const Request &) const = default;
};

} // namespace

ArticleRecord back_translate(const ArticleRecord &record, Translator &translator, Lang pivot)
{
    if (record.lang1 == pivot && record.lang2 == pivot)
        throw DataError{"record " + record.pair_id + " is already " + to_tag(record.langs()) +
                        "; nothing to back-translate"};
    ArticleRecord out = record;
    out.pair_id = record.pair_id + "_bt";
    out.provenance = Provenance::back_translated;
    for (int side = 0; side < 2; ++side) {
        const Lang lang = lang_of(record, side);
        if (lang == pivot)
            continue;
        require_support(translator, lang, pivot);
        require_support(translator, pivot, lang);
        const Side there = translate_side(translator, side_of(record, side), lang, pivot);
        const Side back = translate_side(translator, there, pivot, lang);
        (side == 0 ? out.title1 : out.title2) = back.title;
        (side == 0 ? out.text1 : out.text2) = back.text;
    }
    return out;
}

bool back_translation_eligible(const ArticleRecord &record) noexcept
{
    const auto langs = record.langs();
    if (langs.monolingual())
        return langs.first != Lang::en;
    return langs == LangPair{Lang::de, Lang::en};
}

std::vector<ArticleRecord> translate_train(const std::vector<ArticleRecord> &records, const AugmentPlan &plan,
                                           Translator &translator, std::uint64_t seed,
                                           const TranslateOptions &options)
{
    plan.validate();
    const Lang pivot = options.pivot;

    // Sample origins: per origin tag, a seeded shuffle of candidates sorted by
    // id, dealt to rows in plan order.
    std::map<std::string, std::vector<std::size_t>> pools;
    std::map<std::string, std::size_t> cursor;
    std::vector<std::vector<std::size_t>> selected(plan.rows.size());
    for (std::size_t r = 0; r < plan.rows.size(); ++r) {
        const auto &row = plan.rows[r];
        const auto tag = to_tag(row.origin);
        if (!pools.contains(tag)) {
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < records.size(); ++i)
                if (records[i].provenance == Provenance::original && records[i].langs() == row.origin)
                    pool.push_back(i);
            std::sort(pool.begin(), pool.end(),
                      [&](std::size_t a, std::size_t b) { return records[a].pair_id < records[b].pair_id; });
            Rng rng{derive_seed(seed, "translate_train/" + tag)};
            rng.shuffle(std::span{pool});
            pools.emplace(tag, std::move(pool));
        }
        const auto &pool = pools.at(tag);
        auto &used = cursor[tag];
        if (pool.size() - used < row.quantity)
            throw DataError{"plan row " + std::to_string(r + 1) + " (" + tag + ", quantity " +
                            std::to_string(row.quantity) + ") needs " + std::to_string(row.quantity) +
                            " origin samples but only " + std::to_string(pool.size() - used) + " of " +
                            std::to_string(pool.size()) + " remain"};
        selected[r].assign(pool.begin() + static_cast<std::ptrdiff_t>(used),
                           pool.begin() + static_cast<std::ptrdiff_t>(used + row.quantity));
        used += row.quantity;
    }

    // Collect distinct (record, side, target language) translations.
    std::map<Request, std::optional<Side>> results;
    for (std::size_t r = 0; r < plan.rows.size(); ++r)
        for (std::size_t i : selected[r])
            for (const auto &target : plan.rows[r].targets)
                for (int side = 0; side < 2; ++side) {
                    const Lang from = lang_of(records[i], side);
                    const Lang to = side == 0 ? target.first : target.second;
                    if (from == to)
                        continue;
                    results.emplace(Request{i, side, to}, std::nullopt);
                    if (from != pivot && to != pivot)
                        results.emplace(Request{i, side, pivot}, std::nullopt);
                }

    std::vector<Request> direct;
    std::vector<Request> chained;
    for (const auto &[req, _] : results) {
        const Lang from = lang_of(records[req.record], req.side);
        if (from == pivot || req.target == pivot) {
            require_support(translator, from, req.target);
            direct.push_back(req);
        } else {
            require_support(translator, pivot, req.target);
            chained.push_back(req);
        }
    }

    run_bounded(direct.size(), options.max_in_flight, [&](std::size_t k) {
        const auto &req = direct[k];
        const auto &rec = records[req.record];
        results.at(req) = translate_side(translator, side_of(rec, req.side), lang_of(rec, req.side), req.target);
    });
    run_bounded(chained.size(), options.max_in_flight, [&](std::size_t k) {
        const auto &req = chained[k];
        const Side &mid = *results.at(Request{req.record, req.side, pivot});
        results.at(req) = translate_side(translator, mid, pivot, req.target);
    });

    std::vector<ArticleRecord> out;
    out.reserve(plan.emitted_count());
    for (std::size_t r = 0; r < plan.rows.size(); ++r)
        for (std::size_t i : selected[r])
            for (const auto &target : plan.rows[r].targets) {
                const auto &src = records[i];
                ArticleRecord rec = src;
                rec.pair_id = src.pair_id + "_tt_" + to_tag(target);
                rec.lang1 = target.first;
                rec.lang2 = target.second;
                rec.provenance = Provenance::translate_train;
                for (int side = 0; side < 2; ++side) {
                    const Lang to = side == 0 ? target.first : target.second;
                    if (lang_of(src, side) == to)
                        continue;
                    const Side &s = *results.at(Request{i, side, to});
                    (side == 0 ? rec.title1 : rec.title2) = s.title;
                    (side == 0 ? rec.text1 : rec.text2) = s.text;
                }
                out.push_back(std::move(rec));
            }
    return out;
}

} // namespace newsim
