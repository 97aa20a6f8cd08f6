#include "newsim/cli.hpp"

#include "newsim/augment.hpp"
#include "newsim/checkpoint.hpp"
#include "newsim/corpus.hpp"
#include "newsim/error.hpp"
#include "newsim/eval.hpp"
#include "newsim/http_translator.hpp"
#include "newsim/train.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace newsim {
namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out_dir;
};

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json read_json_file(const fs::path &path)
{
    std::ifstream in{path};
    if (!in)
        throw ConfigError{"cannot open " + path.string()};
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw ConfigError{"invalid JSON in " + path.string() + ": " + e.what()};
    }
}

void require_file(const std::string &path, const char *what)
{
    if (!fs::is_regular_file(path))
        throw ConfigError{std::string{what} + " '" + path + "' does not exist or is not a file"};
}

void require_dir(const std::string &path, const char *what)
{
    if (!fs::is_directory(path))
        throw ConfigError{std::string{what} + " '" + path + "' does not exist or is not a directory"};
}

std::ofstream open_output(const fs::path &path)
{
    std::ofstream out{path, std::ios::binary};
    if (!out)
        throw DataError{"cannot write " + path.string()};
    return out;
}

RunConfig load_run_config(const GlobalOptions &g)
{
    RunConfig config = g.config_path.empty() ? RunConfig{} : run_config_from_json(read_json_file(g.config_path));
    if (g.seed)
        config.seed = *g.seed;
    config.validate();
    return config;
}

// Collects what a command read and wrote; written once per run as
// manifest.json in the output directory.
class Manifest {
public:
    Manifest(std::string command, const GlobalOptions &g) : g_{g}
    {
        doc_["tool"] = "newsim";
        doc_["version"] = tool_version;
        doc_["command"] = std::move(command);
        doc_["output_dir"] = g.out_dir;
        doc_["jobs"] = g.jobs;
        doc_["started_at"] = utc_now();
        doc_["inputs"] = json::object();
        doc_["outputs"] = json::array();
    }

    void input(const std::string &name, const std::string &path) { doc_["inputs"][name] = path; }
    void output(const std::string &file) { doc_["outputs"].push_back(file); }
    void set(const std::string &key, json value) { doc_[key] = std::move(value); }

    void seeds(std::uint64_t global)
    {
        const auto plan = SeedPlan::from_global(global);
        doc_["seeds"] = {{"global", global},
                         {"split", plan.split},
                         {"init", plan.init},
                         {"dropout", plan.dropout},
                         {"sampling", plan.sampling}};
    }

    void write(const std::string &status)
    {
        doc_["status"] = status;
        doc_["finished_at"] = utc_now();
        auto out = open_output(fs::path{g_.out_dir} / "manifest.json");
        out << doc_.dump(2) << '\n';
    }

private:
    const GlobalOptions &g_;
    json doc_;
};

// Runs `produce` after creating the output directory and writes the
// manifest afterwards, also when producing fails part-way.
template <typename F>
void produce_outputs(Manifest &manifest, const GlobalOptions &g, F &&produce)
{
    fs::create_directories(g.out_dir);
    try {
        produce();
    } catch (const std::exception &e) {
        manifest.write(std::string{"failed: "} + e.what());
        throw;
    }
    manifest.write("ok");
}

// ---------------------------------------------------------------- ingest

struct IngestOptions {
    std::string index;
    std::string articles;
};

void cmd_ingest(const GlobalOptions &g, const IngestOptions &o, std::ostream &out, std::ostream &err)
{
    require_file(o.index, "pair index");
    require_dir(o.articles, "article directory");
    auto loaded = load_dataset(o.index, o.articles);
    for (auto &r : loaded.records)
        r = clean_record(std::move(r));
    for (const auto &w : loaded.warnings)
        err << "warning: " << w << '\n';

    Manifest manifest{"ingest", g};
    manifest.input("index", o.index);
    manifest.input("articles", o.articles);
    manifest.set("counts", {{"loaded", loaded.records.size()},
                            {"skipped", loaded.skipped()},
                            {"missing", loaded.missing},
                            {"malformed", loaded.malformed}});
    produce_outputs(manifest, g, [&] {
        write_jsonl(fs::path{g.out_dir} / "dataset.jsonl", loaded.records);
        manifest.output("dataset.jsonl");
    });
    out << "loaded " << loaded.records.size() << ", skipped " << loaded.skipped() << " (missing "
        << loaded.missing << ", malformed " << loaded.malformed << ")\n";
}

// ---------------------------------------------------------------- augment

struct AugmentOptions {
    std::string dataset;
    std::string plan;
    std::string translator = "identity";
    std::string translator_config;
    std::size_t in_flight = 4;
    bool skip_back_translation = false;
};

std::unique_ptr<Translator> make_translator(const AugmentOptions &o)
{
    if (o.translator == "identity")
        return std::make_unique<IdentityTranslator>();
    if (o.translator == "tagging")
        return std::make_unique<TaggingTranslator>();
    if (o.translator == "http") {
        if (o.translator_config.empty())
            throw ConfigError{"--translator http needs --translator-config"};
        return std::make_unique<HttpTranslator>(
            http_translator_config_from_json(read_json_file(o.translator_config)));
    }
    throw ConfigError{"unknown translator '" + o.translator + "'"};
}

void cmd_augment(const GlobalOptions &g, const AugmentOptions &o, std::ostream &out)
{
    require_file(o.dataset, "dataset");
    const auto records = read_jsonl(fs::path{o.dataset});
    const AugmentPlan plan = o.plan.empty() ? build_default_plan() : read_plan(fs::path{o.plan});
    const std::uint64_t seed = g.seed.value_or(g.config_path.empty() ? 0 : load_run_config(g).seed);
    auto translator = make_translator(o);

    std::vector<ArticleRecord> augmented;
    if (!o.skip_back_translation)
        for (const auto &r : records)
            if (r.provenance == Provenance::original && back_translation_eligible(r))
                augmented.push_back(back_translate(r, *translator));
    const std::size_t back_translated = augmented.size();
    auto tt = translate_train(records, plan, *translator, seed, TranslateOptions{o.in_flight, Lang::en});
    const std::size_t translated = tt.size();
    augmented.insert(augmented.end(), std::make_move_iterator(tt.begin()), std::make_move_iterator(tt.end()));

    std::vector<ArticleRecord> combined = records;
    combined.insert(combined.end(), augmented.begin(), augmented.end());

    Manifest manifest{"augment", g};
    manifest.input("dataset", o.dataset);
    manifest.input("plan", o.plan.empty() ? std::string{"(default)"} : o.plan);
    manifest.set("translator", o.translator);
    manifest.set("seed", seed);
    json plan_rows = json::array();
    for (const auto &row : plan.rows)
        plan_rows.push_back(to_json(row));
    manifest.set("plan_rows", plan_rows);
    manifest.set("counts", {{"input", records.size()},
                            {"back_translated", back_translated},
                            {"translate_train", translated},
                            {"output", combined.size()}});
    produce_outputs(manifest, g, [&] {
        write_jsonl(fs::path{g.out_dir} / "augmented.jsonl", augmented);
        manifest.output("augmented.jsonl");
        write_jsonl(fs::path{g.out_dir} / "dataset.jsonl", combined);
        manifest.output("dataset.jsonl");
    });
    out << "input " << records.size() << ", back-translated " << back_translated << ", translate-train "
        << translated << ", output " << combined.size() << '\n';
}

// ---------------------------------------------------------------- split

struct SplitOptions {
    std::string dataset;
    std::optional<int> k;
};

void cmd_split(const GlobalOptions &g, const SplitOptions &o, std::ostream &out)
{
    require_file(o.dataset, "dataset");
    RunConfig config = load_run_config(g);
    if (o.k)
        config.folds = *o.k;
    const auto records = read_jsonl(fs::path{o.dataset});
    const auto folds = split_kfold(records, config.folds, SeedPlan::from_global(config.seed).split);

    Manifest manifest{"split", g};
    manifest.input("dataset", o.dataset);
    manifest.seeds(config.seed);
    manifest.set("k", config.folds);
    produce_outputs(manifest, g, [&] {
        open_output(fs::path{g.out_dir} / "folds.json") << to_json(folds).dump() << '\n';
        manifest.output("folds.json");
    });
    std::vector<std::size_t> sizes(static_cast<std::size_t>(folds.k));
    for (const auto &r : records)
        ++sizes[static_cast<std::size_t>(folds.fold(r.pair_id))];
    out << "split " << records.size() << " records into " << folds.k << " folds:";
    for (auto s : sizes)
        out << ' ' << s;
    out << '\n';
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    std::string dataset;
    std::string split;
};

std::string checkpoint_name(int fold)
{
    return "fold_" + std::to_string(fold) + ".ckpt";
}

void cmd_train(const GlobalOptions &g, const TrainOptions &o, std::ostream &out, std::ostream &err)
{
    require_file(o.dataset, "dataset");
    if (!o.split.empty())
        require_file(o.split, "split file");
    const RunConfig config = load_run_config(g);
    const auto records = read_jsonl(fs::path{o.dataset});
    FoldAssignment folds = o.split.empty()
                               ? split_kfold(records, config.folds, SeedPlan::from_global(config.seed).split)
                               : folds_from_json(read_json_file(o.split));
    for (const auto &r : records)
        folds.fold(r.pair_id); // every record must be assigned before training starts

    const Tokenizer tokenizer{config.model.vocab_size};
    const auto encoded = encode_records(records, tokenizer, policy_from_name(config.policy));

    Manifest manifest{"train", g};
    manifest.input("dataset", o.dataset);
    if (!o.split.empty())
        manifest.input("split", o.split);
    if (!g.config_path.empty())
        manifest.input("config", g.config_path);
    manifest.set("config", to_json(config));
    manifest.seeds(config.seed);

    std::vector<FoldResult> results;
    produce_outputs(manifest, g, [&] {
        const fs::path dir{g.out_dir};
        open_output(dir / "config.json") << to_json(config).dump(2) << '\n';
        manifest.output("config.json");
        open_output(dir / "folds.json") << to_json(folds).dump() << '\n';
        manifest.output("folds.json");

        std::mutex log_mutex;
        results = cross_validate(records, encoded, folds, config, g.jobs, [&](const EpochMetrics &m) {
            std::lock_guard lock{log_mutex};
            err << "fold " << m.fold << " epoch " << m.epoch << " train_loss " << m.train_loss << " val_pearson "
                << (m.val_pearson ? format_percent(*m.val_pearson) : std::string{"undefined"}) << '\n';
        });

        auto metrics = open_output(dir / "metrics.jsonl");
        for (const auto &r : results)
            for (const auto &m : r.training_curve)
                metrics << to_json(m).dump() << '\n';
        manifest.output("metrics.jsonl");
        for (const auto &r : results) {
            save_checkpoint(dir / checkpoint_name(r.fold_index), r.best_checkpoint);
            manifest.output(checkpoint_name(r.fold_index));
        }
    });
    for (const auto &r : results)
        out << "fold " << r.fold_index << " best epoch " << r.best_epoch << " val_pearson "
            << (r.best_val_pearson ? format_percent(*r.best_val_pearson) : std::string{"undefined"}) << '\n';
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
    std::string dataset;
    std::string ensemble;
    std::string policy;
};

std::vector<fs::path> ensemble_members(const fs::path &path)
{
    if (fs::is_regular_file(path))
        return {path};
    if (!fs::is_directory(path))
        throw ConfigError{"ensemble '" + path.string() + "' is neither a checkpoint nor a directory"};
    static const std::regex pattern{R"(fold_(\d+)\.ckpt)"};
    std::vector<std::pair<long, fs::path>> found;
    for (const auto &entry : fs::directory_iterator{path}) {
        std::smatch m;
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, m, pattern))
            found.emplace_back(std::stol(m[1]), entry.path());
    }
    if (found.empty())
        throw DataError{"no fold_<i>.ckpt files in " + path.string()};
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto &[_, p] : found)
        out.push_back(std::move(p));
    return out;
}

std::string evaluation_policy(const GlobalOptions &g, const EvaluateOptions &o)
{
    if (!o.policy.empty())
        return o.policy;
    const fs::path ensemble{o.ensemble};
    const auto run_config = (fs::is_directory(ensemble) ? ensemble : ensemble.parent_path()) / "config.json";
    if (fs::is_regular_file(run_config))
        return run_config_from_json(read_json_file(run_config)).policy;
    if (!g.config_path.empty())
        return load_run_config(g).policy;
    return std::string{default_policy_name};
}

void cmd_evaluate(const GlobalOptions &g, const EvaluateOptions &o, std::ostream &out)
{
    require_file(o.dataset, "dataset");
    const auto records = read_jsonl(fs::path{o.dataset});
    const auto policy_name = evaluation_policy(g, o);
    const auto policy = policy_from_name(policy_name);

    EnsembleModel ensemble;
    const auto members = ensemble_members(o.ensemble);
    for (const auto &p : members)
        ensemble.members.push_back(load_checkpoint(p));
    const auto vocab = ensemble.members.front().config.vocab_size;
    for (const auto &m : ensemble.members)
        if (m.config.vocab_size != vocab)
            throw ConfigError{"ensemble members disagree on the vocabulary size"};

    const Tokenizer tokenizer{vocab};
    std::vector<std::pair<std::string, double>> predictions;
    predictions.reserve(records.size());
    for (const auto &r : records) {
        const auto pair = encode_pair(tokenizer, compose_document(r.title1, r.text1),
                                      compose_document(r.title2, r.text2), policy);
        const double y = ensemble_predict(ensemble, pair).overall();
        if (!std::isfinite(y))
            throw NumericError{"non-finite prediction for " + r.pair_id};
        predictions.emplace_back(r.pair_id, clip_score(y));
    }
    const auto report = per_pair_report(records, predictions);

    Manifest manifest{"evaluate", g};
    manifest.input("dataset", o.dataset);
    manifest.input("ensemble", o.ensemble);
    manifest.set("policy", policy_name);
    json member_names = json::array();
    for (const auto &p : members)
        member_names.push_back(p.string());
    manifest.set("members", member_names);
    produce_outputs(manifest, g, [&] {
        const fs::path dir{g.out_dir};
        auto pred_out = open_output(dir / "predictions.csv");
        write_predictions_csv(pred_out, predictions);
        manifest.output("predictions.csv");
        auto report_out = open_output(dir / "report.csv");
        write_report_csv(report_out, report);
        manifest.output("report.csv");
        open_output(dir / "summary.json") << report_summary_json(report).dump(2) << '\n';
        manifest.output("summary.json");
    });
    out << "evaluated " << records.size() << " pairs with " << ensemble.members.size() << " member(s); pearson "
        << (report.overall_pearson ? format_percent(*report.overall_pearson) : std::string{"undefined"}) << '\n';
}

// ---------------------------------------------------------------- report

struct ReportOptions {
    std::string metrics;
};

void cmd_report(const GlobalOptions &g, const ReportOptions &o, std::ostream &out)
{
    require_file(o.metrics, "metrics log");
    std::ifstream in{o.metrics};
    std::map<int, std::vector<EpochMetrics>> curves;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto m = epoch_metrics_from_json(json::parse(line));
            curves[m.fold].push_back(m);
        } catch (const json::exception &e) {
            throw DataError{"metrics line " + std::to_string(n) + ": " + e.what()};
        } catch (const DataError &e) {
            throw DataError{"metrics line " + std::to_string(n) + ": " + e.what()};
        }
    }
    if (curves.empty())
        throw DataError{"metrics log " + o.metrics + " holds no records"};

    json folds = json::array();
    std::ostringstream table;
    table << std::left << std::setw(8) << "fold" << std::setw(12) << "best_epoch" << "pearson\n";
    bool all_defined = true;
    double sum = 0.0;
    for (const auto &[fold, curve] : curves) {
        const EpochMetrics *best = nullptr;
        for (const auto &m : curve)
            if (m.val_pearson && (!best || !best->val_pearson || *m.val_pearson > *best->val_pearson))
                best = &m;
        if (!best || !best->val_pearson) {
            all_defined = false;
            table << std::setw(8) << fold << std::setw(12) << "-" << "undefined\n";
            folds.push_back({{"fold", fold}, {"best_epoch", nullptr}, {"pearson", nullptr}});
            continue;
        }
        sum += *best->val_pearson;
        table << std::setw(8) << fold << std::setw(12) << best->epoch << format_percent(*best->val_pearson) << '\n';
        folds.push_back({{"fold", fold}, {"best_epoch", best->epoch}, {"pearson", *best->val_pearson}});
    }
    json mean = nullptr;
    if (all_defined)
        mean = sum / static_cast<double>(curves.size());
    table << std::setw(20) << "mean" << (all_defined ? format_percent(mean.get<double>()) : std::string{"undefined"})
          << '\n';

    Manifest manifest{"report", g};
    manifest.input("metrics", o.metrics);
    produce_outputs(manifest, g, [&] {
        const json summary{{"folds", folds}, {"mean_pearson", mean}};
        open_output(fs::path{g.out_dir} / "report.json") << summary.dump(2) << '\n';
        manifest.output("report.json");
    });
    out << table.str();
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
    CLI::App app{"Multilingual news-article similarity training engine", "newsim"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", tool_version);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "Run config (JSON)");
    app.add_option("--seed", g.seed, "Global seed; overrides the config");
    app.add_option("--jobs", g.jobs, "Folds trained concurrently")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out_dir, "Output directory")->required();

    IngestOptions ingest;
    auto *ingest_cmd = app.add_subcommand("ingest", "Load, clean and compose the labelled pairs");
    ingest_cmd->add_option("--index", ingest.index, "Pair index CSV")->required();
    ingest_cmd->add_option("--articles", ingest.articles, "Directory of <article_id>.json files")->required();

    AugmentOptions augment;
    auto *augment_cmd = app.add_subcommand("augment", "Back-translation and translate-train");
    augment_cmd->add_option("--dataset", augment.dataset, "Dataset JSON-lines")->required();
    augment_cmd->add_option("--plan", augment.plan, "Plan JSON-lines; default arrangement when omitted");
    augment_cmd->add_option("--translator", augment.translator, "identity, tagging or http")
        ->check(CLI::IsMember({"identity", "tagging", "http"}));
    augment_cmd->add_option("--translator-config", augment.translator_config, "HTTP translator config (JSON)");
    augment_cmd->add_option("--in-flight", augment.in_flight, "Concurrent translation requests")
        ->check(CLI::PositiveNumber);
    augment_cmd->add_flag("--skip-back-translation", augment.skip_back_translation);

    SplitOptions split;
    auto *split_cmd = app.add_subcommand("split", "Assign k folds");
    split_cmd->add_option("--dataset", split.dataset, "Dataset JSON-lines")->required();
    split_cmd->add_option("--k", split.k, "Number of folds; overrides the config");

    TrainOptions train;
    auto *train_cmd = app.add_subcommand("train", "Cross-validate and keep each fold's best checkpoint");
    train_cmd->add_option("--dataset", train.dataset, "Dataset JSON-lines")->required();
    train_cmd->add_option("--split", train.split, "folds.json from the split command");

    EvaluateOptions evaluate;
    auto *evaluate_cmd = app.add_subcommand("evaluate", "Ensemble prediction, clipping and per-pair report");
    evaluate_cmd->add_option("--dataset", evaluate.dataset, "Dataset JSON-lines")->required();
    evaluate_cmd->add_option("--ensemble", evaluate.ensemble, "Training output directory or one checkpoint")
        ->required();
    evaluate_cmd->add_option("--policy", evaluate.policy, "Truncation preset, e.g. h200t56");

    ReportOptions report;
    auto *report_cmd = app.add_subcommand("report", "Summarize fold curves of a metrics log");
    report_cmd->add_option("--metrics", report.metrics, "metrics.jsonl from the train command")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::success : exit_code::usage;
    }

    try {
        if (*ingest_cmd)
            cmd_ingest(g, ingest, out, err);
        else if (*augment_cmd)
            cmd_augment(g, augment, out);
        else if (*split_cmd)
            cmd_split(g, split, out);
        else if (*train_cmd)
            cmd_train(g, train, out, err);
        else if (*evaluate_cmd)
            cmd_evaluate(g, evaluate, out);
        else if (*report_cmd)
            cmd_report(g, report, out);
        return exit_code::success;
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << '\n';
        return exit_code::usage;
    } catch (const NumericError &e) {
        err << "numeric failure: " << e.what() << '\n';
        return exit_code::numeric;
    } catch (const DataError &e) {
        err << "data error: " << e.what() << '\n';
        return exit_code::data;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return exit_code::data;
    }
}

} // namespace newsim
