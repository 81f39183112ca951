#include "pefcoh/cli.hpp"

#include "pefcoh/dump.hpp"
#include "pefcoh/error.hpp"
#include "pefcoh/metrics.hpp"
#include "pefcoh/report.hpp"
#include "pefcoh/synth.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace pefcoh::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string safe_name(std::string_view raw)
{
    std::string out;
    for (char c : raw)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out.empty() ? "model" : out;
}

std::vector<std::string> split_csv(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = canonical_token(item);
        if (!item.empty())
            out.push_back(item);
    }
    return out;
}

struct EvaluateOptions {
    std::vector<std::string> dumps;
    std::string annotations;
    std::string lexicon;
    int k = 10;
    std::int64_t patch_size = 130;
    double eps = 1e-8;
    std::string levels;
    std::optional<std::size_t> tc;
    std::string tc_scope = "all";
    std::string class_specific_level{kCombinedLevel};
    std::string lp_class = "groundtruth";
    std::string out_dir = "pefcoh-out";
    std::vector<std::string> formats{"json"};
    bool fixed_timestamp = false;
};

struct CompareOptions {
    std::vector<std::string> reports;
    std::string out_dir;
    std::vector<std::string> formats;
};

struct ValidateOptions {
    std::string dump;
    std::string annotations;
    std::string lexicon;
};

struct SynthOptions {
    std::string spec;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> run_seed;
};

std::optional<fs::path> optional_path(const std::string& p)
{
    return p.empty() ? std::nullopt : std::optional<fs::path>(p);
}

int cmd_validate(const ValidateOptions& opt, std::ostream& out, std::ostream& err)
{
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    std::optional<EvidenceDump> dump;
    std::optional<AnnotatedCorpus> corpus;
    auto attempt = [&](auto&& fn) {
        try {
            fn();
        } catch (const ValidationError& e) {
            errors.emplace_back(e.what());
        } catch (const std::exception& e) {
            errors.emplace_back(e.what());
        }
    };
    attempt([&] { dump = parse_dump(opt.dump); });
    attempt([&] { corpus = load_annotations(opt.annotations, optional_path(opt.lexicon)); });
    if (dump && corpus) {
        for (const Diagnostic& d : cross_validate(*dump, corpus->annotations))
            (d.severity == Severity::Error ? errors : warnings).push_back(d.message);
    }
    for (const std::string& w : warnings)
        out << "warning: " << w << "\n";
    for (const std::string& e : errors)
        err << "error: " << e << "\n";
    if (!errors.empty())
        return kValidationFailure;
    out << "OK\n";
    return kOk;
}

EvalConfig make_config(const EvaluateOptions& opt)
{
    EvalConfig c;
    c.k = opt.k;
    c.patch_size = opt.patch_size;
    c.eps = opt.eps;
    c.levels = split_csv(opt.levels);
    c.class_specific_level = opt.class_specific_level;
    c.tc_override = opt.tc;
    if (opt.tc_scope != "all") {
        c.tc_scope = parse_split(opt.tc_scope);
        if (!c.tc_scope)
            throw Error("--tc-scope must be all, train or test");
    }
    auto lp = parse_lp_class(opt.lp_class);
    if (!lp)
        throw Error("--lp-class must be groundtruth or predicted");
    c.lp_class = *lp;
    return c;
}

std::string localization_csv(const EvaluationResult& r)
{
    std::ostringstream ss;
    ss.precision(17);
    ss << "image_id,rois,activated,iou_top1,iou_top10,iou_all,dsc_top1,dsc_top10,dsc_all\n";
    for (const LocalizationRow& row : r.localization_rows) {
        ss << row.image_id << "," << row.roi_count << "," << row.activated;
        for (const OverlapScore& s : row.scores)
            ss << "," << s.iou;
        for (const OverlapScore& s : row.scores)
            ss << "," << s.dsc;
        ss << "\n";
    }
    return ss.str();
}

int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out)
{
    const EvalConfig config = make_config(opt);
    for (const std::string& f : opt.formats) {
        if (f != "json" && f != "csv" && f != "markdown")
            throw Error("--format must be json, csv or markdown");
    }
    const AnnotatedCorpus corpus = load_annotations(opt.annotations, optional_path(opt.lexicon));

    std::vector<std::future<EvaluationResult>> jobs;
    for (const std::string& path : opt.dumps) {
        jobs.push_back(std::async(std::launch::async, [&corpus, &config, path] {
            return evaluate(parse_dump(path), corpus.annotations, corpus.lexicon, config);
        }));
    }
    std::vector<EvaluationResult> results;
    for (auto& job : jobs)
        results.push_back(job.get());

    const std::string stamp = opt.fixed_timestamp ? std::string(kFixedTimestamp) : utc_now();
    const fs::path dir(opt.out_dir);
    const std::set<std::string> formats(opt.formats.begin(), opt.formats.end());
    std::vector<std::string> names;
    std::set<std::string> taken;
    for (const EvaluationResult& r : results) {
        std::string base = safe_name(r.model_name) + "_seed" + std::to_string(r.seed);
        std::string name = base;
        for (int i = 2; taken.contains(name); ++i)
            name = base + "_" + std::to_string(i);
        taken.insert(name);
        names.push_back(name + ".report.json");
        write_text_file(dir / names.back(), serialize_report(r, stamp));
        if (formats.contains("csv"))
            write_text_file(dir / (name + ".localization.csv"), localization_csv(r));
        out << r.model_name << " seed " << r.seed << ": GP " << r.scores.gp << ", relevance "
            << r.scores.relevance << ", coverage " << r.scores.coverage << "\n";
        for (const std::string& d : r.diagnostics)
            out << "  " << d << "\n";
    }

    const AggregateReport agg = aggregate(results, names);
    write_text_file(dir / "aggregate.json", serialize_aggregate(agg, stamp));
    const ComparisonTable table = build_comparison({agg});
    if (formats.contains("markdown"))
        write_text_file(dir / "aggregate.md", render_markdown(table));
    if (formats.contains("csv"))
        write_text_file(dir / "aggregate.csv", render_csv(table));
    out << "wrote " << results.size() << " report(s) and aggregate.json to " << dir.string() << "\n";
    return kOk;
}

int cmd_compare(const CompareOptions& opt, std::ostream& out)
{
    std::vector<AggregateReport> reports;
    for (const std::string& path : opt.reports)
        reports.push_back(parse_report(path));
    const ComparisonTable table = build_comparison(reports);
    std::set<std::string> formats(opt.formats.begin(), opt.formats.end());
    for (const std::string& f : formats) {
        if (f != "csv" && f != "markdown")
            throw Error("--format must be markdown or csv");
    }
    if (formats.empty())
        formats = {"markdown", "csv"};
    if (opt.out_dir.empty()) {
        out << (formats.contains("markdown") ? render_markdown(table) : render_csv(table));
        return kOk;
    }
    const fs::path dir(opt.out_dir);
    if (formats.contains("markdown"))
        write_text_file(dir / "comparison.md", render_markdown(table));
    if (formats.contains("csv"))
        write_text_file(dir / "comparison.csv", render_csv(table));
    out << render_markdown(table);
    return kOk;
}

int cmd_synth(const SynthOptions& opt, std::ostream& out)
{
    synth::SynthSpec spec = opt.spec.empty() ? synth::SynthSpec{} : synth::parse_spec(opt.spec);
    if (opt.seed)
        spec.rng_seed = *opt.seed;
    if (opt.run_seed)
        spec.run_seed = *opt.run_seed;
    const synth::SynthInstance instance = synth::generate(spec);
    synth::write_instance(instance, opt.out_dir);
    out << "wrote dump.json, annotations.json, lexicon.json, ledger.json to " << opt.out_dir << "\n";
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Prototype evaluation toolkit: coherence and compactness metrics for prototype-based classifiers"};
    app.name(args.empty() ? "pefcoh" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);

    ValidateOptions vopt;
    auto* validate = app.add_subcommand("validate", "Check that a dump and its annotations parse and agree");
    validate->add_option("--dump", vopt.dump, "Evidence dump (JSON)")->required();
    validate->add_option("--annotations", vopt.annotations, "Annotation file (JSON)")->required();
    validate->add_option("--lexicon", vopt.lexicon, "Lexicon file; derived from annotations when absent");

    EvaluateOptions eopt;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score one or more dumps (one per seed run)");
    evaluate_cmd->add_option("--dump", eopt.dumps, "Evidence dump(s)")->required()->expected(1, -1);
    evaluate_cmd->add_option("--annotations", eopt.annotations, "Annotation file")->required();
    evaluate_cmd->add_option("--lexicon", eopt.lexicon, "Lexicon file");
    evaluate_cmd->add_option("--k", eopt.k, "Top-k train patches per prototype")->check(CLI::PositiveNumber)->capture_default_str();
    evaluate_cmd->add_option("--patch-size", eopt.patch_size, "Patch side in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    evaluate_cmd->add_option("--eps", eopt.eps, "Non-zero threshold for weights and contributions")->check(CLI::NonNegativeNumber)->capture_default_str();
    evaluate_cmd->add_option("--levels", eopt.levels, "Comma-separated category levels to report (default: all)");
    evaluate_cmd->add_option("--tc", eopt.tc, "Override the total category count");
    evaluate_cmd->add_option("--tc-scope", eopt.tc_scope, "Images counted for TC: all|train|test")->capture_default_str();
    evaluate_cmd->add_option("--class-specific-level", eopt.class_specific_level, "Level whose categories drive class-specificity")->capture_default_str();
    evaluate_cmd->add_option("--lp-class", eopt.lp_class, "Class signing local prototypes: groundtruth|predicted")->capture_default_str();
    evaluate_cmd->add_option("--out", eopt.out_dir, "Output directory")->capture_default_str();
    evaluate_cmd->add_option("--format", eopt.formats, "json|csv|markdown (repeatable)")->capture_default_str();
    evaluate_cmd->add_flag("--fixed-timestamp", eopt.fixed_timestamp, "Write a constant timestamp");

    CompareOptions copt;
    bool compare_fixed = false;
    auto* compare = app.add_subcommand("compare", "Tabulate reports of several models");
    compare->add_option("reports", copt.reports, "Report or aggregate files, one per model")->expected(0, -1);
    compare->add_option("--report", copt.reports, "Report or aggregate file");
    compare->add_option("--out", copt.out_dir, "Output directory (prints to stdout when absent)");
    compare->add_option("--format", copt.formats, "markdown|csv (repeatable; default both)");
    compare->add_flag("--fixed-timestamp", compare_fixed, "Accepted for symmetry; tables carry no timestamp");

    SynthOptions sopt;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic instance with a ground-truth ledger");
    synth_cmd->add_option("--spec", sopt.spec, "Synth spec (JSON); built-in default when absent");
    synth_cmd->add_option("--out", sopt.out_dir, "Output directory")->required();
    synth_cmd->add_option("--seed", sopt.seed, "Override rng_seed");
    synth_cmd->add_option("--run-seed", sopt.run_seed, "Override run_seed (dump-only variation)");

    std::vector<std::string> argv_rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(argv_rest.begin(), argv_rest.end());
    try {
        app.parse(argv_rest);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kRuntimeError;
    }

    try {
        if (validate->parsed())
            return cmd_validate(vopt, out, err);
        if (evaluate_cmd->parsed())
            return cmd_evaluate(eopt, out);
        if (compare->parsed())
            return cmd_compare(copt, out);
        if (synth_cmd->parsed())
            return cmd_synth(sopt, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kRuntimeError;
}

} // namespace pefcoh::cli
