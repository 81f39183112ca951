#include "pefcoh/report.hpp"
#include "support/fixtures.hpp"
#include "support/tree.hpp"

#include <gtest/gtest.h>

using namespace pefcoh;
using namespace pefcoh::testing;

namespace {

void write_fixture(const Fixture& f, const TempDir& dir)
{
    write_text_file(dir / "dump.json", serialize_dump(f.dump));
    write_text_file(dir / "annotations.json", serialize_annotations(f.annotations));
    write_text_file(dir / "lexicon.json", serialize_lexicon(f.lexicon));
}

} // namespace

TEST(CliValidate, ValidTriple)
{
    TempDir dir("validate-ok");
    write_fixture(two_prototype_fixture(), dir);
    const CliResult r = run_cli({"validate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json",
                                 "--lexicon", dir / "lexicon.json"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "OK\n");
}

TEST(CliValidate, ClassMismatchExitsTwo)
{
    TempDir dir("validate-classes");
    Fixture f = two_prototype_fixture();
    f.annotations.class_names = {"normal", "cancer"};
    write_fixture(f, dir);
    const CliResult r = run_cli({"validate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("benign"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("cancer"), std::string::npos) << r.err;
}

TEST(CliValidate, MissingImageWarnsButPasses)
{
    TempDir dir("validate-missing");
    Fixture f = two_prototype_fixture();
    f.annotations.images.erase(f.annotations.images.begin() + 1);
    write_fixture(f, dir);
    const CliResult r = run_cli({"validate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("warning"), std::string::npos);
    EXPECT_NE(r.out.find("OK"), std::string::npos);
}

TEST(CliValidate, BadDumpReportsEveryProblem)
{
    TempDir dir("validate-bad");
    write_text_file(dir / "dump.json", "{\"format\":\"pefcoh-dump/1\"}");
    write_text_file(dir / "annotations.json", "[]");
    const CliResult r = run_cli({"validate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json"});
    EXPECT_EQ(r.code, 2);
    EXPECT_GE(std::count(r.err.begin(), r.err.end(), '\n'), 2);
}

TEST(CliEvaluate, KOverrideRecordedAndSingleRunOmitsStd)
{
    TempDir dir("evaluate-k");
    write_fixture(ratio_fixture(12, 6, 2), dir);
    const CliResult r = run_cli({"evaluate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json",
                                 "--k", "5", "--out", dir / "out", "--fixed-timestamp"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto files = read_tree(dir.path() / "out");
    ASSERT_TRUE(files.contains("ratio_seed0.report.json"));
    const auto report = nlohmann::json::parse(files.at("ratio_seed0.report.json"));
    EXPECT_EQ(report.at("config").at("k"), 5);
    EXPECT_EQ(report.at("config").at("patch_size"), 130);
    const AggregateReport agg = parse_report_text(files.at("aggregate.json"));
    for (const auto& [key, st] : agg.properties)
        EXPECT_FALSE(st.std.has_value()) << key;
}

TEST(CliEvaluate, SeedsAggregateMatchesLedgerSpread)
{
    TempDir dir("evaluate-seeds");
    std::vector<std::string> args{"evaluate"};
    std::vector<synth::GroundTruthLedger> ledgers;
    for (std::uint64_t run : {11, 12, 13}) {
        synth::SynthSpec spec;
        spec.run_seed = run;
        const synth::SynthInstance inst = synth::generate(spec);
        const std::string sub = "run" + std::to_string(run);
        synth::write_instance(inst, dir.path() / sub);
        args.insert(args.end(), {"--dump", dir / (sub + "/dump.json")});
        ledgers.push_back(inst.ledger);
    }
    EXPECT_EQ(read_tree(dir.path() / "run11").at("annotations.json"),
              read_tree(dir.path() / "run13").at("annotations.json"));
    EXPECT_NE(read_tree(dir.path() / "run11").at("dump.json"), read_tree(dir.path() / "run13").at("dump.json"));
    args.insert(args.end(), {"--annotations", dir / "run11/annotations.json", "--lexicon", dir / "run11/lexicon.json",
                             "--patch-size", "64", "--out", dir / "out", "--fixed-timestamp"});
    const CliResult r = run_cli(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const AggregateReport agg = parse_report(dir.path() / "out/aggregate.json");
    EXPECT_EQ(agg.seeds, (std::vector<std::int64_t>{11, 12, 13}));
    std::vector<PropertyScores> ledger_scores;
    for (const auto& l : ledgers)
        ledger_scores.push_back(l.scores);
    for (const auto& [key, expected] : aggregate(ledger_scores)) {
        const Stat* got = agg.find(key);
        ASSERT_NE(got, nullptr) << key;
        ASSERT_EQ(got->mean.has_value(), expected.mean.has_value()) << key;
        if (expected.mean) {
            EXPECT_NEAR(*got->mean, *expected.mean, 1e-9) << key;
            EXPECT_NEAR(*got->std, *expected.std, 1e-9) << key;
        }
    }
}

TEST(CliEvaluate, MetricErrorIsOneLineExitOne)
{
    TempDir dir("evaluate-error");
    Fixture f = two_prototype_fixture();
    for (auto& p : f.dump.prototypes)
        p.class_weights = {0.0, 0.0};
    write_fixture(f, dir);
    const CliResult r = run_cli({"evaluate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json",
                                 "--out", dir / "out"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
    EXPECT_NE(r.err.find("no global prototypes"), std::string::npos) << r.err;
}

TEST(CliEvaluate, FormatsWriteTables)
{
    TempDir dir("evaluate-formats");
    write_fixture(ratio_fixture(12, 6, 2), dir);
    const CliResult r =
        run_cli({"evaluate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json", "--k", "1",
                 "--format", "json", "--format", "csv", "--format", "markdown", "--out", dir / "out"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto files = read_tree(dir.path() / "out");
    EXPECT_TRUE(files.contains("aggregate.md"));
    EXPECT_TRUE(files.contains("aggregate.csv"));
    EXPECT_TRUE(files.contains("ratio_seed0.localization.csv"));
    EXPECT_EQ(run_cli({"evaluate", "--dump", dir / "dump.json", "--annotations", dir / "annotations.json", "--format",
                       "xml", "--out", dir / "out2"})
                  .code,
              1);
}

TEST(CliCompare, SingleModelAndMismatch)
{
    TempDir dir("compare");
    write_fixture(ratio_fixture(12, 6, 2), dir);
    for (const char* k : {"1", "2"}) {
        const CliResult r = run_cli({"evaluate", "--dump", dir / "dump.json", "--annotations",
                                     dir / "annotations.json", "--k", k, "--out", dir / (std::string("k") + k),
                                     "--fixed-timestamp"});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    const CliResult one = run_cli({"compare", dir / "k1/aggregate.json", "--out", dir / "cmp"});
    ASSERT_EQ(one.code, 0) << one.err;
    EXPECT_EQ(one.out.find("**"), std::string::npos);
    const auto files = read_tree(dir.path() / "cmp");
    EXPECT_TRUE(files.contains("comparison.md"));
    EXPECT_TRUE(files.contains("comparison.csv"));
    const CliResult mismatch = run_cli({"compare", dir / "k1/aggregate.json", dir / "k2/ratio_seed0.report.json"});
    EXPECT_EQ(mismatch.code, 1);
    EXPECT_NE(mismatch.err.find("k"), std::string::npos) << mismatch.err;
}

TEST(CliSynth, DefaultSpecWritesFourFilesDeterministically)
{
    TempDir dir("synth");
    ASSERT_EQ(run_cli({"synth", "--spec", PEFCOH_DATA_DIR "/default_synth_spec.json", "--out", dir / "a"}).code, 0);
    ASSERT_EQ(run_cli({"synth", "--out", dir / "b"}).code, 0);
    const auto a = read_tree(dir.path() / "a"), b = read_tree(dir.path() / "b");
    EXPECT_EQ(a.size(), 4u);
    EXPECT_EQ(a, b);
}

TEST(CliSynth, InfeasibleSpecExitsNonZero)
{
    TempDir dir("synth-bad");
    synth::SynthSpec spec;
    spec.n_mass_categories = 1;
    spec.n_calcification_categories = 0;
    spec.uniqueness = 1.0;
    write_text_file(dir / "spec.json", synth::serialize_spec(spec));
    const CliResult r = run_cli({"synth", "--spec", dir / "spec.json", "--out", dir / "out"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("infeasible"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors)
{
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"evaluate"}).code, 1);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}
