#pragma once

#include "pefcoh/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pefcoh {

inline constexpr std::string_view kReportFormat = "pefcoh-report/1";
inline constexpr std::string_view kAggregateFormat = "pefcoh-aggregate/1";
inline constexpr std::string_view kFixedTimestamp = "1970-01-01T00:00:00Z";

// Flat property keys, in table order. Specialization keys are "specialization.<level>".
using FlatScores = std::vector<std::pair<std::string, std::optional<double>>>;

FlatScores flatten_scores(const PropertyScores& scores);

nlohmann::json config_to_json(const EvalConfig& config, const std::vector<std::string>& levels);
EvalConfig config_from_json(const nlohmann::json& j);

nlohmann::json scores_to_json(const PropertyScores& scores);
PropertyScores scores_from_json(const nlohmann::json& j);

std::string serialize_report(const EvaluationResult& result, std::string_view generated_at);

struct Stat {
    std::optional<double> mean;
    std::optional<double> std; // sample (n - 1) deviation; absent for n < 2
    std::size_t n = 0;         // runs where the property was present
};

/// Mean and sample standard deviation per property. Properties absent in some
/// runs are averaged over the runs where present. Throws when the runs do
/// not report the same property set.
std::vector<std::pair<std::string, Stat>> aggregate(const std::vector<PropertyScores>& reports);

struct AggregateReport {
    std::string model_name;
    EvalConfig config; // levels holds the effective reported levels
    std::vector<std::int64_t> seeds;
    std::vector<std::string> runs; // report file names, when known
    std::vector<std::pair<std::string, Stat>> properties;

    const Stat* find(std::string_view key) const;
};

/// Aggregates runs of one model; throws Error naming the differing config fields.
AggregateReport aggregate(const std::vector<EvaluationResult>& runs,
                          const std::vector<std::string>& run_names = {});

std::string serialize_aggregate(const AggregateReport& report, std::string_view generated_at);

/// Reads either a single-run report (as an aggregate of one run) or an aggregate.
AggregateReport parse_report_text(std::string_view text);
AggregateReport parse_report(const std::filesystem::path& path);

/// Names of config fields that differ between two reports ("k", "patch_size", ...).
std::vector<std::string> config_differences(const EvalConfig& a, const EvalConfig& b);

enum class Direction { Up, Down };

struct TableRow {
    std::string label;
    std::string key; // empty for group header rows
    std::optional<Direction> direction;
    bool percent = false;
    int indent = 0;        // nesting depth under a group header
    bool emphasis = false; // group or top-level property
    bool arrow = false;    // show the direction marker next to the label
};

/// Properties x models, with a fixed row set and order.
struct ComparisonTable {
    std::vector<std::string> models;
    std::vector<TableRow> rows;
    std::vector<std::vector<std::optional<Stat>>> cells; // [row][model]
};

std::string level_label(std::string_view level);

ComparisonTable build_comparison(const std::vector<AggregateReport>& reports);

std::string render_markdown(const ComparisonTable& table);
std::string render_csv(const ComparisonTable& table);

} // namespace pefcoh
