#include "pefcoh/report.hpp"

#include "pefcoh/dump.hpp"
#include "pefcoh/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace pefcoh {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_from(const json& j, std::string_view key)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return std::nullopt;
    return it->get<double>();
}

json overlap_json(const OverlapScore& o) { return json{{"iou", o.iou}, {"dsc", o.dsc}}; }

OverlapScore overlap_from(const json& j) { return {j.at("iou").get<double>(), j.at("dsc").get<double>()}; }

std::string_view scope_name(const std::optional<Split>& scope)
{
    return scope ? to_string(*scope) : std::string_view("all");
}

std::string fixed2(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string percent(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.0f%%", std::round(v * 100.0));
    return buf;
}

std::string full(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double display_value(double v, bool as_percent)
{
    return as_percent ? std::round(v * 100.0) : std::round(v * 100.0) / 100.0;
}

std::string csv_field(std::string_view text)
{
    if (text.find_first_of(",\"\n") == std::string_view::npos)
        return std::string(text);
    std::string out = "\"";
    for (char c : text) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

const char* kLocKeys[3] = {"top1", "top10", "all"};

} // namespace

// ---------------------------------------------------------------------------
// Scores

FlatScores flatten_scores(const PropertyScores& s)
{
    FlatScores out;
    out.emplace_back("compactness.global", static_cast<double>(s.gp));
    out.emplace_back("compactness.local_positive", s.lp_positive);
    out.emplace_back("compactness.local_negative", s.lp_negative);
    out.emplace_back("compactness.sparsity", s.sparsity);
    out.emplace_back("relevance", s.relevance);
    for (const auto& [level, value] : s.specialization)
        out.emplace_back("specialization." + level, value);
    out.emplace_back("uniqueness", s.uniqueness);
    out.emplace_back("coverage", s.coverage);
    out.emplace_back("class_specific", s.class_specific);
    for (std::size_t v = 0; v < 3; ++v)
        out.emplace_back(std::string("localization.iou.") + kLocKeys[v], s.localization[v].iou);
    for (std::size_t v = 0; v < 3; ++v)
        out.emplace_back(std::string("localization.dsc.") + kLocKeys[v], s.localization[v].dsc);
    out.emplace_back("counts.total_prototypes", static_cast<double>(s.total_prototypes));
    out.emplace_back("counts.rp", static_cast<double>(s.rp));
    out.emplace_back("counts.uc", static_cast<double>(s.uc));
    out.emplace_back("counts.tc", static_cast<double>(s.tc));
    return out;
}

json config_to_json(const EvalConfig& config, const std::vector<std::string>& levels)
{
    return json{{"k", config.k},
                {"patch_size", config.patch_size},
                {"eps", config.eps},
                {"levels", levels},
                {"class_specific_level", config.class_specific_level},
                {"tc_override", config.tc_override ? json(*config.tc_override) : json(nullptr)},
                {"tc_scope", scope_name(config.tc_scope)},
                {"lp_class", to_string(config.lp_class)},
                {"localization_top_n", 10},
                {"top_k_split", "train"}};
}

EvalConfig config_from_json(const json& j)
{
    EvalConfig c;
    c.k = j.at("k").get<int>();
    c.patch_size = j.at("patch_size").get<std::int64_t>();
    c.eps = j.at("eps").get<double>();
    c.levels = j.at("levels").get<std::vector<std::string>>();
    c.class_specific_level = j.at("class_specific_level").get<std::string>();
    if (const json& tc = j.at("tc_override"); !tc.is_null())
        c.tc_override = tc.get<std::size_t>();
    const std::string scope = j.at("tc_scope").get<std::string>();
    if (scope != "all")
        c.tc_scope = parse_split(scope);
    if (auto lp = parse_lp_class(j.at("lp_class").get<std::string>()))
        c.lp_class = *lp;
    return c;
}

json scores_to_json(const PropertyScores& s)
{
    json spec = json::array();
    for (const auto& [level, value] : s.specialization)
        spec.push_back({{"level", level}, {"value", optional_json(value)}});
    json loc{{"images", s.localization_images}};
    for (std::size_t v = 0; v < 3; ++v)
        loc[kLocKeys[v]] = overlap_json(s.localization[v]);
    return json{
        {"compactness",
         {{"total", s.total_prototypes},
          {"global", s.gp},
          {"sparsity", s.sparsity},
          {"local_positive", s.lp_positive},
          {"local_negative", s.lp_negative}}},
        {"relevance", {{"value", s.relevance}, {"rp", s.rp}, {"gp", s.gp}}},
        {"specialization", std::move(spec)},
        {"uniqueness", {{"value", optional_json(s.uniqueness)}, {"uc", s.uc}, {"rp", s.rp}}},
        {"coverage", {{"value", s.coverage}, {"uc", s.uc}, {"tc", s.tc}}},
        {"class_specific", {{"value", optional_json(s.class_specific)}, {"n", s.class_specific_n}}},
        {"localization", std::move(loc)}};
}

PropertyScores scores_from_json(const json& j)
{
    PropertyScores s;
    const json& c = j.at("compactness");
    s.total_prototypes = c.at("total").get<std::size_t>();
    s.gp = c.at("global").get<std::size_t>();
    s.sparsity = c.at("sparsity").get<double>();
    s.lp_positive = c.at("local_positive").get<double>();
    s.lp_negative = c.at("local_negative").get<double>();
    s.relevance = j.at("relevance").at("value").get<double>();
    s.rp = j.at("relevance").at("rp").get<std::size_t>();
    for (const json& e : j.at("specialization"))
        s.specialization.emplace_back(e.at("level").get<std::string>(), optional_from(e, "value"));
    s.uniqueness = optional_from(j.at("uniqueness"), "value");
    s.uc = j.at("uniqueness").at("uc").get<std::size_t>();
    s.coverage = j.at("coverage").at("value").get<double>();
    s.tc = j.at("coverage").at("tc").get<std::size_t>();
    s.class_specific = optional_from(j.at("class_specific"), "value");
    s.class_specific_n = j.at("class_specific").at("n").get<std::size_t>();
    const json& loc = j.at("localization");
    s.localization_images = loc.at("images").get<std::size_t>();
    for (std::size_t v = 0; v < 3; ++v)
        s.localization[v] = overlap_from(loc.at(kLocKeys[v]));
    return s;
}

std::string serialize_report(const EvaluationResult& r, std::string_view generated_at)
{
    std::map<std::string_view, const TopKEvidence*> evidence;
    for (const TopKEvidence& ev : r.evidence)
        evidence.emplace(ev.prototype_id, &ev);

    json prototypes = json::array();
    for (const PrototypeVerdict& v : r.verdicts) {
        json p{{"id", v.prototype_id},
               {"global", v.is_global},
               {"relevant", v.is_relevant},
               {"matched_patches", v.matched_patches},
               {"weight_class", v.weight_class},
               {"combined_category", v.combined_category ? json(*v.combined_category) : json(nullptr)},
               {"align", v.align ? json(*v.align) : json(nullptr)}};
        json purity = json::object();
        for (const auto& [level, lp] : v.purity) {
            purity[level] = {{"category", lp.category ? json(*lp.category) : json(nullptr)},
                             {"count", lp.count},
                             {"purity", lp.purity}};
        }
        p["purity"] = std::move(purity);
        if (auto it = evidence.find(v.prototype_id); it != evidence.end()) {
            json items = json::array();
            for (const TopKItem& item : it->second->items) {
                items.push_back({{"image_id", item.image_id},
                                 {"score", item.score},
                                 {"box", {item.box.x_min, item.box.y_min, item.box.x_max, item.box.y_max}},
                                 {"roi_index", item.match ? json(item.match->roi_index) : json(nullptr)}});
            }
            p["top_k"] = std::move(items);
            p["shortfall"] = it->second->shortfall;
        }
        prototypes.push_back(std::move(p));
    }

    json rows = json::array();
    for (const LocalizationRow& row : r.localization_rows) {
        json jr{{"image_id", row.image_id}, {"rois", row.roi_count}, {"activated", row.activated}};
        for (std::size_t v = 0; v < 3; ++v)
            jr[kLocKeys[v]] = overlap_json(row.scores[v]);
        rows.push_back(std::move(jr));
    }

    json root{{"format", kReportFormat},
              {"generated_at", generated_at},
              {"model_name", r.model_name},
              {"seed", r.seed},
              {"config", config_to_json(r.config, r.config.levels)},
              {"scores", scores_to_json(r.scores)},
              {"prototypes", std::move(prototypes)},
              {"localization", std::move(rows)},
              {"diagnostics", r.diagnostics}};
    return root.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Aggregation

std::vector<std::pair<std::string, Stat>> aggregate(const std::vector<PropertyScores>& reports)
{
    if (reports.empty())
        throw Error("nothing to aggregate");
    std::vector<FlatScores> flat;
    for (const PropertyScores& s : reports)
        flat.push_back(flatten_scores(s));
    for (const FlatScores& f : flat) {
        bool same = f.size() == flat.front().size();
        for (std::size_t i = 0; same && i < f.size(); ++i)
            same = f[i].first == flat.front()[i].first;
        if (!same)
            throw Error("mixed configs: runs report different property sets");
    }

    std::vector<std::pair<std::string, Stat>> out;
    for (std::size_t i = 0; i < flat.front().size(); ++i) {
        std::vector<double> values;
        for (const FlatScores& f : flat) {
            if (f[i].second)
                values.push_back(*f[i].second);
        }
        Stat st;
        st.n = values.size();
        if (!values.empty()) {
            double sum = 0.0;
            for (double x : values)
                sum += x;
            const double mean = sum / static_cast<double>(values.size());
            const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
            st.mean = *lo == *hi ? *lo : mean;
            if (values.size() >= 2) {
                double ss = 0.0;
                for (double x : values)
                    ss += (x - mean) * (x - mean);
                st.std = *lo == *hi ? 0.0 : std::sqrt(ss / static_cast<double>(values.size() - 1));
            }
        }
        out.emplace_back(flat.front()[i].first, st);
    }
    return out;
}

const Stat* AggregateReport::find(std::string_view key) const
{
    for (const auto& [k, st] : properties) {
        if (k == key)
            return &st;
    }
    return nullptr;
}

std::vector<std::string> config_differences(const EvalConfig& a, const EvalConfig& b)
{
    std::vector<std::string> out;
    if (a.k != b.k)
        out.emplace_back("k");
    if (a.patch_size != b.patch_size)
        out.emplace_back("patch_size");
    if (a.eps != b.eps)
        out.emplace_back("eps");
    if (a.levels != b.levels)
        out.emplace_back("levels");
    if (a.class_specific_level != b.class_specific_level)
        out.emplace_back("class_specific_level");
    if (a.tc_override != b.tc_override)
        out.emplace_back("tc_override");
    if (a.tc_scope != b.tc_scope)
        out.emplace_back("tc_scope");
    if (a.lp_class != b.lp_class)
        out.emplace_back("lp_class");
    return out;
}

namespace {

std::string join(const std::vector<std::string>& items, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += sep;
        out += items[i];
    }
    return out;
}

} // namespace

AggregateReport aggregate(const std::vector<EvaluationResult>& runs,
                          const std::vector<std::string>& run_names)
{
    if (runs.empty())
        throw Error("nothing to aggregate");
    AggregateReport out;
    out.config = runs.front().config;
    out.model_name = runs.front().model_name;
    std::vector<PropertyScores> scores;
    for (const EvaluationResult& r : runs) {
        if (auto diff = config_differences(out.config, r.config); !diff.empty())
            throw Error("mixed configs across runs: " + join(diff, ", "));
        out.seeds.push_back(r.seed);
        scores.push_back(r.scores);
    }
    out.runs = run_names;
    out.properties = aggregate(scores);
    return out;
}

std::string serialize_aggregate(const AggregateReport& report, std::string_view generated_at)
{
    json props = json::array();
    for (const auto& [key, st] : report.properties) {
        props.push_back({{"key", key},
                         {"mean", optional_json(st.mean)},
                         {"std", optional_json(st.std)},
                         {"n", st.n}});
    }
    json root{{"format", kAggregateFormat},
              {"generated_at", generated_at},
              {"model_name", report.model_name},
              {"n_runs", report.seeds.size()},
              {"seeds", report.seeds},
              {"runs", report.runs},
              {"config", config_to_json(report.config, report.config.levels)},
              {"properties", std::move(props)}};
    return root.dump(1) + "\n";
}

AggregateReport parse_report_text(std::string_view text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    try {
        const std::string format = root.at("format").get<std::string>();
        AggregateReport out;
        out.model_name = root.at("model_name").get<std::string>();
        out.config = config_from_json(root.at("config"));
        if (format == kReportFormat) {
            out.seeds.push_back(root.at("seed").get<std::int64_t>());
            out.properties = aggregate(std::vector<PropertyScores>{scores_from_json(root.at("scores"))});
            return out;
        }
        if (format == kAggregateFormat) {
            out.seeds = root.at("seeds").get<std::vector<std::int64_t>>();
            out.runs = root.at("runs").get<std::vector<std::string>>();
            for (const json& p : root.at("properties")) {
                Stat st;
                st.mean = optional_from(p, "mean");
                st.std = optional_from(p, "std");
                st.n = p.at("n").get<std::size_t>();
                out.properties.emplace_back(p.at("key").get<std::string>(), st);
            }
            return out;
        }
        throw ValidationError("format: unsupported report format \"" + format + "\"");
    } catch (const json::exception& e) {
        throw ValidationError(std::string("report schema violation: ") + e.what());
    }
}

AggregateReport parse_report(const std::filesystem::path& path)
{
    try {
        return parse_report_text(read_text_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Comparison table

std::string level_label(std::string_view level)
{
    if (level == kTypeLevel)
        return "Abnorm. Type";
    if (level == kCombinedLevel)
        return "Combined";
    static const std::map<std::string, std::string, std::less<>> abbreviations{
        {"calcification", "Calc."}, {"morphology", "Morph."}};
    auto word = [](std::string_view raw) {
        if (auto it = abbreviations.find(raw); it != abbreviations.end())
            return it->second;
        std::string w(raw);
        std::replace(w.begin(), w.end(), '_', ' ');
        if (!w.empty())
            w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        return w;
    };
    const auto dot = level.find('.');
    if (dot == std::string_view::npos)
        return word(level);
    return word(level.substr(0, dot)) + " " + word(level.substr(dot + 1));
}

namespace {

std::vector<TableRow> table_rows(const std::vector<std::string>& levels)
{
    using D = Direction;
    std::vector<TableRow> rows{
        {"Compactness", "", std::nullopt, false, 0, true, false},
        {"Global", "compactness.global", D::Down, false, 1, false, true},
        {"Local", "", D::Down, false, 1, false, true},
        {"Positive", "compactness.local_positive", D::Down, false, 2, false, false},
        {"Negative", "compactness.local_negative", D::Down, false, 2, false, false},
        {"Sparsity", "compactness.sparsity", D::Up, true, 1, false, true},
        {"Relevance", "relevance", D::Up, false, 0, true, true},
        {"Specialization", "", D::Up, false, 0, true, true},
    };
    for (const std::string& level : levels) {
        if (level == kCombinedLevel)
            continue;
        rows.push_back({level_label(level), "specialization." + level, D::Up, false, 1, false, false});
    }
    rows.push_back({"Uniqueness", "uniqueness", D::Up, false, 0, true, true});
    rows.push_back({"Coverage", "coverage", D::Up, false, 0, true, true});
    rows.push_back({"Class-specific", "class_specific", D::Up, false, 0, true, true});
    rows.push_back({"Localization", "", D::Up, false, 0, true, true});
    const char* sup[3] = {"¹", "¹⁰", "ᴬˡˡ"};
    for (const char* metric : {"IoU", "DSC"}) {
        const std::string lower = metric == std::string("IoU") ? "iou" : "dsc";
        for (std::size_t v = 0; v < 3; ++v)
            rows.push_back({std::string(metric) + sup[v], "localization." + lower + "." + kLocKeys[v],
                            D::Up, false, 1, false, false});
    }
    return rows;
}

} // namespace

ComparisonTable build_comparison(const std::vector<AggregateReport>& reports)
{
    if (reports.empty())
        throw Error("no reports to compare");
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (auto diff = config_differences(reports.front().config, reports[i].config); !diff.empty())
            throw Error("config mismatch between \"" + reports.front().model_name + "\" and \"" +
                        reports[i].model_name + "\": " + join(diff, ", "));
    }
    ComparisonTable table;
    for (const AggregateReport& r : reports)
        table.models.push_back(r.model_name);
    for (TableRow& row : table_rows(reports.front().config.levels)) {
        std::vector<std::optional<Stat>> cells;
        for (const AggregateReport& r : reports) {
            const Stat* st = row.key.empty() ? nullptr : r.find(row.key);
            cells.push_back(st ? std::optional<Stat>(*st) : std::nullopt);
        }
        table.rows.push_back(std::move(row));
        table.cells.push_back(std::move(cells));
    }
    return table;
}

std::string render_markdown(const ComparisonTable& table)
{
    std::string out = "| Property |";
    for (const std::string& m : table.models)
        out += " " + m + " |";
    out += "\n|:--|";
    for (std::size_t i = 0; i < table.models.size(); ++i)
        out += ":-:|";
    out += "\n";

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const TableRow& row = table.rows[r];
        std::string label;
        for (int i = 0; i < row.indent; ++i)
            label += "&emsp;";
        label += row.emphasis ? "*" + row.label + "*" : row.label;
        if (row.arrow && row.direction)
            label += *row.direction == Direction::Up ? " ↑" : " ↓";

        const auto& cells = table.cells[r];
        std::optional<double> best;
        std::size_t present = 0;
        for (const auto& c : cells) {
            if (!c || !c->mean)
                continue;
            ++present;
            const double d = display_value(*c->mean, row.percent);
            if (!best || (*row.direction == Direction::Up ? d > *best : d < *best))
                best = d;
        }
        const bool highlight = present >= 2 && row.direction.has_value();

        out += "| " + label + " |";
        for (const auto& c : cells) {
            std::string cell;
            if (!row.key.empty()) {
                if (!c || !c->mean) {
                    cell = "—";
                } else {
                    std::string mean = row.percent ? percent(*c->mean) : fixed2(*c->mean);
                    if (highlight && display_value(*c->mean, row.percent) == *best)
                        mean = "**" + mean + "**";
                    cell = mean;
                    if (c->std)
                        cell += " ± " + (row.percent ? percent(*c->std) : fixed2(*c->std));
                }
            }
            out += " " + cell + " |";
        }
        out += "\n";
    }
    return out;
}

std::string render_csv(const ComparisonTable& table)
{
    std::string out = "property,key,direction,model,mean,std,n\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const TableRow& row = table.rows[r];
        if (row.key.empty())
            continue;
        for (std::size_t m = 0; m < table.models.size(); ++m) {
            const auto& c = table.cells[r][m];
            out += csv_field(row.label) + "," + row.key + "," +
                   (row.direction == Direction::Down ? "down" : "up") + "," +
                   csv_field(table.models[m]) + ",";
            out += (c && c->mean) ? full(*c->mean) : "";
            out += ",";
            out += (c && c->std) ? full(*c->std) : "";
            out += ",";
            out += c ? std::to_string(c->n) : "0";
            out += "\n";
        }
    }
    return out;
}

} // namespace pefcoh
