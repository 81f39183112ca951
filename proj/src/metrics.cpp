#include "pefcoh/metrics.hpp"

#include "pefcoh/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace pefcoh {

namespace {

constexpr std::size_t kTop10 = 10;

std::unordered_map<std::string_view, const AnnotatedImage*> index_images(const AnnotationSet& annotations)
{
    std::unordered_map<std::string_view, const AnnotatedImage*> out;
    out.reserve(annotations.images.size());
    for (const AnnotatedImage& img : annotations.images)
        out.emplace(img.image_id, &img);
    return out;
}

int argmax_weight(const std::vector<double>& weights)
{
    return static_cast<int>(std::max_element(weights.begin(), weights.end()) - weights.begin());
}

} // namespace

std::string_view to_string(LpClass c)
{
    return c == LpClass::GroundTruth ? "groundtruth" : "predicted";
}

std::optional<LpClass> parse_lp_class(std::string_view text)
{
    if (text == "groundtruth")
        return LpClass::GroundTruth;
    if (text == "predicted")
        return LpClass::Predicted;
    return std::nullopt;
}

std::string_view to_string(LocVariant v)
{
    switch (v) {
    case LocVariant::Top1: return "top1";
    case LocVariant::Top10: return "top10";
    case LocVariant::All: return "all";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Compactness

bool is_global(const PrototypeRecord& prototype, double eps)
{
    return std::any_of(prototype.class_weights.begin(), prototype.class_weights.end(),
                       [eps](double w) { return std::abs(w) > eps; });
}

GlobalCompactness global_prototypes(const EvidenceDump& dump, double eps)
{
    GlobalCompactness out;
    out.total = dump.prototypes.size();
    out.gp = static_cast<std::size_t>(
        std::count_if(dump.prototypes.begin(), dump.prototypes.end(),
                      [eps](const PrototypeRecord& p) { return is_global(p, eps); }));
    out.sparsity = out.total == 0
                       ? 0.0
                       : 1.0 - static_cast<double>(out.gp) / static_cast<double>(out.total);
    return out;
}

LocalCompactness local_prototypes(const EvidenceDump& dump, double eps, LpClass lp_class)
{
    std::unordered_map<std::string_view, const PrototypeRecord*> protos;
    for (const PrototypeRecord& p : dump.prototypes)
        protos.emplace(p.id, &p);

    std::size_t images = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    const std::size_t n_classes = dump.class_names.size();
    for (const ImageActivationRecord& img : dump.images) {
        if (img.split != Split::Test)
            continue;
        ++images;
        std::size_t cls = static_cast<std::size_t>(img.class_label);
        if (lp_class == LpClass::Predicted) {
            std::vector<double> logits(n_classes, 0.0);
            for (const ActivationEntry& e : img.entries) {
                const auto& w = protos.at(e.prototype_id)->class_weights;
                for (std::size_t c = 0; c < n_classes; ++c)
                    logits[c] += e.score * w[c];
            }
            cls = static_cast<std::size_t>(argmax_weight(logits));
        }
        for (const ActivationEntry& e : img.entries) {
            const double contribution = e.score * protos.at(e.prototype_id)->class_weights[cls];
            if (contribution > eps)
                ++positive;
            else if (contribution < -eps)
                ++negative;
        }
    }
    if (images == 0)
        throw Error("empty test split");
    return LocalCompactness{static_cast<double>(positive) / static_cast<double>(images),
                            static_cast<double>(negative) / static_cast<double>(images)};
}

// ---------------------------------------------------------------------------
// Top-k evidence

std::optional<std::size_t> match_roi(const PatchBox& box, const std::vector<ROIAnnotation>& rois)
{
    // Doubled coordinates keep centers integral.
    const std::int64_t cx2 = box.x_min + box.x_max;
    const std::int64_t cy2 = box.y_min + box.y_max;
    std::optional<std::size_t> best;
    std::int64_t best_dist = 0;
    for (std::size_t i = 0; i < rois.size(); ++i) {
        if (!contains_point(box, roi_center(rois[i].bbox)))
            continue;
        const std::int64_t dx = rois[i].bbox.x_min + rois[i].bbox.x_max - cx2;
        const std::int64_t dy = rois[i].bbox.y_min + rois[i].bbox.y_max - cy2;
        const std::int64_t dist = dx * dx + dy * dy;
        if (!best || dist < best_dist) {
            best = i;
            best_dist = dist;
        }
    }
    return best;
}

std::vector<TopKEvidence> top_k_evidence(const EvidenceDump& dump, const AnnotationSet& annotations,
                                         const Lexicon& lexicon, int k, std::int64_t patch_size,
                                         double eps)
{
    if (k < 1)
        throw Error("k must be at least 1");
    if (patch_size < 1)
        throw Error("patch size must be at least 1");

    const auto ann_by_id = index_images(annotations);
    const std::vector<Level> levels = lexicon.levels();

    struct Candidate {
        double score;
        const ImageActivationRecord* image;
        const ActivationEntry* entry;
    };
    std::unordered_map<std::string_view, std::vector<Candidate>> pool;
    for (const ImageActivationRecord& img : dump.images) {
        if (img.split != Split::Train || !ann_by_id.contains(img.image_id))
            continue;
        for (const ActivationEntry& e : img.entries)
            pool[e.prototype_id].push_back(Candidate{e.score, &img, &e});
    }

    std::vector<TopKEvidence> out;
    for (const PrototypeRecord& proto : dump.prototypes) {
        if (!is_global(proto, eps))
            continue;
        TopKEvidence ev;
        ev.prototype_id = proto.id;
        ev.k = k;
        auto& candidates = pool[proto.id];
        const std::size_t take = std::min(candidates.size(), static_cast<std::size_t>(k));
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                          candidates.end(), [](const Candidate& a, const Candidate& b) {
                              if (a.score != b.score)
                                  return a.score > b.score;
                              return a.image->image_id < b.image->image_id;
                          });
        for (std::size_t i = 0; i < take; ++i) {
            const Candidate& c = candidates[i];
            TopKItem item;
            item.image_id = c.image->image_id;
            item.score = c.score;
            item.box = resolve_patch_box({c.entry->row, c.entry->col}, c.image->grid(),
                                         c.image->size(), patch_size);
            const AnnotatedImage& ann = *ann_by_id.at(c.image->image_id);
            if (auto idx = match_roi(item.box, ann.rois)) {
                RoiMatch m;
                m.roi_index = *idx;
                const ROIAnnotation& roi = ann.rois[*idx];
                for (const Level& level : levels) {
                    if (auto cat = category_at(lexicon, level, roi.type, roi.descriptors))
                        m.categories.emplace(level.name, std::move(cat->value));
                }
                item.match = std::move(m);
            }
            ev.items.push_back(std::move(item));
        }
        ev.shortfall = static_cast<std::size_t>(k) - take;
        out.push_back(std::move(ev));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Verdicts

std::map<std::string, LevelPurity> purity_by_level(const TopKEvidence& evidence, const Lexicon& lexicon)
{
    std::map<std::string, LevelPurity> out;
    for (const Level& level : lexicon.levels()) {
        std::map<std::string, std::size_t> counts;
        for (const TopKItem& item : evidence.items) {
            if (!item.match)
                continue;
            if (auto it = item.match->categories.find(level.name); it != item.match->categories.end())
                ++counts[it->second];
        }
        LevelPurity lp;
        // std::map iterates in ascending order, so strict > keeps the smallest on ties.
        for (const auto& [category, n] : counts) {
            if (n > lp.count) {
                lp.count = n;
                lp.category = category;
            }
        }
        lp.purity = static_cast<double>(lp.count) / static_cast<double>(evidence.k);
        out.emplace(level.name, std::move(lp));
    }
    return out;
}

std::vector<PrototypeVerdict> build_verdicts(const EvidenceDump& dump,
                                             const std::vector<TopKEvidence>& evidence,
                                             const Lexicon& lexicon, double eps)
{
    std::unordered_map<std::string_view, const TopKEvidence*> by_proto;
    for (const TopKEvidence& ev : evidence)
        by_proto.emplace(ev.prototype_id, &ev);

    std::vector<PrototypeVerdict> out;
    out.reserve(dump.prototypes.size());
    for (const PrototypeRecord& proto : dump.prototypes) {
        PrototypeVerdict v;
        v.prototype_id = proto.id;
        v.is_global = is_global(proto, eps);
        v.weight_class = argmax_weight(proto.class_weights);
        if (auto it = by_proto.find(proto.id); v.is_global && it != by_proto.end()) {
            const TopKEvidence& ev = *it->second;
            v.matched_patches = static_cast<std::size_t>(std::count_if(
                ev.items.begin(), ev.items.end(), [](const TopKItem& i) { return i.match.has_value(); }));
            v.is_relevant = v.matched_patches > 0;
            if (v.is_relevant) {
                v.purity = purity_by_level(ev, lexicon);
                v.combined_category = v.purity.at(std::string(kCombinedLevel)).category;
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

std::size_t relevant_count(const std::vector<PrototypeVerdict>& verdicts)
{
    return static_cast<std::size_t>(std::count_if(
        verdicts.begin(), verdicts.end(), [](const PrototypeVerdict& v) { return v.is_relevant; }));
}

double relevance(const std::vector<PrototypeVerdict>& verdicts)
{
    const auto gp = std::count_if(verdicts.begin(), verdicts.end(),
                                  [](const PrototypeVerdict& v) { return v.is_global; });
    if (gp == 0)
        throw Error("no global prototypes");
    return static_cast<double>(relevant_count(verdicts)) / static_cast<double>(gp);
}

std::optional<double> specialization(const std::vector<PrototypeVerdict>& verdicts,
                                     std::string_view level)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (const PrototypeVerdict& v : verdicts) {
        if (!v.is_relevant)
            continue;
        ++n;
        if (auto it = v.purity.find(std::string(level)); it != v.purity.end())
            sum += it->second.purity;
    }
    if (n == 0)
        return std::nullopt;
    return sum / static_cast<double>(n);
}

std::size_t unique_categories(const std::vector<PrototypeVerdict>& verdicts)
{
    std::set<std::string> unique;
    for (const PrototypeVerdict& v : verdicts) {
        if (v.is_relevant && v.combined_category)
            unique.insert(*v.combined_category);
    }
    return unique.size();
}

std::optional<double> uniqueness(const std::vector<PrototypeVerdict>& verdicts)
{
    const std::size_t rp = relevant_count(verdicts);
    if (rp == 0)
        return std::nullopt;
    return static_cast<double>(unique_categories(verdicts)) / static_cast<double>(rp);
}

double coverage(const std::vector<PrototypeVerdict>& verdicts, std::size_t tc)
{
    if (tc == 0)
        throw Error("total category count TC is 0");
    return static_cast<double>(unique_categories(verdicts)) / static_cast<double>(tc);
}

ClassSpecificResult class_specific(std::vector<PrototypeVerdict>& verdicts,
                                   const CategoryUniverse& category_class_counts,
                                   std::string_view level)
{
    ClassSpecificResult out;
    std::size_t aligned = 0;
    for (PrototypeVerdict& v : verdicts) {
        v.align.reset();
        if (!v.is_relevant)
            continue;
        auto pit = v.purity.find(std::string(level));
        if (pit == v.purity.end() || !pit->second.category)
            continue;
        const std::string& category = *pit->second.category;
        auto cit = category_class_counts.class_counts.find(category);
        if (cit == category_class_counts.class_counts.end())
            continue;
        const std::vector<std::size_t>& counts = cit->second;
        const auto present = std::count_if(counts.begin(), counts.end(),
                                           [](std::size_t n) { return n > 0; });
        if (present < 2)
            continue;
        const auto top = std::max_element(counts.begin(), counts.end());
        if (std::count(counts.begin(), counts.end(), *top) > 1) {
            out.notes.push_back("prototype \"" + v.prototype_id + "\" excluded from class-specific: "
                                "category \"" + category + "\" has a tied majority class");
            continue;
        }
        const int majority = static_cast<int>(top - counts.begin());
        v.align = v.weight_class == majority ? 1 : 0;
        aligned += static_cast<std::size_t>(*v.align);
        ++out.considered;
    }
    if (out.considered > 0)
        out.score = static_cast<double>(aligned) / static_cast<double>(out.considered);
    return out;
}

// ---------------------------------------------------------------------------
// Localization

LocalizationResult localization(const EvidenceDump& dump, const AnnotationSet& annotations,
                                std::int64_t patch_size, double eps)
{
    if (patch_size < 1)
        throw Error("patch size must be at least 1");
    const auto ann_by_id = index_images(annotations);
    std::unordered_map<std::string_view, const PrototypeRecord*> protos;
    for (const PrototypeRecord& p : dump.prototypes)
        protos.emplace(p.id, &p);

    LocalizationResult out;
    std::array<double, 3> iou_sum{};
    std::array<double, 3> dsc_sum{};
    for (const ImageActivationRecord& img : dump.images) {
        if (img.split != Split::Test)
            continue;
        auto ait = ann_by_id.find(img.image_id);
        if (ait == ann_by_id.end() || ait->second->rois.empty())
            continue;
        const AnnotatedImage& ann = *ait->second;

        struct Ranked {
            double magnitude;
            const ActivationEntry* entry;
        };
        std::vector<Ranked> ranked;
        for (const ActivationEntry& e : img.entries) {
            const PrototypeRecord& p = *protos.at(e.prototype_id);
            if (!is_global(p, eps))
                continue;
            const double magnitude =
                std::abs(e.score * p.class_weights[static_cast<std::size_t>(img.class_label)]);
            if (magnitude > eps)
                ranked.push_back(Ranked{magnitude, &e});
        }
        std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
            if (a.magnitude != b.magnitude)
                return a.magnitude > b.magnitude;
            return a.entry->prototype_id < b.entry->prototype_id;
        });

        std::vector<Box> patches;
        patches.reserve(ranked.size());
        for (const Ranked& r : ranked)
            patches.push_back(resolve_patch_box({r.entry->row, r.entry->col}, img.grid(), img.size(),
                                                patch_size));
        std::vector<Box> rois;
        rois.reserve(ann.rois.size());
        for (const ROIAnnotation& roi : ann.rois)
            rois.push_back(roi.bbox);

        LocalizationRow row;
        row.image_id = img.image_id;
        row.roi_count = rois.size();
        row.activated = ranked.size();
        for (std::size_t v = 0; v < kLocVariants.size(); ++v) {
            std::size_t n = patches.size();
            if (kLocVariants[v] == LocVariant::Top1)
                n = std::min<std::size_t>(n, 1);
            else if (kLocVariants[v] == LocVariant::Top10)
                n = std::min(n, kTop10);
            const Overlap o = region_overlap(std::span<const Box>(patches.data(), n), rois);
            row.scores[v] = OverlapScore{iou(o), dsc(o)};
            iou_sum[v] += row.scores[v].iou;
            dsc_sum[v] += row.scores[v].dsc;
        }
        out.rows.push_back(std::move(row));
    }
    if (out.rows.empty())
        throw Error("no localizable instances");
    const double n = static_cast<double>(out.rows.size());
    for (std::size_t v = 0; v < kLocVariants.size(); ++v)
        out.mean[v] = OverlapScore{iou_sum[v] / n, dsc_sum[v] / n};
    return out;
}

OverlapScore localization(const EvidenceDump& dump, const AnnotationSet& annotations,
                          LocVariant variant, std::int64_t patch_size, double eps)
{
    return localization(dump, annotations, patch_size, eps).mean[static_cast<std::size_t>(variant)];
}

// ---------------------------------------------------------------------------
// Assembly

const std::optional<double>* PropertyScores::find_specialization(std::string_view level) const
{
    for (const auto& [name, value] : specialization) {
        if (name == level)
            return &value;
    }
    return nullptr;
}

std::vector<std::string> reported_levels(const EvalConfig& config, const Lexicon& lexicon)
{
    for (const std::string& level : config.levels) {
        if (!lexicon.find_level(level))
            throw Error("unknown category level \"" + level + "\"");
    }
    std::vector<std::string> out;
    for (const Level& level : lexicon.levels()) {
        if (config.levels.empty() ||
            std::find(config.levels.begin(), config.levels.end(), level.name) != config.levels.end())
            out.push_back(level.name);
    }
    return out;
}

EvaluationResult evaluate(const EvidenceDump& dump, const AnnotationSet& annotations,
                          const Lexicon& lexicon, const EvalConfig& config)
{
    if (config.k < 1)
        throw Error("k must be at least 1");
    if (config.patch_size < 1)
        throw Error("patch size must be at least 1");
    if (config.eps < 0.0)
        throw Error("eps must be non-negative");

    EvaluationResult result;
    result.config = config;
    result.config.levels = reported_levels(config, lexicon);
    result.model_name = dump.model_name;
    result.seed = dump.seed;

    for (Diagnostic& d : cross_validate(dump, annotations)) {
        if (d.severity == Severity::Error)
            throw ValidationError(d.message);
        result.diagnostics.push_back("warning: " + d.message);
    }
    const std::vector<std::string> levels = reported_levels(config, lexicon);
    for (const std::string& level : levels) {
        if (!lexicon.find_level(level))
            throw Error("unknown category level \"" + level + "\"");
    }
    if (!lexicon.find_level(config.class_specific_level))
        throw Error("unknown class-specific level \"" + config.class_specific_level + "\"");

    PropertyScores& s = result.scores;
    const GlobalCompactness g = global_prototypes(dump, config.eps);
    s.total_prototypes = g.total;
    s.gp = g.gp;
    s.sparsity = g.sparsity;
    const LocalCompactness lp = local_prototypes(dump, config.eps, config.lp_class);
    s.lp_positive = lp.positive;
    s.lp_negative = lp.negative;

    result.evidence = top_k_evidence(dump, annotations, lexicon, config.k, config.patch_size, config.eps);
    for (const TopKEvidence& ev : result.evidence) {
        if (ev.shortfall > 0)
            result.diagnostics.push_back("prototype \"" + ev.prototype_id + "\": only " +
                                         std::to_string(ev.items.size()) + " of k=" +
                                         std::to_string(ev.k) + " train activations");
    }
    result.verdicts = build_verdicts(dump, result.evidence, lexicon, config.eps);

    s.relevance = relevance(result.verdicts);
    s.rp = relevant_count(result.verdicts);
    for (const std::string& level : levels)
        s.specialization.emplace_back(level, specialization(result.verdicts, level));
    s.uc = unique_categories(result.verdicts);
    s.uniqueness = uniqueness(result.verdicts);
    s.tc = config.tc_override
               ? *config.tc_override
               : derive_category_universe(annotations, lexicon, kCombinedLevel, config.tc_scope).size();
    s.coverage = coverage(result.verdicts, s.tc);

    const CategoryUniverse class_counts =
        derive_category_universe(annotations, lexicon, config.class_specific_level);
    ClassSpecificResult cs = class_specific(result.verdicts, class_counts, config.class_specific_level);
    s.class_specific = cs.score;
    s.class_specific_n = cs.considered;
    for (std::string& note : cs.notes)
        result.diagnostics.push_back(std::move(note));

    LocalizationResult loc = localization(dump, annotations, config.patch_size, config.eps);
    s.localization = loc.mean;
    s.localization_images = loc.rows.size();
    result.localization_rows = std::move(loc.rows);
    return result;
}

} // namespace pefcoh
