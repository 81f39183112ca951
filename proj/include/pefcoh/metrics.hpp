#pragma once

#include "pefcoh/dump.hpp"
#include "pefcoh/geometry.hpp"
#include "pefcoh/lexicon.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pefcoh {

// Which class weight signs a prototype's contribution when counting local prototypes.
enum class LpClass {
    GroundTruth, // weight toward the image's labelled class
    Predicted,   // weight toward argmax of the linear logits sum(score * w)
};

std::string_view to_string(LpClass c);
std::optional<LpClass> parse_lp_class(std::string_view text);

struct EvalConfig {
    int k = 10;
    std::int64_t patch_size = 130;
    double eps = 1e-8;
    std::vector<std::string> levels; // levels reported under specialization; empty = all
    std::string class_specific_level{kCombinedLevel};
    std::optional<std::size_t> tc_override;
    std::optional<Split> tc_scope; // nullopt: whole annotation set
    LpClass lp_class = LpClass::GroundTruth;

    bool operator==(const EvalConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Compactness

struct GlobalCompactness {
    std::size_t total = 0;
    std::size_t gp = 0;
    double sparsity = 0.0; // 1 - gp / total
};

bool is_global(const PrototypeRecord& prototype, double eps);

GlobalCompactness global_prototypes(const EvidenceDump& dump, double eps);

struct LocalCompactness {
    double positive = 0.0;
    double negative = 0.0;
};

/// Mean number of prototypes per test image whose score * weight is above
/// eps (positive) or below -eps (negative). Throws on an empty test split.
LocalCompactness local_prototypes(const EvidenceDump& dump, double eps,
                                  LpClass lp_class = LpClass::GroundTruth);

// ---------------------------------------------------------------------------
// Top-k evidence

struct RoiMatch {
    std::size_t roi_index = 0;
    std::map<std::string, std::string> categories; // level name -> category value
};

struct TopKItem {
    std::string image_id;
    double score = 0.0;
    PatchBox box;
    std::optional<RoiMatch> match;
};

struct TopKEvidence {
    std::string prototype_id;
    int k = 0;
    std::vector<TopKItem> items; // score descending, then image_id ascending
    std::size_t shortfall = 0;   // k - items.size()
};

/// Of the ROIs whose center lies in `box`, the one nearest the box center
/// (then lowest index); nullopt when none.
std::optional<std::size_t> match_roi(const PatchBox& box, const std::vector<ROIAnnotation>& rois);

/// Top-k train patches of every global prototype, matched against ROI centers.
/// Dump images missing from the annotations are not candidates.
std::vector<TopKEvidence> top_k_evidence(const EvidenceDump& dump, const AnnotationSet& annotations,
                                         const Lexicon& lexicon, int k, std::int64_t patch_size,
                                         double eps = 1e-8);

// ---------------------------------------------------------------------------
// Per-prototype verdicts and the coherence properties

struct LevelPurity {
    std::optional<std::string> category; // majority category; absent when no patch applies
    std::size_t count = 0;               // patches carrying the majority category
    double purity = 0.0;                 // count / k
};

struct PrototypeVerdict {
    std::string prototype_id;
    bool is_global = false;
    bool is_relevant = false;
    std::size_t matched_patches = 0;
    std::map<std::string, LevelPurity> purity; // per level; relevant prototypes only
    std::optional<std::string> combined_category;
    int weight_class = 0; // argmax of class_weights, first index on ties
    std::optional<int> align;
};

/// Purity at every lexicon level from one prototype's evidence. Ties in the
/// majority count go to the lexicographically smallest category.
std::map<std::string, LevelPurity> purity_by_level(const TopKEvidence& evidence,
                                                   const Lexicon& lexicon);

std::vector<PrototypeVerdict> build_verdicts(const EvidenceDump& dump,
                                             const std::vector<TopKEvidence>& evidence,
                                             const Lexicon& lexicon, double eps);

/// |RP| / GP over global verdicts. Throws when there is no global prototype.
double relevance(const std::vector<PrototypeVerdict>& verdicts);

/// Mean purity at `level` over relevant prototypes; absent when there are none.
std::optional<double> specialization(const std::vector<PrototypeVerdict>& verdicts,
                                     std::string_view level);

std::size_t relevant_count(const std::vector<PrototypeVerdict>& verdicts);

/// Distinct combined-level categories over relevant prototypes.
std::size_t unique_categories(const std::vector<PrototypeVerdict>& verdicts);

std::optional<double> uniqueness(const std::vector<PrototypeVerdict>& verdicts);

double coverage(const std::vector<PrototypeVerdict>& verdicts, std::size_t tc);

struct ClassSpecificResult {
    std::optional<double> score;
    std::size_t considered = 0;
    std::vector<std::string> notes;
};

/// Mean Align over relevant prototypes whose category at `level` has ROIs in
/// at least two classes. Prototypes whose category has a tied majority are
/// excluded. Writes each verdict's align.
ClassSpecificResult class_specific(std::vector<PrototypeVerdict>& verdicts,
                                   const CategoryUniverse& category_class_counts,
                                   std::string_view level);

// ---------------------------------------------------------------------------
// Localization

enum class LocVariant { Top1, Top10, All };
inline constexpr std::array<LocVariant, 3> kLocVariants{LocVariant::Top1, LocVariant::Top10,
                                                        LocVariant::All};
std::string_view to_string(LocVariant v);

struct OverlapScore {
    double iou = 0.0;
    double dsc = 0.0;
};

struct LocalizationRow {
    std::string image_id;
    std::size_t roi_count = 0;
    std::size_t activated = 0; // prototypes with non-zero contribution
    std::array<OverlapScore, 3> scores{}; // indexed by LocVariant
};

struct LocalizationResult {
    std::array<OverlapScore, 3> mean{};
    std::vector<LocalizationRow> rows;
};

/// IoU/DSC between the union of the selected prototypes' patches and the
/// union of the image's ROIs, averaged over test images carrying ROIs.
LocalizationResult localization(const EvidenceDump& dump, const AnnotationSet& annotations,
                                std::int64_t patch_size, double eps);

OverlapScore localization(const EvidenceDump& dump, const AnnotationSet& annotations,
                          LocVariant variant, std::int64_t patch_size, double eps = 1e-8);

// ---------------------------------------------------------------------------
// Full evaluation

struct PropertyScores {
    std::size_t total_prototypes = 0;
    std::size_t gp = 0;
    double sparsity = 0.0;
    double lp_positive = 0.0;
    double lp_negative = 0.0;
    std::size_t rp = 0;
    double relevance = 0.0;
    std::vector<std::pair<std::string, std::optional<double>>> specialization; // reported levels, in order
    std::size_t uc = 0;
    std::size_t tc = 0;
    std::optional<double> uniqueness;
    double coverage = 0.0;
    std::optional<double> class_specific;
    std::size_t class_specific_n = 0;
    std::array<OverlapScore, 3> localization{}; // indexed by LocVariant
    std::size_t localization_images = 0;

    const std::optional<double>* find_specialization(std::string_view level) const;
};

struct EvaluationResult {
    EvalConfig config; // levels holds the effective reported levels
    std::string model_name;
    std::int64_t seed = 0;
    PropertyScores scores;
    std::vector<PrototypeVerdict> verdicts;
    std::vector<TopKEvidence> evidence;
    std::vector<LocalizationRow> localization_rows;
    std::vector<std::string> diagnostics;
};

/// Levels reported under specialization for `config`.
std::vector<std::string> reported_levels(const EvalConfig& config, const Lexicon& lexicon);

/// Throws ValidationError on cross-file inconsistencies, Error on metric
/// preconditions (no global prototypes, empty test split, TC = 0,
/// nothing to localize).
EvaluationResult evaluate(const EvidenceDump& dump, const AnnotationSet& annotations,
                          const Lexicon& lexicon, const EvalConfig& config);

} // namespace pefcoh
