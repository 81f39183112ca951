#pragma once

#include "pefcoh/dump.hpp"
#include "pefcoh/lexicon.hpp"
#include "pefcoh/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pefcoh::synth {

inline constexpr std::string_view kSpecFormat = "pefcoh-synth/1";
inline constexpr std::string_view kLedgerFormat = "pefcoh-ledger/1";

/// Parameters of a synthetic instance. Targets are fractions; the generator
/// rounds each to the nearest achievable count and the ledger records the
/// exact value it planted.
struct SynthSpec {
    std::uint64_t rng_seed = 1;
    // Seed of the simulated model run: varies only score jitter and the dump's
    // seed field, so runs share one annotation set. Defaults to rng_seed.
    std::optional<std::uint64_t> run_seed;
    std::string model_name = "synthetic";
    std::vector<std::string> class_names{"benign", "malignant"};

    int n_prototypes = 12;
    int n_zero_weight = 2; // prototypes with all-zero class weights
    int n_train_images = 30;
    int n_test_images = 12;
    int n_test_without_roi = 2;
    std::int64_t image_width = 512;
    std::int64_t image_height = 512;
    int feature_h = 16;
    int feature_w = 16;
    std::int64_t patch_size = 64;
    int k = 10;

    int n_mass_categories = 5;
    int n_calcification_categories = 4;
    int n_single_class_categories = 1;

    double relevance = 0.5;
    double purity = 0.6;      // share of top-k patches on the assigned category
    double distractor = 0.2;  // share of top-k patches on one other category
    double uniqueness = 0.6;
    double class_specific = 0.75;
    bool negative_weights = true; // -0.5 toward non-owner classes, else 0
    double noise = 0.05;          // presence-score jitter, below planted gaps
    int tail_entries = 3;         // extra low-score train activations per prototype

    bool operator==(const SynthSpec&) const = default;
};

struct ExpectedVerdict {
    std::string prototype_id;
    bool is_global = false;
    bool is_relevant = false;
    std::optional<std::string> combined_category;
    std::optional<int> align;
};

/// Property values implied by the construction.
struct GroundTruthLedger {
    EvalConfig config;
    PropertyScores scores;
    std::vector<ExpectedVerdict> verdicts;
};

struct SynthInstance {
    EvidenceDump dump;
    AnnotationSet annotations;
    Lexicon lexicon;
    GroundTruthLedger ledger;
};

/// Fixed mammography lexicon: mass (shape, margin), calcification
/// (morphology, distribution).
Lexicon synthetic_lexicon();

/// Deterministic in the spec. Throws Error naming the conflicting fields
/// when targets cannot be planted.
SynthInstance generate(const SynthSpec& spec);

SynthSpec parse_spec_text(std::string_view text);
SynthSpec parse_spec(const std::filesystem::path& path);
std::string serialize_spec(const SynthSpec& spec);

std::string serialize_ledger(const GroundTruthLedger& ledger);
GroundTruthLedger parse_ledger_text(std::string_view text);

/// Writes dump.json, annotations.json, lexicon.json and ledger.json.
void write_instance(const SynthInstance& instance, const std::filesystem::path& dir);

// Size limits accepted by brute_force_scores.
inline constexpr std::size_t kBruteMaxPrototypes = 20;
inline constexpr std::size_t kBruteMaxImages = 50;
inline constexpr std::int64_t kBruteMaxSide = 512;

/// Literal recomputation of every property for small instances: full
/// re-sorting per prototype and rasterized pixel-set geometry, sharing no
/// code with evaluate(). Throws Error on instances above the size limits.
PropertyScores brute_force_scores(const EvidenceDump& dump, const AnnotationSet& annotations,
                                  const Lexicon& lexicon, const EvalConfig& config);

} // namespace pefcoh::synth
