#pragma once

#include "pefcoh/geometry.hpp"
#include "pefcoh/lexicon.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pefcoh {

inline constexpr std::string_view kDumpFormat = "pefcoh-dump/1";
inline constexpr std::string_view kAnnotationFormat = "pefcoh-ann/1";
inline constexpr std::string_view kLexiconFormat = "pefcoh-lex/1";

enum class Split { Train, Test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

struct PrototypeRecord {
    std::string id;
    std::vector<double> class_weights; // one per class

    bool operator==(const PrototypeRecord&) const = default;
};

// Maximal-activation location of one prototype on one image.
struct ActivationEntry {
    std::string prototype_id;
    double score = 0.0;
    int row = 0;
    int col = 0;

    bool operator==(const ActivationEntry&) const = default;
};

struct ImageActivationRecord {
    std::string image_id;
    Split split = Split::Train;
    std::int64_t width = 0;
    std::int64_t height = 0;
    int class_label = 0;
    int feature_h = 0;
    int feature_w = 0;
    std::vector<ActivationEntry> entries;

    ImageSize size() const { return {width, height}; }
    FeatureGrid grid() const { return {feature_h, feature_w}; }

    bool operator==(const ImageActivationRecord&) const = default;
};

/// Everything the toolkit knows about one model run.
struct EvidenceDump {
    std::string model_name;
    std::int64_t seed = 0;
    std::vector<std::string> class_names;
    std::vector<PrototypeRecord> prototypes;
    std::vector<ImageActivationRecord> images;

    const PrototypeRecord* find_prototype(std::string_view id) const;

    bool operator==(const EvidenceDump&) const = default;
};

struct ROIAnnotation {
    Box bbox;
    std::string type;
    std::map<std::string, std::string> descriptors; // axis -> value
    int roi_class = 0;

    bool operator==(const ROIAnnotation&) const = default;
};

struct AnnotatedImage {
    std::string image_id;
    std::int64_t width = 0;
    std::int64_t height = 0;
    Split split = Split::Train;
    int class_label = 0;
    std::vector<ROIAnnotation> rois;

    bool operator==(const AnnotatedImage&) const = default;
};

struct AnnotationSet {
    std::vector<std::string> class_names;
    std::vector<AnnotatedImage> images;

    const AnnotatedImage* find_image(std::string_view image_id) const;

    bool operator==(const AnnotationSet&) const = default;
};

// Parsing. Schema and invariant violations throw ValidationError naming the
// offending field path (e.g. "images[3].entries[0].row"); I/O failures throw Error.
EvidenceDump parse_dump(const std::filesystem::path& path);
EvidenceDump parse_dump_text(std::string_view text);

Lexicon parse_lexicon(const std::filesystem::path& path);
Lexicon parse_lexicon_text(std::string_view text);

AnnotationSet parse_annotations(const std::filesystem::path& path, const Lexicon& lexicon);
AnnotationSet parse_annotations_text(std::string_view text, const Lexicon& lexicon);

/// Annotation structure checks only; descriptor axes are not checked against
/// any lexicon. Use with derive_lexicon() when no lexicon file is given.
AnnotationSet parse_annotations_text_unchecked(std::string_view text);

/// Types in first-seen order, each type's axes sorted by name.
Lexicon derive_lexicon(const AnnotationSet& annotations);

// Checks every ROI against the lexicon; throws ValidationError.
void validate_annotations(const AnnotationSet& annotations, const Lexicon& lexicon);

struct AnnotatedCorpus {
    AnnotationSet annotations;
    Lexicon lexicon;
};

/// Reads annotations, plus the lexicon file when given (else derives one).
AnnotatedCorpus load_annotations(const std::filesystem::path& annotations,
                                 const std::optional<std::filesystem::path>& lexicon);

std::string serialize_dump(const EvidenceDump& dump);
std::string serialize_annotations(const AnnotationSet& annotations);
std::string serialize_lexicon(const Lexicon& lexicon);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

enum class Severity { Warning, Error };

struct Diagnostic {
    Severity severity = Severity::Error;
    std::string message;
};

/// Cross-file consistency: class lists, per-image split and dimensions.
/// Dump images missing from the annotations are warnings.
std::vector<Diagnostic> cross_validate(const EvidenceDump& dump, const AnnotationSet& annotations);

/// Distinct categories observed at one level, with ROI counts per class.
struct CategoryUniverse {
    std::string level;
    std::map<std::string, std::vector<std::size_t>> class_counts; // value -> count per class

    std::size_t size() const { return class_counts.size(); }
};

/// `scope` restricts counting to images of one split; nullopt counts all.
CategoryUniverse derive_category_universe(const AnnotationSet& annotations, const Lexicon& lexicon,
                                          std::string_view level,
                                          std::optional<Split> scope = std::nullopt);

} // namespace pefcoh
