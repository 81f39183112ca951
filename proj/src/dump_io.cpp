#include "pefcoh/dump.hpp"

#include "pefcoh/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace pefcoh {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what)
{
    throw ValidationError(where + ": " + what);
}

std::string at(const std::string& path, std::string_view key)
{
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string at(const std::string& path, std::size_t index)
{
    return path + "[" + std::to_string(index) + "]";
}

const json& field(const json& obj, const std::string& path, std::string_view key)
{
    if (!obj.is_object())
        fail(path.empty() ? "<root>" : path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        fail(at(path, key), "missing field");
    return *it;
}

std::string get_string(const json& obj, const std::string& path, std::string_view key)
{
    const json& v = field(obj, path, key);
    if (!v.is_string())
        fail(at(path, key), "expected a string");
    return v.get<std::string>();
}

std::int64_t get_int(const json& v, const std::string& where)
{
    if (v.is_number_integer())
        return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && std::floor(d) == d && std::abs(d) < 9e15)
            return static_cast<std::int64_t>(d);
    }
    fail(where, "expected an integer");
}

std::int64_t get_int(const json& obj, const std::string& path, std::string_view key)
{
    return get_int(field(obj, path, key), at(path, key));
}

double get_real(const json& v, const std::string& where)
{
    if (!v.is_number())
        fail(where, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        fail(where, "expected a finite number");
    return d;
}

const json& get_array(const json& obj, const std::string& path, std::string_view key)
{
    const json& v = field(obj, path, key);
    if (!v.is_array())
        fail(at(path, key), "expected an array");
    return v;
}

void check_format(const json& root, std::string_view expected)
{
    const std::string got = get_string(root, "", "format");
    if (got != expected)
        fail("format", "expected \"" + std::string(expected) + "\", got \"" + got + "\"");
}

json parse_json(std::string_view text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
}

std::vector<std::string> get_class_names(const json& root)
{
    const json& arr = get_array(root, "", "class_names");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string())
            fail(at("class_names", i), "expected a string");
        names.push_back(arr[i].get<std::string>());
    }
    if (names.size() < 2)
        fail("class_names", "at least two classes required");
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
        fail("class_names", "duplicate class name");
    return names;
}

Split get_split(const json& obj, const std::string& path)
{
    const std::string text = get_string(obj, path, "split");
    auto split = parse_split(text);
    if (!split)
        fail(at(path, "split"), "expected \"train\" or \"test\", got \"" + text + "\"");
    return *split;
}

int get_class_label(const json& obj, const std::string& path, std::string_view key,
                    std::size_t n_classes)
{
    const std::int64_t label = get_int(obj, path, key);
    if (label < 0 || label >= static_cast<std::int64_t>(n_classes))
        fail(at(path, key), "class index " + std::to_string(label) + " out of range");
    return static_cast<int>(label);
}

} // namespace

std::string_view to_string(Split split)
{
    return split == Split::Train ? "train" : "test";
}

std::optional<Split> parse_split(std::string_view text)
{
    if (text == "train")
        return Split::Train;
    if (text == "test")
        return Split::Test;
    return std::nullopt;
}

const PrototypeRecord* EvidenceDump::find_prototype(std::string_view id) const
{
    auto it = std::find_if(prototypes.begin(), prototypes.end(),
                           [&](const PrototypeRecord& p) { return p.id == id; });
    return it == prototypes.end() ? nullptr : &*it;
}

const AnnotatedImage* AnnotationSet::find_image(std::string_view image_id) const
{
    auto it = std::find_if(images.begin(), images.end(),
                           [&](const AnnotatedImage& img) { return img.image_id == image_id; });
    return it == images.end() ? nullptr : &*it;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad())
        throw Error("read failed: " + path.string());
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out)
        throw Error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Evidence dump

EvidenceDump parse_dump_text(std::string_view text)
{
    const json root = parse_json(text);
    check_format(root, kDumpFormat);

    EvidenceDump dump;
    dump.model_name = get_string(root, "", "model_name");
    dump.seed = get_int(root, "", "seed");
    dump.class_names = get_class_names(root);
    const std::size_t n_classes = dump.class_names.size();

    std::unordered_set<std::string> proto_ids;
    const json& protos = get_array(root, "", "prototypes");
    for (std::size_t i = 0; i < protos.size(); ++i) {
        const std::string path = at("prototypes", i);
        PrototypeRecord rec;
        rec.id = get_string(protos[i], path, "id");
        if (!proto_ids.insert(rec.id).second)
            fail(at(path, "id"), "duplicate prototype id \"" + rec.id + "\"");
        const json& weights = get_array(protos[i], path, "class_weights");
        if (weights.size() != n_classes)
            fail(at(path, "class_weights"), "expected " + std::to_string(n_classes) +
                                                " weights, got " + std::to_string(weights.size()));
        for (std::size_t c = 0; c < weights.size(); ++c)
            rec.class_weights.push_back(get_real(weights[c], at(at(path, "class_weights"), c)));
        dump.prototypes.push_back(std::move(rec));
    }

    std::unordered_set<std::string> image_ids;
    const json& images = get_array(root, "", "images");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string path = at("images", i);
        const json& img = images[i];
        ImageActivationRecord rec;
        rec.image_id = get_string(img, path, "image_id");
        if (!image_ids.insert(rec.image_id).second)
            fail(at(path, "image_id"), "duplicate image id \"" + rec.image_id + "\"");
        rec.split = get_split(img, path);
        rec.width = get_int(img, path, "width");
        rec.height = get_int(img, path, "height");
        if (rec.width <= 0 || rec.height <= 0)
            fail(path, "image dimensions must be positive");
        rec.class_label = get_class_label(img, path, "class_label", n_classes);
        const std::int64_t fh = get_int(img, path, "feature_h");
        const std::int64_t fw = get_int(img, path, "feature_w");
        if (fh <= 0 || fw <= 0 || fh > (1 << 20) || fw > (1 << 20))
            fail(path, "feature map dimensions must be positive");
        rec.feature_h = static_cast<int>(fh);
        rec.feature_w = static_cast<int>(fw);

        std::unordered_set<std::string> seen;
        const json& entries = get_array(img, path, "entries");
        for (std::size_t e = 0; e < entries.size(); ++e) {
            const std::string epath = at(at(path, "entries"), e);
            ActivationEntry entry;
            entry.prototype_id = get_string(entries[e], epath, "prototype_id");
            if (!proto_ids.contains(entry.prototype_id))
                fail(at(epath, "prototype_id"), "unknown prototype \"" + entry.prototype_id + "\"");
            if (!seen.insert(entry.prototype_id).second)
                fail(at(epath, "prototype_id"),
                     "duplicate entry for prototype \"" + entry.prototype_id + "\"");
            entry.score = get_real(field(entries[e], epath, "score"), at(epath, "score"));
            if (entry.score < 0.0)
                fail(at(epath, "score"), "presence score must be non-negative");
            const std::int64_t row = get_int(entries[e], epath, "row");
            const std::int64_t col = get_int(entries[e], epath, "col");
            if (row < 0 || row >= fh || col < 0 || col >= fw)
                fail(epath, "activation location out of feature map");
            entry.row = static_cast<int>(row);
            entry.col = static_cast<int>(col);
            rec.entries.push_back(std::move(entry));
        }
        dump.images.push_back(std::move(rec));
    }
    return dump;
}

EvidenceDump parse_dump(const std::filesystem::path& path)
{
    try {
        return parse_dump_text(read_text_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string serialize_dump(const EvidenceDump& dump)
{
    json root;
    root["format"] = kDumpFormat;
    root["model_name"] = dump.model_name;
    root["seed"] = dump.seed;
    root["class_names"] = dump.class_names;
    json protos = json::array();
    for (const PrototypeRecord& p : dump.prototypes)
        protos.push_back({{"id", p.id}, {"class_weights", p.class_weights}});
    root["prototypes"] = std::move(protos);
    json images = json::array();
    for (const ImageActivationRecord& img : dump.images) {
        json entries = json::array();
        for (const ActivationEntry& e : img.entries) {
            entries.push_back(
                {{"prototype_id", e.prototype_id}, {"score", e.score}, {"row", e.row}, {"col", e.col}});
        }
        images.push_back({{"image_id", img.image_id},
                          {"split", to_string(img.split)},
                          {"width", img.width},
                          {"height", img.height},
                          {"class_label", img.class_label},
                          {"feature_h", img.feature_h},
                          {"feature_w", img.feature_w},
                          {"entries", std::move(entries)}});
    }
    root["images"] = std::move(images);
    return root.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Lexicon

Lexicon parse_lexicon_text(std::string_view text)
{
    const json root = parse_json(text);
    check_format(root, kLexiconFormat);
    std::vector<AbnormalityType> types;
    const json& arr = get_array(root, "", "types");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = at("types", i);
        AbnormalityType t;
        t.name = canonical_token(get_string(arr[i], path, "name"));
        if (t.name.empty())
            fail(at(path, "name"), "empty type name");
        if (std::any_of(types.begin(), types.end(),
                        [&](const AbnormalityType& o) { return o.name == t.name; }))
            fail(at(path, "name"), "duplicate type \"" + t.name + "\"");
        const json& axes = get_array(arr[i], path, "axes");
        for (std::size_t a = 0; a < axes.size(); ++a) {
            if (!axes[a].is_string())
                fail(at(at(path, "axes"), a), "expected a string");
            std::string axis = canonical_token(axes[a].get<std::string>());
            if (axis.empty())
                fail(at(at(path, "axes"), a), "empty axis name");
            if (std::find(t.axes.begin(), t.axes.end(), axis) != t.axes.end())
                fail(at(at(path, "axes"), a), "duplicate axis \"" + axis + "\"");
            t.axes.push_back(std::move(axis));
        }
        types.push_back(std::move(t));
    }
    return Lexicon(std::move(types));
}

Lexicon parse_lexicon(const std::filesystem::path& path)
{
    try {
        return parse_lexicon_text(read_text_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string serialize_lexicon(const Lexicon& lexicon)
{
    json types = json::array();
    for (const AbnormalityType& t : lexicon.types())
        types.push_back({{"name", t.name}, {"axes", t.axes}});
    json root{{"format", kLexiconFormat}, {"types", std::move(types)}};
    return root.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Annotations

AnnotationSet parse_annotations_text_unchecked(std::string_view text)
{
    const json root = parse_json(text);
    check_format(root, kAnnotationFormat);

    AnnotationSet set;
    set.class_names = get_class_names(root);
    const std::size_t n_classes = set.class_names.size();

    std::unordered_set<std::string> ids;
    const json& images = get_array(root, "", "images");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string path = at("images", i);
        const json& img = images[i];
        AnnotatedImage rec;
        rec.image_id = get_string(img, path, "image_id");
        if (!ids.insert(rec.image_id).second)
            fail(at(path, "image_id"), "duplicate image id \"" + rec.image_id + "\"");
        rec.width = get_int(img, path, "width");
        rec.height = get_int(img, path, "height");
        if (rec.width <= 0 || rec.height <= 0)
            fail(path, "image dimensions must be positive");
        rec.split = get_split(img, path);
        rec.class_label = get_class_label(img, path, "class_label", n_classes);

        const json& rois = get_array(img, path, "rois");
        for (std::size_t r = 0; r < rois.size(); ++r) {
            const std::string rpath = at(at(path, "rois"), r);
            ROIAnnotation roi;
            const json& bbox = get_array(rois[r], rpath, "bbox");
            if (bbox.size() != 4)
                fail(at(rpath, "bbox"), "expected [x_min, y_min, x_max, y_max]");
            roi.bbox = Box{get_int(bbox[0], at(rpath, "bbox")), get_int(bbox[1], at(rpath, "bbox")),
                           get_int(bbox[2], at(rpath, "bbox")), get_int(bbox[3], at(rpath, "bbox"))};
            if (roi.bbox.x_min >= roi.bbox.x_max || roi.bbox.y_min >= roi.bbox.y_max)
                fail(at(rpath, "bbox"), "degenerate bbox");
            if (roi.bbox.x_min < 0 || roi.bbox.y_min < 0 || roi.bbox.x_max > rec.width ||
                roi.bbox.y_max > rec.height)
                fail(at(rpath, "bbox"), "bbox outside image bounds");
            roi.type = canonical_token(get_string(rois[r], rpath, "type"));
            if (roi.type.empty())
                fail(at(rpath, "type"), "empty abnormality type");
            if (auto it = rois[r].find("descriptors"); it != rois[r].end() && !it->is_null()) {
                if (!it->is_object())
                    fail(at(rpath, "descriptors"), "expected an object");
                for (const auto& [axis, value] : it->items()) {
                    const std::string dpath = at(at(rpath, "descriptors"), axis);
                    if (value.is_null())
                        continue;
                    if (!value.is_string())
                        fail(dpath, "expected a string");
                    std::string v = canonical_token(value.get<std::string>());
                    if (v.empty() || v == kMissingValue)
                        continue;
                    roi.descriptors[canonical_token(axis)] = std::move(v);
                }
            }
            roi.roi_class = get_class_label(rois[r], rpath, "roi_class", n_classes);
            rec.rois.push_back(std::move(roi));
        }
        set.images.push_back(std::move(rec));
    }
    return set;
}

void validate_annotations(const AnnotationSet& annotations, const Lexicon& lexicon)
{
    for (std::size_t i = 0; i < annotations.images.size(); ++i) {
        const AnnotatedImage& img = annotations.images[i];
        for (std::size_t r = 0; r < img.rois.size(); ++r) {
            const ROIAnnotation& roi = img.rois[r];
            const std::string rpath = at(at(at("images", i), "rois"), r);
            if (lexicon.find_type(roi.type) == nullptr)
                fail(at(rpath, "type"), "unknown abnormality type \"" + roi.type + "\"");
            for (const auto& [axis, value] : roi.descriptors) {
                if (!lexicon.declares_axis(roi.type, axis))
                    fail(at(at(rpath, "descriptors"), axis),
                         "axis \"" + axis + "\" not declared for type \"" + roi.type + "\"");
            }
        }
    }
}

AnnotationSet parse_annotations_text(std::string_view text, const Lexicon& lexicon)
{
    AnnotationSet set = parse_annotations_text_unchecked(text);
    validate_annotations(set, lexicon);
    return set;
}

AnnotationSet parse_annotations(const std::filesystem::path& path, const Lexicon& lexicon)
{
    try {
        return parse_annotations_text(read_text_file(path), lexicon);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

Lexicon derive_lexicon(const AnnotationSet& annotations)
{
    std::vector<std::string> order;
    std::map<std::string, std::set<std::string>> axes;
    for (const AnnotatedImage& img : annotations.images) {
        for (const ROIAnnotation& roi : img.rois) {
            if (!axes.contains(roi.type))
                order.push_back(roi.type);
            auto& type_axes = axes[roi.type];
            for (const auto& [axis, value] : roi.descriptors)
                type_axes.insert(axis);
        }
    }
    std::vector<AbnormalityType> types;
    for (const std::string& name : order) {
        const auto& type_axes = axes[name];
        types.push_back(AbnormalityType{name, {type_axes.begin(), type_axes.end()}});
    }
    return Lexicon(std::move(types));
}

AnnotatedCorpus load_annotations(const std::filesystem::path& annotations,
                                 const std::optional<std::filesystem::path>& lexicon)
{
    AnnotatedCorpus corpus;
    try {
        corpus.annotations = parse_annotations_text_unchecked(read_text_file(annotations));
        corpus.lexicon = lexicon ? parse_lexicon(*lexicon) : derive_lexicon(corpus.annotations);
        validate_annotations(corpus.annotations, corpus.lexicon);
    } catch (const ValidationError& e) {
        throw ValidationError(annotations.string() + ": " + e.what());
    }
    return corpus;
}

std::string serialize_annotations(const AnnotationSet& annotations)
{
    json images = json::array();
    for (const AnnotatedImage& img : annotations.images) {
        json rois = json::array();
        for (const ROIAnnotation& roi : img.rois) {
            rois.push_back({{"bbox", {roi.bbox.x_min, roi.bbox.y_min, roi.bbox.x_max, roi.bbox.y_max}},
                            {"type", roi.type},
                            {"descriptors", roi.descriptors},
                            {"roi_class", roi.roi_class}});
        }
        images.push_back({{"image_id", img.image_id},
                          {"width", img.width},
                          {"height", img.height},
                          {"split", to_string(img.split)},
                          {"class_label", img.class_label},
                          {"rois", std::move(rois)}});
    }
    json root{{"format", kAnnotationFormat},
              {"class_names", annotations.class_names},
              {"images", std::move(images)}};
    return root.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Cross-file checks

std::vector<Diagnostic> cross_validate(const EvidenceDump& dump, const AnnotationSet& annotations)
{
    std::vector<Diagnostic> out;
    auto list = [](const std::vector<std::string>& names) {
        std::string s = "[";
        for (std::size_t i = 0; i < names.size(); ++i)
            s += (i ? ", " : "") + names[i];
        return s + "]";
    };
    if (dump.class_names != annotations.class_names) {
        out.push_back({Severity::Error, "class_names mismatch: dump " + list(dump.class_names) +
                                            " vs annotations " + list(annotations.class_names)});
    }

    std::unordered_map<std::string_view, const AnnotatedImage*> by_id;
    for (const AnnotatedImage& img : annotations.images)
        by_id.emplace(img.image_id, &img);

    for (const ImageActivationRecord& img : dump.images) {
        auto it = by_id.find(img.image_id);
        if (it == by_id.end()) {
            out.push_back({Severity::Warning, "image \"" + img.image_id +
                                                  "\" absent from annotations; ignored for "
                                                  "relevance and localization"});
            continue;
        }
        const AnnotatedImage& ann = *it->second;
        if (ann.split != img.split) {
            out.push_back({Severity::Error, "image \"" + img.image_id + "\": split " +
                                                std::string(to_string(img.split)) + " in dump, " +
                                                std::string(to_string(ann.split)) + " in annotations"});
        }
        if (ann.width != img.width || ann.height != img.height) {
            out.push_back({Severity::Error, "image \"" + img.image_id + "\": size " +
                                                std::to_string(img.width) + "x" +
                                                std::to_string(img.height) + " in dump, " +
                                                std::to_string(ann.width) + "x" +
                                                std::to_string(ann.height) + " in annotations"});
        }
        if (ann.class_label != img.class_label) {
            out.push_back({Severity::Error, "image \"" + img.image_id + "\": class_label " +
                                                std::to_string(img.class_label) + " in dump, " +
                                                std::to_string(ann.class_label) + " in annotations"});
        }
    }
    return out;
}

CategoryUniverse derive_category_universe(const AnnotationSet& annotations, const Lexicon& lexicon,
                                          std::string_view level_name, std::optional<Split> scope)
{
    const auto level = lexicon.find_level(level_name);
    if (!level)
        throw Error("unknown category level \"" + std::string(level_name) + "\"");
    CategoryUniverse universe;
    universe.level = level->name;
    const std::size_t n_classes = annotations.class_names.size();
    for (const AnnotatedImage& img : annotations.images) {
        if (scope && img.split != *scope)
            continue;
        for (const ROIAnnotation& roi : img.rois) {
            auto category = category_at(lexicon, *level, roi.type, roi.descriptors);
            if (!category)
                continue;
            auto& counts = universe.class_counts[category->value];
            counts.resize(n_classes, 0);
            ++counts[static_cast<std::size_t>(roi.roi_class)];
        }
    }
    return universe;
}

} // namespace pefcoh
