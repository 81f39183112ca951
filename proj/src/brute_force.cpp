// Literal recomputation of the evaluation properties, used as a test oracle.
// Deliberately shares no helpers with metrics.cpp or geometry.cpp.

#include "pefcoh/synth.hpp"

#include "pefcoh/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>

namespace pefcoh::synth {

namespace {

struct Rect {
    std::int64_t x0, y0, x1, y1;
};

// Start of the patch along one axis: the integer s whose patch center
// s + patch/2 is nearest the cell center, ties toward the larger s, then
// shifted inside [0, extent).
std::pair<std::int64_t, std::int64_t> brute_axis(std::int64_t cell, std::int64_t cells,
                                                 std::int64_t extent, std::int64_t patch)
{
    if (patch >= extent)
        return {0, extent};
    std::int64_t best = 0;
    std::int64_t best_err = -1;
    for (std::int64_t s = -patch - 1; s <= extent + 1; ++s) {
        // 2 * cells * |(s + patch / 2) - (cell + 0.5) * extent / cells|
        const std::int64_t err = std::abs((2 * s + patch) * cells - (2 * cell + 1) * extent);
        if (best_err < 0 || err <= best_err) {
            best_err = err;
            best = s;
        }
    }
    if (best < 0)
        best = 0;
    if (best + patch > extent)
        best = extent - patch;
    return {best, best + patch};
}

Rect brute_patch(const ImageActivationRecord& img, const ActivationEntry& e, std::int64_t patch)
{
    auto [x0, x1] = brute_axis(e.col, img.feature_w, img.width, patch);
    auto [y0, y1] = brute_axis(e.row, img.feature_h, img.height, patch);
    return Rect{x0, y0, x1, y1};
}

bool point_in(const Rect& r, double x, double y)
{
    return x >= static_cast<double>(r.x0) && x < static_cast<double>(r.x1) &&
           y >= static_cast<double>(r.y0) && y < static_cast<double>(r.y1);
}

// Category value of one ROI at a level name, or "" when the level does not apply.
std::string brute_category(const Lexicon& lexicon, const std::string& level, const ROIAnnotation& roi)
{
    auto value = [&](const std::string& axis) {
        auto it = roi.descriptors.find(axis);
        return it == roi.descriptors.end() ? std::string("na") : it->second;
    };
    if (level == "type")
        return roi.type;
    if (level == "combined") {
        std::string out = roi.type;
        for (const AbnormalityType& t : lexicon.types()) {
            if (t.name != roi.type)
                continue;
            for (const std::string& axis : t.axes)
                out += "-" + value(axis);
        }
        return out;
    }
    for (const AbnormalityType& t : lexicon.types()) {
        for (const std::string& axis : t.axes) {
            if (t.name + "." + axis == level)
                return roi.type == t.name ? roi.type + "-" + value(axis) : std::string();
        }
    }
    return {};
}

const AnnotatedImage* brute_find(const AnnotationSet& annotations, const std::string& id)
{
    for (const AnnotatedImage& a : annotations.images) {
        if (a.image_id == id)
            return &a;
    }
    return nullptr;
}

const PrototypeRecord& brute_proto(const EvidenceDump& dump, const std::string& id)
{
    for (const PrototypeRecord& p : dump.prototypes) {
        if (p.id == id)
            return p;
    }
    throw Error("brute force: unknown prototype " + id);
}

bool brute_global(const PrototypeRecord& p, double eps)
{
    for (double w : p.class_weights) {
        if (std::fabs(w) > eps)
            return true;
    }
    return false;
}

struct Raster {
    std::int64_t width;
    std::int64_t height;
    std::vector<std::uint8_t> pixels;

    Raster(std::int64_t w, std::int64_t h)
        : width(w), height(h), pixels(static_cast<std::size_t>(w * h), 0) {}

    void paint(const Rect& r)
    {
        for (std::int64_t y = std::max<std::int64_t>(r.y0, 0); y < std::min(r.y1, height); ++y)
            for (std::int64_t x = std::max<std::int64_t>(r.x0, 0); x < std::min(r.x1, width); ++x)
                pixels[static_cast<std::size_t>(y * width + x)] = 1;
    }
};

} // namespace

PropertyScores brute_force_scores(const EvidenceDump& dump, const AnnotationSet& annotations,
                                  const Lexicon& lexicon, const EvalConfig& config)
{
    if (dump.prototypes.size() > kBruteMaxPrototypes || dump.images.size() > kBruteMaxImages ||
        annotations.images.size() > kBruteMaxImages)
        throw Error("brute force refuses instances above 20 prototypes or 50 images");
    for (const AnnotatedImage& a : annotations.images) {
        if (a.width > kBruteMaxSide || a.height > kBruteMaxSide)
            throw Error("brute force refuses images above 512x512");
    }

    const double eps = config.eps;
    const int k = config.k;
    PropertyScores s;

    // Compactness.
    s.total_prototypes = dump.prototypes.size();
    for (const PrototypeRecord& p : dump.prototypes)
        s.gp += brute_global(p, eps) ? 1 : 0;
    s.sparsity = s.total_prototypes == 0 ? 0.0 : 1.0 - double(s.gp) / double(s.total_prototypes);

    double test_images = 0;
    double pos = 0;
    double neg = 0;
    for (const ImageActivationRecord& img : dump.images) {
        if (img.split != Split::Test)
            continue;
        test_images += 1;
        std::size_t cls = static_cast<std::size_t>(img.class_label);
        if (config.lp_class == LpClass::Predicted) {
            std::vector<double> logit(dump.class_names.size(), 0.0);
            for (const ActivationEntry& e : img.entries)
                for (std::size_t c = 0; c < logit.size(); ++c)
                    logit[c] += e.score * brute_proto(dump, e.prototype_id).class_weights[c];
            cls = 0;
            for (std::size_t c = 1; c < logit.size(); ++c)
                if (logit[c] > logit[cls])
                    cls = c;
        }
        for (const ActivationEntry& e : img.entries) {
            const double v = e.score * brute_proto(dump, e.prototype_id).class_weights[cls];
            if (v > eps)
                pos += 1;
            if (v < -eps)
                neg += 1;
        }
    }
    if (test_images == 0)
        throw Error("empty test split");
    s.lp_positive = pos / test_images;
    s.lp_negative = neg / test_images;

    // Relevance, purity, uniqueness.
    std::vector<std::string> level_names;
    for (const Level& l : lexicon.levels())
        level_names.push_back(l.name);
    const std::vector<std::string> reported = config.levels.empty() ? level_names : config.levels;

    std::map<std::string, double> purity_sum;
    std::set<std::string> unique;
    std::vector<std::pair<const PrototypeRecord*, std::map<std::string, std::string>>> assigned;
    for (const PrototypeRecord& p : dump.prototypes) {
        if (!brute_global(p, eps))
            continue;
        struct Hit {
            double score;
            std::string image_id;
            const ImageActivationRecord* img;
            const ActivationEntry* entry;
        };
        std::vector<Hit> hits;
        for (const ImageActivationRecord& img : dump.images) {
            if (img.split != Split::Train || brute_find(annotations, img.image_id) == nullptr)
                continue;
            for (const ActivationEntry& e : img.entries) {
                if (e.prototype_id == p.id)
                    hits.push_back(Hit{e.score, img.image_id, &img, &e});
            }
        }
        std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
            return a.score > b.score || (a.score == b.score && a.image_id < b.image_id);
        });
        if (hits.size() > static_cast<std::size_t>(k))
            hits.resize(static_cast<std::size_t>(k));

        std::vector<const ROIAnnotation*> matched;
        for (const Hit& h : hits) {
            const Rect patch = brute_patch(*h.img, *h.entry, config.patch_size);
            const double pcx = (patch.x0 + patch.x1) / 2.0;
            const double pcy = (patch.y0 + patch.y1) / 2.0;
            const AnnotatedImage* ann = brute_find(annotations, h.image_id);
            const ROIAnnotation* best = nullptr;
            double best_d = 0;
            for (const ROIAnnotation& roi : ann->rois) {
                const double cx = (roi.bbox.x_min + roi.bbox.x_max) / 2.0;
                const double cy = (roi.bbox.y_min + roi.bbox.y_max) / 2.0;
                if (!point_in(patch, cx, cy))
                    continue;
                const double dist = (cx - pcx) * (cx - pcx) + (cy - pcy) * (cy - pcy);
                if (best == nullptr || dist < best_d) {
                    best = &roi;
                    best_d = dist;
                }
            }
            if (best != nullptr)
                matched.push_back(best);
        }
        if (matched.empty())
            continue;

        ++s.rp;
        std::map<std::string, std::string> majority;
        for (const std::string& level : level_names) {
            std::map<std::string, int> counts;
            for (const ROIAnnotation* roi : matched) {
                const std::string c = brute_category(lexicon, level, *roi);
                if (!c.empty())
                    counts[c] += 1;
            }
            int top = 0;
            std::string top_cat;
            for (const auto& [c, n] : counts) {
                if (n > top) {
                    top = n;
                    top_cat = c;
                }
            }
            purity_sum[level] += double(top) / double(k);
            if (top > 0)
                majority[level] = top_cat;
        }
        unique.insert(majority.at("combined"));
        assigned.emplace_back(&p, std::move(majority));
    }
    if (s.gp == 0)
        throw Error("no global prototypes");
    s.relevance = double(s.rp) / double(s.gp);
    for (const std::string& level : reported) {
        if (s.rp == 0)
            s.specialization.emplace_back(level, std::nullopt);
        else
            s.specialization.emplace_back(level, purity_sum[level] / double(s.rp));
    }
    s.uc = unique.size();
    if (s.rp > 0)
        s.uniqueness = double(s.uc) / double(s.rp);

    // Coverage.
    if (config.tc_override) {
        s.tc = *config.tc_override;
    } else {
        std::set<std::string> all;
        for (const AnnotatedImage& a : annotations.images) {
            if (config.tc_scope && a.split != *config.tc_scope)
                continue;
            for (const ROIAnnotation& roi : a.rois)
                all.insert(brute_category(lexicon, "combined", roi));
        }
        s.tc = all.size();
    }
    if (s.tc == 0)
        throw Error("TC is 0");
    s.coverage = double(s.uc) / double(s.tc);

    // Class-specific.
    std::map<std::string, std::vector<int>> class_counts;
    for (const AnnotatedImage& a : annotations.images) {
        for (const ROIAnnotation& roi : a.rois) {
            const std::string c = brute_category(lexicon, config.class_specific_level, roi);
            if (c.empty())
                continue;
            auto& v = class_counts[c];
            v.resize(annotations.class_names.size(), 0);
            v[static_cast<std::size_t>(roi.roi_class)] += 1;
        }
    }
    double align_sum = 0;
    for (const auto& [proto, majority] : assigned) {
        auto it = majority.find(config.class_specific_level);
        if (it == majority.end())
            continue;
        const std::vector<int>& counts = class_counts[it->second];
        int classes_present = 0;
        for (int n : counts)
            classes_present += n > 0 ? 1 : 0;
        if (classes_present < 2)
            continue;
        int top = -1;
        int top_n = -1;
        int ties = 0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] > top_n) {
                top_n = counts[c];
                top = static_cast<int>(c);
                ties = 1;
            } else if (counts[c] == top_n) {
                ++ties;
            }
        }
        if (ties > 1)
            continue;
        int heaviest = 0;
        for (std::size_t c = 1; c < proto->class_weights.size(); ++c)
            if (proto->class_weights[c] > proto->class_weights[static_cast<std::size_t>(heaviest)])
                heaviest = static_cast<int>(c);
        ++s.class_specific_n;
        align_sum += heaviest == top ? 1.0 : 0.0;
    }
    if (s.class_specific_n > 0)
        s.class_specific = align_sum / double(s.class_specific_n);

    // Localization on rasterized masks.
    std::array<double, 3> iou_sum{};
    std::array<double, 3> dsc_sum{};
    for (const ImageActivationRecord& img : dump.images) {
        if (img.split != Split::Test)
            continue;
        const AnnotatedImage* ann = brute_find(annotations, img.image_id);
        if (ann == nullptr || ann->rois.empty())
            continue;
        const auto y = static_cast<std::size_t>(img.class_label);
        std::vector<std::pair<double, const ActivationEntry*>> active;
        for (const ActivationEntry& e : img.entries) {
            const PrototypeRecord& p = brute_proto(dump, e.prototype_id);
            if (!brute_global(p, eps))
                continue;
            const double mag = std::fabs(e.score * p.class_weights[y]);
            if (mag > eps)
                active.emplace_back(mag, &e);
        }
        std::sort(active.begin(), active.end(), [](const auto& a, const auto& b) {
            return a.first > b.first || (a.first == b.first && a.second->prototype_id < b.second->prototype_id);
        });
        Raster truth(img.width, img.height);
        for (const ROIAnnotation& roi : ann->rois)
            truth.paint(Rect{roi.bbox.x_min, roi.bbox.y_min, roi.bbox.x_max, roi.bbox.y_max});
        const std::size_t limits[3] = {1, 10, active.size()};
        for (std::size_t v = 0; v < 3; ++v) {
            Raster pred(img.width, img.height);
            for (std::size_t i = 0; i < active.size() && i < limits[v]; ++i)
                pred.paint(brute_patch(img, *active[i].second, config.patch_size));
            double inter = 0;
            double uni = 0;
            double a = 0;
            double b = 0;
            for (std::size_t px = 0; px < truth.pixels.size(); ++px) {
                inter += (truth.pixels[px] && pred.pixels[px]) ? 1 : 0;
                uni += (truth.pixels[px] || pred.pixels[px]) ? 1 : 0;
                a += pred.pixels[px];
                b += truth.pixels[px];
            }
            iou_sum[v] += uni == 0 ? 0.0 : inter / uni;
            dsc_sum[v] += (a + b) == 0 ? 0.0 : 2 * inter / (a + b);
        }
        ++s.localization_images;
    }
    if (s.localization_images == 0)
        throw Error("no localizable instances");
    for (std::size_t v = 0; v < 3; ++v) {
        s.localization[v].iou = iou_sum[v] / double(s.localization_images);
        s.localization[v].dsc = dsc_sum[v] / double(s.localization_images);
    }
    return s;
}

} // namespace pefcoh::synth
