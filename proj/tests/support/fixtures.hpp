#pragma once

#include "pefcoh/dump.hpp"
#include "pefcoh/lexicon.hpp"
#include "pefcoh/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pefcoh::testing {

struct Fixture {
    EvidenceDump dump;
    AnnotationSet annotations;
    Lexicon lexicon;
};

inline Lexicon mass_calc_lexicon()
{
    return Lexicon({{"mass", {"shape", "margin"}}, {"calcification", {"morphology", "distribution"}}});
}

inline ROIAnnotation mass_roi(Box box, std::string shape, std::string margin, int roi_class = 1)
{
    return {box, "mass", {{"shape", std::move(shape)}, {"margin", std::move(margin)}}, roi_class};
}

inline ROIAnnotation calc_roi(Box box, std::string morphology, std::string distribution, int roi_class = 1)
{
    return {box, "calcification", {{"morphology", std::move(morphology)}, {"distribution", std::move(distribution)}},
            roi_class};
}

inline std::string numbered(const char* prefix, std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
    return buf;
}

/// `gp` global prototypes (plus `zero` zero-weight ones), each the sole
/// activator of its own 512x512 train image at cell (0,0) of a 4x4 map. With
/// patch 130 and k = 1 the top-1 patch is (0,0,130,130). The first `rp`
/// images carry an ROI centered inside it; their categories cycle over `uc`
/// distinct mass shapes. One test image carries an ROI for localization.
inline Fixture ratio_fixture(std::size_t gp, std::size_t rp, std::size_t uc, std::size_t zero = 0)
{
    Fixture f;
    f.lexicon = mass_calc_lexicon();
    f.dump.model_name = "ratio";
    f.dump.class_names = {"benign", "malignant"};
    f.annotations.class_names = f.dump.class_names;
    for (std::size_t i = 0; i < gp + zero; ++i) {
        const std::string pid = numbered("p", i);
        f.dump.prototypes.push_back({pid, i < gp ? std::vector<double>{0.0, 1.0} : std::vector<double>{0.0, 0.0}});
        ImageActivationRecord img{numbered("train", i), Split::Train, 512, 512, 1, 4, 4, {{pid, 10.0, 0, 0}}};
        AnnotatedImage ann{img.image_id, 512, 512, Split::Train, 1, {}};
        if (i < rp)
            ann.rois.push_back(mass_roi({50, 50, 80, 80}, "s" + std::to_string(i % uc), "circumscribed"));
        f.dump.images.push_back(std::move(img));
        f.annotations.images.push_back(std::move(ann));
    }
    f.dump.images.push_back({"test0000", Split::Test, 512, 512, 1, 4, 4, {{numbered("p", 0), 5.0, 0, 0}}});
    f.annotations.images.push_back(
        {"test0000", 512, 512, Split::Test, 1, {mass_roi({0, 0, 130, 130}, "s0", "circumscribed")}});
    return f;
}

/// Minimal 2-prototype fixture: p0 hits an ROI, p1 does not.
inline Fixture two_prototype_fixture()
{
    Fixture f;
    f.lexicon = mass_calc_lexicon();
    f.dump.model_name = "two";
    f.dump.class_names = {"benign", "malignant"};
    f.annotations.class_names = f.dump.class_names;
    f.dump.prototypes = {{"p0", {0.0, 1.0}}, {"p1", {1.0, 0.0}}};
    f.dump.images = {
        {"a", Split::Train, 512, 512, 1, 4, 4, {{"p0", 3.0, 0, 0}, {"p1", 1.0, 3, 3}}},
        {"b", Split::Train, 512, 512, 0, 4, 4, {{"p0", 1.0, 3, 3}, {"p1", 2.0, 3, 3}}},
        {"t", Split::Test, 512, 512, 1, 4, 4, {{"p0", 2.0, 0, 0}, {"p1", 0.5, 3, 3}}},
    };
    f.annotations.images = {
        {"a", 512, 512, Split::Train, 1, {mass_roi({40, 40, 90, 90}, "oval", "circumscribed")}},
        {"b", 512, 512, Split::Train, 0, {}},
        {"t", 512, 512, Split::Test, 1, {mass_roi({0, 0, 130, 130}, "oval", "circumscribed")}},
    };
    return f;
}

/// Random box with 1 <= side and inside [0, frame).
inline Box random_box(std::mt19937_64& rng, std::int64_t frame)
{
    std::uniform_int_distribution<std::int64_t> pos(0, frame - 1);
    const std::int64_t x0 = pos(rng), y0 = pos(rng);
    std::uniform_int_distribution<std::int64_t> wx(1, frame - x0), wy(1, frame - y0);
    return {x0, y0, x0 + wx(rng), y0 + wy(rng)};
}

/// Pixel-count oracle on a frame x frame raster.
inline std::vector<std::uint8_t> rasterize(const std::vector<Box>& boxes, std::int64_t frame)
{
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(frame * frame), 0);
    for (const Box& b : boxes)
        for (std::int64_t y = b.y_min; y < b.y_max; ++y)
            for (std::int64_t x = b.x_min; x < b.x_max; ++x)
                mask[static_cast<std::size_t>(y * frame + x)] = 1;
    return mask;
}

inline void expect_scores_near(const PropertyScores& a, const PropertyScores& b, double tol,
                               std::vector<std::string>& mismatches)
{
    auto real = [&](const char* name, double x, double y) {
        if (!(std::abs(x - y) <= tol))
            mismatches.push_back(std::string(name) + ": " + std::to_string(x) + " vs " + std::to_string(y));
    };
    auto opt = [&](const std::string& name, const std::optional<double>& x, const std::optional<double>& y) {
        if (x.has_value() != y.has_value())
            mismatches.push_back(name + ": presence differs");
        else if (x)
            real(name.c_str(), *x, *y);
    };
    auto count = [&](const char* name, std::size_t x, std::size_t y) {
        if (x != y)
            mismatches.push_back(std::string(name) + ": " + std::to_string(x) + " vs " + std::to_string(y));
    };
    count("total", a.total_prototypes, b.total_prototypes);
    count("gp", a.gp, b.gp);
    count("rp", a.rp, b.rp);
    count("uc", a.uc, b.uc);
    count("tc", a.tc, b.tc);
    count("class_specific_n", a.class_specific_n, b.class_specific_n);
    count("localization_images", a.localization_images, b.localization_images);
    real("sparsity", a.sparsity, b.sparsity);
    real("lp_positive", a.lp_positive, b.lp_positive);
    real("lp_negative", a.lp_negative, b.lp_negative);
    real("relevance", a.relevance, b.relevance);
    real("coverage", a.coverage, b.coverage);
    opt("uniqueness", a.uniqueness, b.uniqueness);
    opt("class_specific", a.class_specific, b.class_specific);
    if (a.specialization.size() != b.specialization.size())
        mismatches.push_back("specialization level count differs");
    else
        for (std::size_t i = 0; i < a.specialization.size(); ++i) {
            if (a.specialization[i].first != b.specialization[i].first)
                mismatches.push_back("specialization level order differs");
            opt("specialization." + a.specialization[i].first, a.specialization[i].second,
                b.specialization[i].second);
        }
    for (std::size_t v = 0; v < 3; ++v) {
        real("localization.iou", a.localization[v].iou, b.localization[v].iou);
        real("localization.dsc", a.localization[v].dsc, b.localization[v].dsc);
    }
}

} // namespace pefcoh::testing

#include "pefcoh/synth.hpp"

namespace pefcoh::testing {

/// Spec with targets drawn from a grid the generator can always plant.
inline synth::SynthSpec random_spec(std::uint64_t seed)
{
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 17);
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
    synth::SynthSpec s;
    s.rng_seed = seed;
    s.model_name = "synth" + std::to_string(seed % 3);
    s.n_prototypes = pick(6, 20);
    s.n_zero_weight = pick(0, 3);
    s.k = pick(4, 10);
    s.n_train_images = pick(20, 30);
    s.n_test_images = pick(4, 14);
    s.n_test_without_roi = pick(0, 2);
    s.feature_h = pick(8, 16);
    s.feature_w = pick(8, 16);
    s.patch_size = pick(40, 64);
    s.n_mass_categories = pick(3, 6);
    s.n_calcification_categories = pick(2, 5);
    s.n_single_class_categories = pick(0, 2);
    const int gp = s.n_prototypes - s.n_zero_weight;
    const int rp = pick(1, gp);
    const int categories = s.n_mass_categories + s.n_calcification_categories;
    const int uc = pick(1, std::min(rp, categories));
    const int m = pick((s.k + 1) / 2, s.k);
    const int d = pick(0, std::min(s.k - m, m - 1));
    s.relevance = static_cast<double>(rp) / gp;
    s.uniqueness = static_cast<double>(uc) / rp;
    s.purity = static_cast<double>(m) / s.k;
    s.distractor = static_cast<double>(d) / s.k;
    s.class_specific = pick(0, 4) / 4.0;
    s.negative_weights = rng() % 2 == 0;
    s.noise = pick(0, 10) / 100.0;
    s.tail_entries = pick(0, 4);
    return s;
}

} // namespace pefcoh::testing
