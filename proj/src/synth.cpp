#include "pefcoh/synth.hpp"

#include "pefcoh/error.hpp"
#include "pefcoh/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace pefcoh::synth {

using nlohmann::json;

namespace {

// mt19937_64 is fully specified; the helpers below avoid the
// implementation-defined standard distributions so output bytes are portable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(engine_() % n); }

    bool chance(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

    std::vector<std::size_t> permutation(std::size_t n)
    {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), 0);
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 engine_;
};

const std::vector<std::string> kShapes{"oval", "round", "irregular", "lobulated",
                                       "architectural_distortion"};
const std::vector<std::string> kMargins{"circumscribed", "obscured", "microlobulated", "ill_defined",
                                        "spiculated"};
const std::vector<std::string> kMorphologies{"amorphous", "pleomorphic", "punctate",
                                             "fine_linear_branching", "coarse", "round_and_regular"};
const std::vector<std::string> kDistributions{"clustered", "segmental", "linear", "regional", "diffuse"};

struct Category {
    std::string type;
    std::map<std::string, std::string> descriptors;
    std::map<std::string, std::string> by_level; // level -> value, applicable levels only
    int majority = 0;
    int minority = -1; // -1: single-class category
    std::size_t roi_count = 0;
};

[[noreturn]] void infeasible(const std::string& fields, const std::string& why)
{
    throw Error("infeasible synth spec (" + fields + "): " + why);
}

std::size_t round_count(double fraction, std::size_t base)
{
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(base)));
}

std::string padded(std::string_view prefix, std::size_t i, std::size_t n)
{
    const int width = static_cast<int>(std::to_string(n > 0 ? n - 1 : 0).size());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%0*zu", width, i);
    return std::string(prefix) + buf;
}

bool separated(const Box& a, const Box& b, std::int64_t gap)
{
    return a.x_max + gap <= b.x_min || b.x_max + gap <= a.x_min || a.y_max + gap <= b.y_min ||
           b.y_max + gap <= a.y_min;
}

struct Slot {
    FeatureLocation cell;
    Box box;
};

// Pairwise-disjoint patch positions, at least `margin` pixels apart.
std::vector<Slot> find_slots(const SynthSpec& spec, std::int64_t margin)
{
    std::vector<Slot> slots;
    const FeatureGrid grid{spec.feature_h, spec.feature_w};
    const ImageSize size{spec.image_width, spec.image_height};
    for (int r = 0; r < spec.feature_h; ++r) {
        for (int c = 0; c < spec.feature_w; ++c) {
            const Box box = resolve_patch_box({r, c}, grid, size, spec.patch_size);
            const bool ok = std::all_of(slots.begin(), slots.end(),
                                        [&](const Slot& s) { return separated(s.box, box, margin); });
            if (ok)
                slots.push_back(Slot{{r, c}, box});
        }
    }
    return slots;
}

void check_spec(const SynthSpec& s)
{
    if (s.class_names.size() < 2)
        infeasible("class_names", "at least two classes required");
    if (std::set<std::string>(s.class_names.begin(), s.class_names.end()).size() != s.class_names.size())
        infeasible("class_names", "duplicate class name");
    if (s.n_prototypes < 1)
        infeasible("n_prototypes", "must be positive");
    if (s.n_zero_weight < 0 || s.n_zero_weight >= s.n_prototypes)
        infeasible("n_zero_weight, n_prototypes", "need at least one global prototype");
    if (s.image_width < 1 || s.image_height < 1 || s.feature_h < 1 || s.feature_w < 1)
        infeasible("image_width, image_height, feature_h, feature_w", "dimensions must be positive");
    if (s.patch_size < 1)
        infeasible("patch_size", "must be positive");
    if (s.k < 1)
        infeasible("k", "must be positive");
    if (s.n_train_images < s.k)
        infeasible("k, n_train_images", "each prototype needs k distinct train images");
    if (s.n_test_images < 1 || s.n_test_without_roi < 0 || s.n_test_without_roi >= s.n_test_images)
        infeasible("n_test_images, n_test_without_roi", "need at least one test image with ROIs");
    if (s.n_mass_categories < 0 ||
        static_cast<std::size_t>(s.n_mass_categories) > kShapes.size() * kMargins.size())
        infeasible("n_mass_categories", "out of range");
    if (s.n_calcification_categories < 0 ||
        static_cast<std::size_t>(s.n_calcification_categories) > kMorphologies.size() * kDistributions.size())
        infeasible("n_calcification_categories", "out of range");
    if (s.n_mass_categories + s.n_calcification_categories < 1)
        infeasible("n_mass_categories, n_calcification_categories", "need at least one category");
    if (s.n_single_class_categories < 0 ||
        s.n_single_class_categories > s.n_mass_categories + s.n_calcification_categories)
        infeasible("n_single_class_categories", "exceeds the planted category count");
    for (auto [name, v] : {std::pair{"relevance", s.relevance}, {"purity", s.purity},
                           {"distractor", s.distractor}, {"uniqueness", s.uniqueness},
                           {"class_specific", s.class_specific}}) {
        if (!(v >= 0.0 && v <= 1.0))
            infeasible(name, "target must lie in [0, 1]");
    }
    if (!(s.noise >= 0.0 && s.noise < 1.0))
        infeasible("noise", "must lie in [0, 1)");
    if (s.tail_entries < 0)
        infeasible("tail_entries", "must be non-negative");
}

} // namespace

Lexicon synthetic_lexicon()
{
    return Lexicon({AbnormalityType{"mass", {"shape", "margin"}},
                    AbnormalityType{"calcification", {"morphology", "distribution"}}});
}

SynthInstance generate(const SynthSpec& spec)
{
    check_spec(spec);
    Rng rng(spec.rng_seed);
    Rng jitter(spec.run_seed.value_or(spec.rng_seed) ^ 0x5DEECE66Dull);
    SynthInstance out;
    out.lexicon = synthetic_lexicon();
    const std::vector<Level> levels = out.lexicon.levels();
    const std::size_t n_classes = spec.class_names.size();
    const auto k = static_cast<std::size_t>(spec.k);

    // Categories.
    std::vector<Category> categories;
    auto add_categories = [&](const std::string& type, const std::string& axis_a,
                              const std::vector<std::string>& pool_a, const std::string& axis_b,
                              const std::vector<std::string>& pool_b, int count) {
        std::vector<std::size_t> combos = rng.permutation(pool_a.size() * pool_b.size());
        combos.resize(static_cast<std::size_t>(count));
        std::sort(combos.begin(), combos.end());
        for (std::size_t idx : combos) {
            Category c;
            c.type = type;
            c.descriptors = {{axis_a, pool_a[idx / pool_b.size()]}, {axis_b, pool_b[idx % pool_b.size()]}};
            for (const Level& level : levels) {
                if (auto cat = category_at(out.lexicon, level, c.type, c.descriptors))
                    c.by_level.emplace(level.name, cat->value);
            }
            categories.push_back(std::move(c));
        }
    };
    add_categories("mass", "shape", kShapes, "margin", kMargins, spec.n_mass_categories);
    add_categories("calcification", "morphology", kMorphologies, "distribution", kDistributions,
                   spec.n_calcification_categories);
    const std::size_t n_categories = categories.size();
    {
        std::vector<std::size_t> order = rng.permutation(n_categories);
        for (std::size_t i = 0; i < n_categories; ++i) {
            Category& c = categories[order[i]];
            c.majority = static_cast<int>(rng.below(n_classes));
            if (i >= static_cast<std::size_t>(spec.n_single_class_categories)) {
                c.minority = static_cast<int>((static_cast<std::size_t>(c.majority) + 1 +
                                               rng.below(n_classes - 1)) % n_classes);
            }
        }
    }

    // Prototypes and the planted relevant set.
    const auto n_protos = static_cast<std::size_t>(spec.n_prototypes);
    std::vector<bool> global(n_protos, true);
    {
        std::vector<std::size_t> order = rng.permutation(n_protos);
        for (std::size_t z = 0; z < static_cast<std::size_t>(spec.n_zero_weight); ++z)
            global[order[z]] = false;
    }
    std::vector<std::size_t> globals;
    for (std::size_t i = 0; i < n_protos; ++i) {
        if (global[i])
            globals.push_back(i);
    }
    const std::size_t gp = globals.size();

    const std::size_t n_rel = round_count(spec.relevance, gp);
    const std::size_t m = round_count(spec.purity, k);
    const std::size_t d = round_count(spec.distractor, k);
    std::size_t uc = 0;
    if (n_rel > 0) {
        if (m < 1)
            infeasible("purity, k", "relevant prototypes need at least one matched patch");
        if (m + d > k)
            infeasible("purity, distractor", "matched and distractor patches exceed k");
        if (d >= m)
            infeasible("purity, distractor", "distractor share must stay below the purity share");
        if (d > 0 && n_categories < 2)
            infeasible("distractor, n_mass_categories, n_calcification_categories",
                       "distractors need a second category");
        uc = std::max<std::size_t>(1, round_count(spec.uniqueness, n_rel));
        if (uc > n_categories)
            infeasible("uniqueness, n_mass_categories, n_calcification_categories",
                       "uniqueness target needs " + std::to_string(uc) +
                           " unique categories but only " + std::to_string(n_categories) +
                           " are planted");
    }

    std::vector<bool> relevant(n_protos, false);
    std::vector<std::size_t> main_cat(n_protos, 0);
    std::vector<std::optional<std::size_t>> distractor_cat(n_protos);
    std::vector<std::size_t> rel_order;
    {
        std::vector<std::size_t> shuffled = globals;
        rng.shuffle(shuffled);
        rel_order.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_rel));
        std::vector<std::size_t> unique_cats = rng.permutation(n_categories);
        unique_cats.resize(uc);
        for (std::size_t i = 0; i < rel_order.size(); ++i) {
            const std::size_t p = rel_order[i];
            relevant[p] = true;
            main_cat[p] = i < uc ? unique_cats[i] : unique_cats[rng.below(uc)];
            if (d > 0) {
                std::size_t other = rng.below(n_categories - 1);
                if (other >= main_cat[p])
                    ++other;
                distractor_cat[p] = other;
            }
        }
    }

    // Class weights: the argmax class is planted to agree or disagree with the
    // majority class of the prototype's category.
    std::vector<int> weight_class(n_protos, 0);
    std::vector<std::optional<int>> align(n_protos);
    std::size_t restricted = 0;
    std::size_t aligned_target = 0;
    {
        std::vector<std::size_t> mixed;
        for (std::size_t p : rel_order) {
            if (categories[main_cat[p]].minority >= 0)
                mixed.push_back(p);
        }
        restricted = mixed.size();
        aligned_target = round_count(spec.class_specific, restricted);
        rng.shuffle(mixed);
        for (std::size_t i = 0; i < mixed.size(); ++i)
            align[mixed[i]] = i < aligned_target ? 1 : 0;
        for (std::size_t p = 0; p < n_protos; ++p) {
            const auto random_class = static_cast<int>(rng.below(n_classes));
            if (!align[p]) {
                weight_class[p] = random_class;
                continue;
            }
            const int majority = categories[main_cat[p]].majority;
            weight_class[p] = *align[p] == 1
                                  ? majority
                                  : static_cast<int>((static_cast<std::size_t>(majority) + 1 +
                                                      rng.below(n_classes - 1)) % n_classes);
        }
    }

    EvidenceDump& dump = out.dump;
    dump.model_name = spec.model_name;
    dump.seed = static_cast<std::int64_t>(spec.run_seed.value_or(spec.rng_seed));
    dump.class_names = spec.class_names;
    for (std::size_t p = 0; p < n_protos; ++p) {
        PrototypeRecord rec;
        rec.id = padded("p", p, n_protos);
        rec.class_weights.assign(n_classes, 0.0);
        if (global[p]) {
            for (std::size_t c = 0; c < n_classes; ++c) {
                rec.class_weights[c] = static_cast<int>(c) == weight_class[p]
                                           ? 1.0 + 0.5 * rng.uniform()
                                           : (spec.negative_weights ? -0.5 : 0.0);
            }
        }
        dump.prototypes.push_back(std::move(rec));
    }

    const std::vector<Slot> slots = find_slots(spec, 2);
    const std::size_t n_slots = slots.size();
    const auto n_train = static_cast<std::size_t>(spec.n_train_images);
    const auto n_test = static_cast<std::size_t>(spec.n_test_images);
    if ((gp * k + n_train - 1) / n_train > n_slots)
        infeasible("n_train_images, k, image_width, image_height, patch_size",
                   "top-k patches need more disjoint patch slots than the train images provide");

    auto make_image = [&](std::string id, Split split) {
        ImageActivationRecord img;
        img.image_id = std::move(id);
        img.split = split;
        img.width = spec.image_width;
        img.height = spec.image_height;
        img.class_label = static_cast<int>(rng.below(n_classes));
        img.feature_h = spec.feature_h;
        img.feature_w = spec.feature_w;
        return img;
    };
    auto random_cell = [&]() {
        return FeatureLocation{static_cast<int>(rng.below(static_cast<std::size_t>(spec.feature_h))),
                               static_cast<int>(rng.below(static_cast<std::size_t>(spec.feature_w)))};
    };
    auto entry = [](std::size_t proto, const std::vector<PrototypeRecord>& protos, double score,
                    FeatureLocation cell) {
        return ActivationEntry{protos[proto].id, score, cell.row, cell.col};
    };

    // Train split.
    std::vector<ImageActivationRecord> train;
    std::vector<std::vector<ROIAnnotation>> train_rois(n_train);
    for (std::size_t i = 0; i < n_train; ++i)
        train.push_back(make_image(padded("train_", i, n_train), Split::Train));
    {
        const std::vector<std::size_t> image_of = rng.permutation(n_train);
        std::vector<std::vector<std::size_t>> slot_order(n_train);
        for (auto& order : slot_order)
            order = rng.permutation(n_slots);

        for (std::size_t g = 0; g < gp; ++g) {
            const std::size_t p = globals[g];
            std::vector<int> kinds(k, 0); // 0 unmatched, 1 main, 2 distractor
            if (relevant[p]) {
                std::fill(kinds.begin(), kinds.begin() + static_cast<std::ptrdiff_t>(m), 1);
                std::fill(kinds.begin() + static_cast<std::ptrdiff_t>(m),
                          kinds.begin() + static_cast<std::ptrdiff_t>(m + d), 2);
                rng.shuffle(kinds);
            }
            std::set<std::size_t> used;
            for (std::size_t t = 0; t < k; ++t) {
                const std::size_t pair = g * k + t;
                const std::size_t img = image_of[pair % n_train];
                const Slot& slot = slots[slot_order[img][pair / n_train]];
                used.insert(img);
                const double score =
                    10.0 + 5.0 * static_cast<double>(k - t) / static_cast<double>(k) + spec.noise * jitter.uniform();
                train[img].entries.push_back(entry(p, dump.prototypes, score, slot.cell));
                if (kinds[t] == 0)
                    continue;
                const std::size_t cat = kinds[t] == 1 ? main_cat[p] : *distractor_cat[p];
                const std::int64_t inset = std::min(slot.box.width(), slot.box.height()) / 4;
                ROIAnnotation roi;
                roi.bbox = Box{slot.box.x_min + inset, slot.box.y_min + inset, slot.box.x_max - inset,
                               slot.box.y_max - inset};
                roi.type = categories[cat].type;
                roi.descriptors = categories[cat].descriptors;
                roi.roi_class = categories[cat].majority;
                ++categories[cat].roi_count;
                train_rois[img].push_back(std::move(roi));
            }
            std::vector<std::size_t> others;
            for (std::size_t i = 0; i < n_train; ++i) {
                if (!used.contains(i))
                    others.push_back(i);
            }
            rng.shuffle(others);
            const std::size_t tails = std::min(others.size(), static_cast<std::size_t>(spec.tail_entries));
            for (std::size_t t = 0; t < tails; ++t)
                train[others[t]].entries.push_back(
                    entry(p, dump.prototypes, 1.0 + 4.0 * rng.uniform(), random_cell()));
        }
        for (std::size_t p = 0; p < n_protos; ++p) {
            if (global[p])
                continue;
            for (std::size_t i = 0; i < n_train; ++i) {
                if (rng.chance(0.5))
                    train[i].entries.push_back(
                        entry(p, dump.prototypes, 30.0 * rng.uniform(), random_cell()));
            }
        }
    }

    // Test split: class-balancing ROIs sit exactly on disjoint patch slots.
    std::vector<ImageActivationRecord> test;
    std::vector<std::vector<ROIAnnotation>> test_rois(n_test);
    std::vector<std::vector<std::size_t>> test_roi_slots(n_test);
    for (std::size_t i = 0; i < n_test; ++i)
        test.push_back(make_image(padded("test_", i, n_test), Split::Test));
    const std::vector<std::size_t> test_order = rng.permutation(n_test);
    const std::size_t n_with = n_test - static_cast<std::size_t>(spec.n_test_without_roi);
    {
        std::vector<std::pair<std::size_t, int>> needed; // (category, class)
        for (std::size_t c = 0; c < n_categories; ++c) {
            const Category& cat = categories[c];
            const std::size_t floor_major = cat.minority >= 0 ? 2 : 1;
            for (std::size_t n = cat.roi_count; n < floor_major; ++n)
                needed.emplace_back(c, cat.majority);
            if (cat.minority >= 0)
                needed.emplace_back(c, cat.minority);
        }
        while (needed.size() < n_with) {
            const std::size_t c = rng.below(n_categories);
            needed.emplace_back(c, categories[c].majority);
        }
        rng.shuffle(needed);
        if ((needed.size() + n_with - 1) / n_with > n_slots)
            infeasible("n_test_images, n_test_without_roi",
                       "not enough test patch slots for the class-balancing ROIs");
        std::vector<std::vector<std::size_t>> slot_order(n_test);
        for (auto& order : slot_order)
            order = rng.permutation(n_slots);
        for (std::size_t r = 0; r < needed.size(); ++r) {
            const std::size_t img = test_order[r % n_with];
            const std::size_t slot = slot_order[img][r / n_with];
            const auto [c, cls] = needed[r];
            ROIAnnotation roi;
            roi.bbox = slots[slot].box;
            roi.type = categories[c].type;
            roi.descriptors = categories[c].descriptors;
            roi.roi_class = cls;
            ++categories[c].roi_count;
            test_rois[img].push_back(std::move(roi));
            test_roi_slots[img].push_back(slot);
        }
    }

    // Test activations in a planned contribution order.
    GroundTruthLedger& ledger = out.ledger;
    PropertyScores& s = ledger.scores;
    std::size_t lp_pos = 0;
    std::size_t lp_neg = 0;
    std::array<double, 3> iou_sum{};
    std::array<double, 3> dsc_sum{};
    std::size_t loc_images = 0;
    for (std::size_t i = 0; i < n_test; ++i) {
        ImageActivationRecord& img = test[i];
        const auto y = static_cast<std::size_t>(img.class_label);
        std::vector<std::size_t> ranked;
        for (std::size_t p = 0; p < n_protos; ++p) {
            if (!rng.chance(0.6))
                continue;
            const double w = dump.prototypes[p].class_weights[y];
            if (global[p] && w != 0.0) {
                ranked.push_back(p);
                (w > 0.0 ? lp_pos : lp_neg) += 1;
            } else {
                const Slot& slot = slots[rng.below(n_slots)];
                img.entries.push_back(entry(p, dump.prototypes, 0.1 + 4.9 * rng.uniform(), slot.cell));
            }
        }
        rng.shuffle(ranked);
        std::vector<std::size_t> chosen_slots;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            const std::size_t p = ranked[r];
            const double magnitude =
                static_cast<double>(ranked.size() - r) + 0.5 * spec.noise * jitter.uniform();
            const double score = magnitude / std::abs(dump.prototypes[p].class_weights[y]);
            std::size_t slot = rng.below(n_slots);
            if (!test_roi_slots[i].empty() && rng.chance(0.5))
                slot = test_roi_slots[i][rng.below(test_roi_slots[i].size())];
            chosen_slots.push_back(slot);
            img.entries.push_back(entry(p, dump.prototypes, score, slots[slot].cell));
        }
        if (test_roi_slots[i].empty())
            continue;
        ++loc_images;
        const std::set<std::size_t> roi_set(test_roi_slots[i].begin(), test_roi_slots[i].end());
        for (std::size_t v = 0; v < 3; ++v) {
            std::size_t n = chosen_slots.size();
            if (kLocVariants[v] == LocVariant::Top1)
                n = std::min<std::size_t>(n, 1);
            else if (kLocVariants[v] == LocVariant::Top10)
                n = std::min<std::size_t>(n, 10);
            const std::set<std::size_t> sel(chosen_slots.begin(),
                                            chosen_slots.begin() + static_cast<std::ptrdiff_t>(n));
            std::size_t inter = 0;
            for (std::size_t slot : sel)
                inter += roi_set.count(slot);
            const std::size_t uni = sel.size() + roi_set.size() - inter;
            iou_sum[v] += static_cast<double>(inter) / static_cast<double>(uni);
            dsc_sum[v] += 2.0 * static_cast<double>(inter) / static_cast<double>(sel.size() + roi_set.size());
        }
    }

    for (std::size_t i = 0; i < n_train; ++i) {
        AnnotatedImage a{train[i].image_id, train[i].width, train[i].height, Split::Train,
                         train[i].class_label, std::move(train_rois[i])};
        out.annotations.images.push_back(std::move(a));
    }
    for (std::size_t i = 0; i < n_test; ++i) {
        AnnotatedImage a{test[i].image_id, test[i].width, test[i].height, Split::Test,
                         test[i].class_label, std::move(test_rois[i])};
        out.annotations.images.push_back(std::move(a));
    }
    out.annotations.class_names = spec.class_names;
    dump.images = std::move(train);
    dump.images.insert(dump.images.end(), std::make_move_iterator(test.begin()),
                       std::make_move_iterator(test.end()));

    // Ledger.
    ledger.config.k = spec.k;
    ledger.config.patch_size = spec.patch_size;
    for (const Level& level : levels)
        ledger.config.levels.push_back(level.name);

    s.total_prototypes = n_protos;
    s.gp = gp;
    s.sparsity = 1.0 - static_cast<double>(gp) / static_cast<double>(n_protos);
    s.lp_positive = static_cast<double>(lp_pos) / static_cast<double>(n_test);
    s.lp_negative = static_cast<double>(lp_neg) / static_cast<double>(n_test);
    s.rp = n_rel;
    s.relevance = static_cast<double>(n_rel) / static_cast<double>(gp);
    for (const Level& level : levels) {
        std::optional<double> value;
        if (n_rel > 0) {
            double sum = 0.0;
            for (std::size_t p = 0; p < n_protos; ++p) {
                if (!relevant[p])
                    continue;
                const auto& main_levels = categories[main_cat[p]].by_level;
                const auto main_it = main_levels.find(level.name);
                std::optional<std::string> distractor_value;
                if (distractor_cat[p]) {
                    const auto& dl = categories[*distractor_cat[p]].by_level;
                    if (auto it = dl.find(level.name); it != dl.end())
                        distractor_value = it->second;
                }
                std::size_t count = 0;
                if (main_it != main_levels.end())
                    count = m + (distractor_value == main_it->second ? d : 0);
                else if (distractor_value)
                    count = d;
                sum += static_cast<double>(count) / static_cast<double>(k);
            }
            value = sum / static_cast<double>(n_rel);
        }
        s.specialization.emplace_back(level.name, value);
    }
    s.uc = uc;
    s.tc = n_categories;
    if (n_rel > 0)
        s.uniqueness = static_cast<double>(uc) / static_cast<double>(n_rel);
    s.coverage = static_cast<double>(uc) / static_cast<double>(n_categories);
    s.class_specific_n = restricted;
    if (restricted > 0)
        s.class_specific = static_cast<double>(aligned_target) / static_cast<double>(restricted);
    s.localization_images = loc_images;
    for (std::size_t v = 0; v < 3; ++v) {
        s.localization[v] = OverlapScore{iou_sum[v] / static_cast<double>(loc_images),
                                         dsc_sum[v] / static_cast<double>(loc_images)};
    }

    for (std::size_t p = 0; p < n_protos; ++p) {
        ExpectedVerdict v;
        v.prototype_id = dump.prototypes[p].id;
        v.is_global = global[p];
        v.is_relevant = relevant[p];
        if (relevant[p])
            v.combined_category = categories[main_cat[p]].by_level.at(std::string(kCombinedLevel));
        v.align = align[p];
        ledger.verdicts.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Files

SynthSpec parse_spec_text(std::string_view text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ValidationError("synth spec: expected an object");
    if (auto it = j.find("format"); it != j.end() && *it != kSpecFormat)
        throw ValidationError("format: expected \"" + std::string(kSpecFormat) + "\"");
    SynthSpec s;
    try {
        auto read = [&](const char* key, auto& field) {
            if (auto it = j.find(key); it != j.end())
                field = it->get<std::decay_t<decltype(field)>>();
        };
        read("rng_seed", s.rng_seed);
        if (auto it = j.find("run_seed"); it != j.end() && !it->is_null())
            s.run_seed = it->get<std::uint64_t>();
        read("model_name", s.model_name);
        read("class_names", s.class_names);
        read("n_prototypes", s.n_prototypes);
        read("n_zero_weight", s.n_zero_weight);
        read("n_train_images", s.n_train_images);
        read("n_test_images", s.n_test_images);
        read("n_test_without_roi", s.n_test_without_roi);
        read("image_width", s.image_width);
        read("image_height", s.image_height);
        read("feature_h", s.feature_h);
        read("feature_w", s.feature_w);
        read("patch_size", s.patch_size);
        read("k", s.k);
        read("n_mass_categories", s.n_mass_categories);
        read("n_calcification_categories", s.n_calcification_categories);
        read("n_single_class_categories", s.n_single_class_categories);
        read("relevance", s.relevance);
        read("purity", s.purity);
        read("distractor", s.distractor);
        read("uniqueness", s.uniqueness);
        read("class_specific", s.class_specific);
        read("negative_weights", s.negative_weights);
        read("noise", s.noise);
        read("tail_entries", s.tail_entries);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("synth spec: ") + e.what());
    }
    return s;
}

SynthSpec parse_spec(const std::filesystem::path& path)
{
    try {
        return parse_spec_text(read_text_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string serialize_spec(const SynthSpec& s)
{
    json j{{"format", kSpecFormat},
           {"rng_seed", s.rng_seed},
           {"run_seed", s.run_seed ? json(*s.run_seed) : json(nullptr)},
           {"model_name", s.model_name},
           {"class_names", s.class_names},
           {"n_prototypes", s.n_prototypes},
           {"n_zero_weight", s.n_zero_weight},
           {"n_train_images", s.n_train_images},
           {"n_test_images", s.n_test_images},
           {"n_test_without_roi", s.n_test_without_roi},
           {"image_width", s.image_width},
           {"image_height", s.image_height},
           {"feature_h", s.feature_h},
           {"feature_w", s.feature_w},
           {"patch_size", s.patch_size},
           {"k", s.k},
           {"n_mass_categories", s.n_mass_categories},
           {"n_calcification_categories", s.n_calcification_categories},
           {"n_single_class_categories", s.n_single_class_categories},
           {"relevance", s.relevance},
           {"purity", s.purity},
           {"distractor", s.distractor},
           {"uniqueness", s.uniqueness},
           {"class_specific", s.class_specific},
           {"negative_weights", s.negative_weights},
           {"noise", s.noise},
           {"tail_entries", s.tail_entries}};
    return j.dump(1) + "\n";
}

std::string serialize_ledger(const GroundTruthLedger& ledger)
{
    json verdicts = json::array();
    for (const ExpectedVerdict& v : ledger.verdicts) {
        verdicts.push_back({{"id", v.prototype_id},
                            {"global", v.is_global},
                            {"relevant", v.is_relevant},
                            {"combined_category", v.combined_category ? json(*v.combined_category) : json(nullptr)},
                            {"align", v.align ? json(*v.align) : json(nullptr)}});
    }
    json root{{"format", kLedgerFormat},
              {"config", config_to_json(ledger.config, ledger.config.levels)},
              {"scores", scores_to_json(ledger.scores)},
              {"prototypes", std::move(verdicts)}};
    return root.dump(1) + "\n";
}

GroundTruthLedger parse_ledger_text(std::string_view text)
{
    try {
        const json root = json::parse(text);
        if (root.at("format") != kLedgerFormat)
            throw ValidationError("format: expected \"" + std::string(kLedgerFormat) + "\"");
        GroundTruthLedger ledger;
        ledger.config = config_from_json(root.at("config"));
        ledger.scores = scores_from_json(root.at("scores"));
        for (const json& p : root.at("prototypes")) {
            ExpectedVerdict v;
            v.prototype_id = p.at("id").get<std::string>();
            v.is_global = p.at("global").get<bool>();
            v.is_relevant = p.at("relevant").get<bool>();
            if (!p.at("combined_category").is_null())
                v.combined_category = p.at("combined_category").get<std::string>();
            if (!p.at("align").is_null())
                v.align = p.at("align").get<int>();
            ledger.verdicts.push_back(std::move(v));
        }
        return ledger;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("ledger schema violation: ") + e.what());
    }
}

void write_instance(const SynthInstance& instance, const std::filesystem::path& dir)
{
    write_text_file(dir / "dump.json", serialize_dump(instance.dump));
    write_text_file(dir / "annotations.json", serialize_annotations(instance.annotations));
    write_text_file(dir / "lexicon.json", serialize_lexicon(instance.lexicon));
    write_text_file(dir / "ledger.json", serialize_ledger(instance.ledger));
}

} // namespace pefcoh::synth
