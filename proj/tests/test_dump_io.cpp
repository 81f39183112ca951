#include "pefcoh/dump.hpp"
#include "pefcoh/error.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

using namespace pefcoh;
using namespace pefcoh::testing;

namespace {

std::string minimal_dump(const std::string& entry)
{
    return R"({"format":"pefcoh-dump/1","model_name":"m","seed":0,"class_names":["benign","malignant"],
      "prototypes":[{"id":"p0","class_weights":[0.0,1.0]}],
      "images":[{"image_id":"a","split":"train","width":64,"height":64,"class_label":1,
                 "feature_h":2,"feature_w":2,"entries":[)" +
           entry + "]}]}";
}

std::string one_roi_annotations(const std::string& roi)
{
    return R"({"format":"pefcoh-ann/1","class_names":["benign","malignant"],
      "images":[{"image_id":"a","split":"train","width":64,"height":64,"class_label":1,"rois":[)" +
           roi + "]}]}";
}

std::string error_of(auto&& fn)
{
    try {
        fn();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(ParseDump, MinimalDump)
{
    const EvidenceDump d = parse_dump_text(minimal_dump(R"({"prototype_id":"p0","score":0.5,"row":1,"col":0})"));
    ASSERT_EQ(d.prototypes.size(), 1u);
    ASSERT_EQ(d.images.size(), 1u);
    EXPECT_EQ(d.images[0].entries[0].row, 1);
    EXPECT_EQ(d.find_prototype("p0")->class_weights[1], 1.0);
}

TEST(ParseDump, UnknownPrototype)
{
    const std::string msg =
        error_of([] { parse_dump_text(minimal_dump(R"({"prototype_id":"p9","score":0.5,"row":0,"col":0})")); });
    EXPECT_NE(msg.find("unknown prototype"), std::string::npos) << msg;
    EXPECT_NE(msg.find("p9"), std::string::npos) << msg;
}

TEST(ParseDump, LocationOutOfFeatureMap)
{
    const std::string msg =
        error_of([] { parse_dump_text(minimal_dump(R"({"prototype_id":"p0","score":0.5,"row":2,"col":0})")); });
    EXPECT_NE(msg.find("activation location out of feature map"), std::string::npos) << msg;
    EXPECT_NE(msg.find("images[0].entries[0]"), std::string::npos) << msg;
}

TEST(ParseDump, WrongFormatAndBadJson)
{
    EXPECT_THROW(parse_dump_text("{\"format\":\"other\"}"), ValidationError);
    EXPECT_THROW(parse_dump_text("{not json"), ValidationError);
}

TEST(ParseDump, RoundTrip)
{
    const Fixture f = two_prototype_fixture();
    EXPECT_EQ(parse_dump_text(serialize_dump(f.dump)), f.dump);
    EXPECT_EQ(parse_annotations_text(serialize_annotations(f.annotations), f.lexicon), f.annotations);
    EXPECT_EQ(parse_lexicon_text(serialize_lexicon(f.lexicon)), f.lexicon);
}

TEST(ParseAnnotations, CombinedCategory)
{
    const Lexicon lex = mass_calc_lexicon();
    const AnnotationSet a = parse_annotations_text(
        one_roi_annotations(R"({"bbox":[1,2,30,40],"type":"Mass","roi_class":1,
                              "descriptors":{"shape":"Oval","margin":"circumscribed"}})"),
        lex);
    ASSERT_EQ(a.images[0].rois.size(), 1u);
    const ROIAnnotation& roi = a.images[0].rois[0];
    EXPECT_EQ(roi.bbox, (Box{1, 2, 30, 40}));
    const auto combined = category_at(lex, *lex.find_level("combined"), roi.type, roi.descriptors);
    ASSERT_TRUE(combined);
    EXPECT_EQ(combined->value, "mass-oval-circumscribed");
    const auto shape = category_at(lex, *lex.find_level("mass.shape"), roi.type, roi.descriptors);
    EXPECT_EQ(shape->value, "mass-oval");
    EXPECT_FALSE(category_at(lex, *lex.find_level("calcification.morphology"), roi.type, roi.descriptors));
}

TEST(ParseAnnotations, MissingDescriptorIsNa)
{
    const Lexicon lex = mass_calc_lexicon();
    const AnnotationSet a = parse_annotations_text(
        one_roi_annotations(R"({"bbox":[1,2,30,40],"type":"mass","roi_class":1,"descriptors":{"shape":"oval"}})"), lex);
    const ROIAnnotation& roi = a.images[0].rois[0];
    EXPECT_EQ(category_at(lex, *lex.find_level("combined"), roi.type, roi.descriptors)->value, "mass-oval-na");
}

TEST(ParseAnnotations, DegenerateBbox)
{
    const std::string msg = error_of([] {
        parse_annotations_text(one_roi_annotations(R"({"bbox":[5,2,5,40],"type":"mass","roi_class":1})"),
                               mass_calc_lexicon());
    });
    EXPECT_NE(msg.find("degenerate bbox"), std::string::npos) << msg;
}

TEST(ParseAnnotations, AxisNotDeclaredForType)
{
    const std::string msg = error_of([] {
        parse_annotations_text(one_roi_annotations(R"({"bbox":[1,2,30,40],"type":"calcification","roi_class":1,
                                                      "descriptors":{"shape":"oval"}})"),
                               mass_calc_lexicon());
    });
    EXPECT_NE(msg.find("not declared for type"), std::string::npos) << msg;
}

TEST(ParseAnnotations, UnknownType)
{
    const std::string msg = error_of([] {
        parse_annotations_text(one_roi_annotations(R"({"bbox":[1,2,30,40],"type":"cyst","roi_class":1})"),
                               mass_calc_lexicon());
    });
    EXPECT_NE(msg.find("unknown abnormality type"), std::string::npos) << msg;
}

TEST(DeriveLexicon, FirstSeenTypesSortedAxes)
{
    const AnnotationSet a = parse_annotations_text_unchecked(one_roi_annotations(
        R"({"bbox":[1,2,30,40],"type":"mass","roi_class":1,"descriptors":{"shape":"oval","margin":"x"}},
           {"bbox":[1,2,30,40],"type":"calcification","roi_class":0,"descriptors":{"morphology":"fine"}})"));
    const Lexicon lex = derive_lexicon(a);
    ASSERT_EQ(lex.types().size(), 2u);
    EXPECT_EQ(lex.types()[0], (AbnormalityType{"mass", {"margin", "shape"}}));
    EXPECT_EQ(lex.types()[1], (AbnormalityType{"calcification", {"morphology"}}));
    std::vector<std::string> names;
    for (const Level& l : lex.levels())
        names.push_back(l.name);
    EXPECT_EQ(names, (std::vector<std::string>{"type", "mass.margin", "mass.shape", "calcification.morphology",
                                               "combined"}));
}

TEST(CategoryUniverse, ScreeningShapedSetHas132Categories)
{
    const Lexicon lex = mass_calc_lexicon();
    AnnotationSet a;
    a.class_names = {"benign", "malignant"};
    AnnotatedImage img{"i", 4096, 4096, Split::Train, 0, {}};
    for (int s = 0; s < 10; ++s)
        for (int m = 0; m < 7; ++m)
            img.rois.push_back(mass_roi({0, 0, 10, 10}, "shape" + std::to_string(s), "margin" + std::to_string(m),
                                        (s + m) % 2));
    for (int mo = 0; mo < 31; ++mo)
        for (int d = 0; d < 2; ++d)
            img.rois.push_back(calc_roi({0, 0, 10, 10}, "morph" + std::to_string(mo), "dist" + std::to_string(d), d));
    a.images.push_back(img);
    const CategoryUniverse u = derive_category_universe(a, lex, "combined");
    EXPECT_EQ(u.size(), 132u);
    std::size_t mass = 0;
    for (const auto& [value, counts] : u.class_counts)
        mass += value.starts_with("mass-");
    EXPECT_EQ(mass, 70u);
    EXPECT_EQ(derive_category_universe(a, lex, "type").size(), 2u);
}

TEST(CategoryUniverse, CountsPerClassAndScope)
{
    const Lexicon lex = mass_calc_lexicon();
    AnnotationSet a;
    a.class_names = {"benign", "malignant"};
    a.images.push_back({"i", 100, 100, Split::Train, 0,
                        {mass_roi({0, 0, 10, 10}, "oval", "c", 0), mass_roi({5, 5, 10, 10}, "oval", "c", 1)}});
    a.images.push_back({"j", 100, 100, Split::Test, 0, {mass_roi({0, 0, 10, 10}, "round", "c", 1)}});
    const CategoryUniverse u = derive_category_universe(a, lex, "combined");
    EXPECT_EQ(u.size(), 2u);
    EXPECT_EQ(u.class_counts.at("mass-oval-c"), (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(derive_category_universe(a, lex, "combined", Split::Train).size(), 1u);
    EXPECT_EQ(derive_category_universe(AnnotationSet{}, lex, "combined").size(), 0u);
}

TEST(CrossValidate, ClassNameMismatchNamesBothLists)
{
    Fixture f = two_prototype_fixture();
    f.annotations.class_names = {"normal", "cancer"};
    const auto diags = cross_validate(f.dump, f.annotations);
    ASSERT_FALSE(diags.empty());
    EXPECT_EQ(diags[0].severity, Severity::Error);
    EXPECT_NE(diags[0].message.find("benign"), std::string::npos);
    EXPECT_NE(diags[0].message.find("cancer"), std::string::npos);
}

TEST(CrossValidate, MissingImageIsWarning)
{
    Fixture f = two_prototype_fixture();
    f.annotations.images.erase(f.annotations.images.begin() + 1);
    const auto diags = cross_validate(f.dump, f.annotations);
    ASSERT_EQ(diags.size(), 1u);
    EXPECT_EQ(diags[0].severity, Severity::Warning);
}

TEST(CrossValidate, SplitMismatchIsError)
{
    Fixture f = two_prototype_fixture();
    f.annotations.images[0].split = Split::Test;
    const auto diags = cross_validate(f.dump, f.annotations);
    ASSERT_EQ(diags.size(), 1u);
    EXPECT_EQ(diags[0].severity, Severity::Error);
}

TEST(CanonicalToken, TrimLowerUnderscore)
{
    EXPECT_EQ(canonical_token("  Ill Defined "), "ill_defined");
    EXPECT_EQ(canonical_token("OVAL"), "oval");
}
