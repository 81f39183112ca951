#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pefcoh {

// Literal used in category values when a descriptor is missing.
inline constexpr std::string_view kMissingValue = "na";

inline constexpr std::string_view kTypeLevel = "type";
inline constexpr std::string_view kCombinedLevel = "combined";

struct AbnormalityType {
    std::string name;
    std::vector<std::string> axes; // declared order drives category canonical form

    bool operator==(const AbnormalityType&) const = default;
};

enum class LevelKind { Type, Axis, Combined };

/// One level of the category hierarchy. Axis levels are named "<type>.<axis>".
struct Level {
    std::string name;
    LevelKind kind = LevelKind::Type;
    std::string type; // axis levels only
    std::string axis; // axis levels only

    bool operator==(const Level&) const = default;
};

struct CategoryId {
    std::string level;
    std::string value;

    auto operator<=>(const CategoryId&) const = default;
};

/// Hierarchy of abnormality types and their descriptor axes.
///
/// Levels are derived: the type level, one level per (type, axis) pair in
/// declaration order, then the combined level.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::vector<AbnormalityType> types);

    const std::vector<AbnormalityType>& types() const { return types_; }
    const AbnormalityType* find_type(std::string_view name) const;
    bool declares_axis(std::string_view type, std::string_view axis) const;

    std::vector<Level> levels() const;
    std::optional<Level> find_level(std::string_view name) const;

    bool operator==(const Lexicon&) const = default;

private:
    std::vector<AbnormalityType> types_;
};

// Lowercase, trimmed, inner whitespace replaced by '_'.
std::string canonical_token(std::string_view raw);

/// Category of an ROI with the given type and descriptors at `level`, or
/// nullopt when the level does not apply (axis level of another type).
std::optional<CategoryId> category_at(const Lexicon& lexicon, const Level& level,
                                      std::string_view type,
                                      const std::map<std::string, std::string>& descriptors);

} // namespace pefcoh
