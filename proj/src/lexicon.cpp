#include "pefcoh/lexicon.hpp"

#include <algorithm>
#include <cctype>

namespace pefcoh {

Lexicon::Lexicon(std::vector<AbnormalityType> types) : types_(std::move(types)) {}

const AbnormalityType* Lexicon::find_type(std::string_view name) const
{
    auto it = std::find_if(types_.begin(), types_.end(),
                           [&](const AbnormalityType& t) { return t.name == name; });
    return it == types_.end() ? nullptr : &*it;
}

bool Lexicon::declares_axis(std::string_view type, std::string_view axis) const
{
    const AbnormalityType* t = find_type(type);
    return t != nullptr && std::find(t->axes.begin(), t->axes.end(), axis) != t->axes.end();
}

std::vector<Level> Lexicon::levels() const
{
    std::vector<Level> out;
    out.push_back(Level{std::string(kTypeLevel), LevelKind::Type, {}, {}});
    for (const AbnormalityType& t : types_) {
        for (const std::string& axis : t.axes)
            out.push_back(Level{t.name + "." + axis, LevelKind::Axis, t.name, axis});
    }
    out.push_back(Level{std::string(kCombinedLevel), LevelKind::Combined, {}, {}});
    return out;
}

std::optional<Level> Lexicon::find_level(std::string_view name) const
{
    for (Level& level : levels()) {
        if (level.name == name)
            return std::move(level);
    }
    return std::nullopt;
}

std::string canonical_token(std::string_view raw)
{
    std::size_t begin = 0;
    std::size_t end = raw.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin])))
        ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1])))
        --end;
    std::string out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const auto c = static_cast<unsigned char>(raw[i]);
        out.push_back(std::isspace(c) ? '_' : static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::optional<CategoryId> category_at(const Lexicon& lexicon, const Level& level,
                                      std::string_view type,
                                      const std::map<std::string, std::string>& descriptors)
{
    auto value_of = [&](const std::string& axis) -> std::string {
        auto it = descriptors.find(axis);
        return it == descriptors.end() ? std::string(kMissingValue) : it->second;
    };

    switch (level.kind) {
    case LevelKind::Type:
        return CategoryId{level.name, std::string(type)};
    case LevelKind::Axis:
        if (level.type != type)
            return std::nullopt;
        return CategoryId{level.name, level.type + "-" + value_of(level.axis)};
    case LevelKind::Combined: {
        std::string value(type);
        if (const AbnormalityType* t = lexicon.find_type(type)) {
            for (const std::string& axis : t->axes)
                value += "-" + value_of(axis);
        }
        return CategoryId{level.name, std::move(value)};
    }
    }
    return std::nullopt;
}

} // namespace pefcoh
