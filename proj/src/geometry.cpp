#include "pefcoh/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <utility>

namespace pefcoh {

namespace {

std::int64_t floor_div(std::int64_t num, std::int64_t den)
{
    std::int64_t q = num / den;
    if ((num % den != 0) && ((num < 0) != (den < 0)))
        --q;
    return q;
}

// [start, start + length) along one axis.
std::pair<std::int64_t, std::int64_t> patch_extent(std::int64_t cell, std::int64_t cells,
                                                   std::int64_t extent, std::int64_t patch)
{
    if (patch >= extent)
        return {0, extent};
    // floor(center - patch/2 + 1/2) with center = (2*cell + 1) * extent / (2 * cells)
    const std::int64_t num = (2 * cell + 1) * extent - patch * cells + cells;
    std::int64_t start = floor_div(num, 2 * cells);
    start = std::clamp<std::int64_t>(start, 0, extent - patch);
    return {start, start + patch};
}

} // namespace

PatchBox resolve_patch_box(FeatureLocation loc, FeatureGrid grid, ImageSize image,
                           std::int64_t patch_size)
{
    assert(patch_size >= 1);
    assert(loc.row >= 0 && loc.row < grid.height && loc.col >= 0 && loc.col < grid.width);
    auto [x0, x1] = patch_extent(loc.col, grid.width, image.width, patch_size);
    auto [y0, y1] = patch_extent(loc.row, grid.height, image.height, patch_size);
    return PatchBox{x0, y0, x1, y1};
}

bool contains_point(const Box& box, Point p)
{
    return static_cast<double>(box.x_min) <= p.x && p.x < static_cast<double>(box.x_max) &&
           static_cast<double>(box.y_min) <= p.y && p.y < static_cast<double>(box.y_max);
}

Point roi_center(const Box& bbox)
{
    return Point{static_cast<double>(bbox.x_min + bbox.x_max) / 2.0,
                 static_cast<double>(bbox.y_min + bbox.y_max) / 2.0};
}

std::int64_t union_area(std::span<const Box> boxes)
{
    std::vector<std::int64_t> xs;
    xs.reserve(boxes.size() * 2);
    for (const Box& b : boxes) {
        if (b.empty())
            continue;
        xs.push_back(b.x_min);
        xs.push_back(b.x_max);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    std::int64_t total = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const std::int64_t left = xs[i];
        const std::int64_t right = xs[i + 1];
        spans.clear();
        for (const Box& b : boxes) {
            if (!b.empty() && b.x_min <= left && right <= b.x_max)
                spans.emplace_back(b.y_min, b.y_max);
        }
        if (spans.empty())
            continue;
        std::sort(spans.begin(), spans.end());
        std::int64_t covered = 0;
        std::int64_t lo = spans.front().first;
        std::int64_t hi = spans.front().second;
        for (const auto& [y0, y1] : spans) {
            if (y0 > hi) {
                covered += hi - lo;
                lo = y0;
                hi = y1;
            } else {
                hi = std::max(hi, y1);
            }
        }
        covered += hi - lo;
        total += covered * (right - left);
    }
    return total;
}

Overlap region_overlap(std::span<const Box> a, std::span<const Box> b)
{
    std::vector<Box> both(a.begin(), a.end());
    both.insert(both.end(), b.begin(), b.end());
    Overlap o;
    o.area_a = union_area(a);
    o.area_b = union_area(b);
    o.union_ = union_area(both);
    o.intersection = o.area_a + o.area_b - o.union_;
    return o;
}

double iou(const Overlap& o)
{
    if (o.union_ == 0)
        return 0.0;
    return static_cast<double>(o.intersection) / static_cast<double>(o.union_);
}

double dsc(const Overlap& o)
{
    const std::int64_t denom = o.area_a + o.area_b;
    if (denom == 0)
        return 0.0;
    return 2.0 * static_cast<double>(o.intersection) / static_cast<double>(denom);
}

double iou(std::span<const Box> a, std::span<const Box> b) { return iou(region_overlap(a, b)); }

double dsc(std::span<const Box> a, std::span<const Box> b) { return dsc(region_overlap(a, b)); }

} // namespace pefcoh
