#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pefcoh {

/// Axis-aligned pixel rectangle, half-open: (x, y) is inside iff
/// x_min <= x < x_max and y_min <= y < y_max.
struct Box {
    std::int64_t x_min = 0;
    std::int64_t y_min = 0;
    std::int64_t x_max = 0;
    std::int64_t y_max = 0;

    std::int64_t width() const { return x_max - x_min; }
    std::int64_t height() const { return y_max - y_min; }
    std::int64_t area() const { return width() * height(); }
    bool empty() const { return x_min >= x_max || y_min >= y_max; }

    bool operator==(const Box&) const = default;
};

using PatchBox = Box;

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

struct FeatureLocation {
    int row = 0;
    int col = 0;
};

struct FeatureGrid {
    int height = 0;
    int width = 0;
};

struct ImageSize {
    std::int64_t width = 0;
    std::int64_t height = 0;
};

/// Fixed-size patch around the image-space center of a feature-map cell.
///
/// The cell center is ((col + 0.5) * W / fw, (row + 0.5) * H / fh). The box
/// start is that center minus half the patch, rounded half up, computed in
/// integer arithmetic. Boxes that overhang the image are translated back
/// inside; a patch larger than the image spans the whole dimension.
PatchBox resolve_patch_box(FeatureLocation loc, FeatureGrid grid, ImageSize image,
                           std::int64_t patch_size);

bool contains_point(const Box& box, Point p);

Point roi_center(const Box& bbox);

// Exact area of the union of boxes (coordinate-compressed sweep).
std::int64_t union_area(std::span<const Box> boxes);

struct Overlap {
    std::int64_t area_a = 0;       // area of union(a)
    std::int64_t area_b = 0;       // area of union(b)
    std::int64_t intersection = 0; // area of union(a) ∩ union(b)
    std::int64_t union_ = 0;       // area of union(a) ∪ union(b)
};

Overlap region_overlap(std::span<const Box> a, std::span<const Box> b);

/// Intersection over union of two region sets; 0 when both are empty.
double iou(std::span<const Box> a, std::span<const Box> b);

/// Dice coefficient of two region sets; 0 when both are empty.
double dsc(std::span<const Box> a, std::span<const Box> b);

double iou(const Overlap& o);
double dsc(const Overlap& o);

} // namespace pefcoh
