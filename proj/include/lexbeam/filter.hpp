#pragma once

#include <lexbeam/error.hpp>
#include <lexbeam/fsm.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lexbeam {

struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool valid() const noexcept
    {
        return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max) &&
               x_min < x_max && y_min < y_max;
    }

    double area() const noexcept { return (x_max - x_min) * (y_max - y_min); }

    bool operator==(const BoundingBox&) const = default;
};

struct Detection {
    std::string class_name;
    double confidence = 0.0;
    BoundingBox box;

    bool operator==(const Detection&) const = default;
};

inline void validate(const BoundingBox& box)
{
    if (!box.valid()) {
        fail(ErrorCode::DegenerateBox, "bounding box [" + std::to_string(box.x_min) + ", " + std::to_string(box.y_min) +
                                           ", " + std::to_string(box.x_max) + ", " + std::to_string(box.y_max) +
                                           "] is degenerate");
    }
}

inline void validate(const Detection& det)
{
    validate(det.box);
    if (!(det.confidence >= 0.0 && det.confidence <= 1.0)) {
        fail(ErrorCode::InvalidDetection,
             "detection '" + det.class_name + "' has confidence " + std::to_string(det.confidence) + " outside [0, 1]");
    }
}

/// Intersection over union of two axis-aligned boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b)
{
    validate(a);
    validate(b);
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) {
        return 0.0;
    }
    const double inter = w * h;
    return inter / (a.area() + b.area() - inter);
}

struct ClassEntry {
    std::string name;
    std::optional<std::string> parent;
    std::vector<std::vector<std::string>> forms;
};

/// Object classes with their parent links and the surface word forms each
/// class expands to when used as a constraint.
class ClassHierarchy {
public:
    ClassHierarchy() = default;

    explicit ClassHierarchy(const std::vector<ClassEntry>& entries)
    {
        for (const auto& e : entries) {
            if (!classes_.emplace(e.name, Node{e.parent, e.forms, 0}).second) {
                fail(ErrorCode::ParseError, "class '" + e.name + "' is listed twice in the hierarchy");
            }
            if (e.forms.empty() || std::any_of(e.forms.begin(), e.forms.end(), [](const auto& f) { return f.empty(); })) {
                fail(ErrorCode::MissingWordForms, "class '" + e.name + "' needs at least one non-empty word form");
            }
        }
        for (auto& [name, node] : classes_) {
            if (node.parent && classes_.count(*node.parent) == 0) {
                fail(ErrorCode::UnknownClass, "class '" + name + "' has unknown parent '" + *node.parent + "'");
            }
        }
        for (auto& [name, node] : classes_) {
            std::size_t depth = 0;
            const Node* cursor = &node;
            while (cursor->parent) {
                if (++depth > classes_.size()) {
                    fail(ErrorCode::CyclicHierarchy, "class hierarchy has a cycle through '" + name + "'");
                }
                cursor = &classes_.at(*cursor->parent);
            }
            node.depth = depth;
        }
    }

    bool contains(std::string_view name) const { return classes_.count(std::string(name)) != 0; }
    std::size_t size() const noexcept { return classes_.size(); }

    std::size_t depth(std::string_view name) const { return node(name).depth; }

    const std::optional<std::string>& parent(std::string_view name) const { return node(name).parent; }

    const std::vector<std::vector<std::string>>& forms(std::string_view name) const { return node(name).forms; }

    /// True when `ancestor` lies strictly above `descendant`.
    bool is_strict_ancestor(std::string_view ancestor, std::string_view descendant) const
    {
        node(ancestor);
        const auto* p = &node(descendant).parent;
        while (*p) {
            if (**p == ancestor) {
                return true;
            }
            p = &node(**p).parent;
        }
        return false;
    }

private:
    struct Node {
        std::optional<std::string> parent;
        std::vector<std::vector<std::string>> forms;
        std::size_t depth;
    };

    const Node& node(std::string_view name) const
    {
        auto it = classes_.find(std::string(name));
        if (it == classes_.end()) {
            fail(ErrorCode::UnknownClass, "class '" + std::string(name) + "' is not in the hierarchy");
        }
        return it->second;
    }

    std::map<std::string, Node> classes_;
};

/// Class names never used as constraints. Matching ignores ASCII case, so
/// "Human eye" and "Human Eye" are the same class.
class Blacklist {
public:
    Blacklist() = default;

    explicit Blacklist(const std::vector<std::string>& names)
    {
        for (const auto& n : names) {
            names_.insert(fold(n));
        }
    }

    /// Part classes plus classes too rare or too broad to caption well.
    static Blacklist defaults()
    {
        return Blacklist(default_names());
    }

    static std::vector<std::string> default_names()
    {
        return {
            // parts
            "Human Eye", "Human Head", "Human Face", "Human Mouth", "Human Ear", "Human Nose", "Human Hair",
            "Human Hand", "Human Foot", "Human Arm", "Human Leg", "Human Beard", "Human Body",
            "Vehicle Registration Plate", "Wheel", "Seat Belt", "Tire", "Bicycle Wheel", "Auto Part", "Door Handle",
            "Skull",
            // too rare or too broad
            "Clothing", "Footwear", "Fashion Accessory", "Sports Equipment", "Hiking Equipment", "Mammal",
            "Personal Care", "Bathroom Accessory", "Plumbing Fixture", "Tree", "Building", "Plant", "Land Vehicle",
            "Person", "Man", "Woman", "Boy", "Girl",
        };
    }

    bool contains(std::string_view name) const { return names_.count(fold(name)) != 0; }
    std::size_t size() const noexcept { return names_.size(); }

private:
    static std::string fold(std::string_view s)
    {
        std::string out(s);
        std::transform(out.begin(), out.end(), out.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return out;
    }

    std::set<std::string> names_;
};

/// Which filtering stages run; mirrors the ablation rows "w/o class",
/// "w/o overlap" and "w/o both".
enum class FilterMode {
    full,
    no_class,    ///< skip the blacklist
    no_overlap,  ///< skip overlap suppression
    none,
};

inline constexpr double default_iou_threshold = 0.85;
inline constexpr std::size_t default_top_k = 3;

/// Removes the ancestor of every overlapping (iou >= threshold) pair in
/// which one class is a strict ancestor of the other. Pairs are resolved by
/// descending iou, then ascending confidence of the detection removed, and
/// re-examined after every removal. Survivors keep their input order.
inline std::vector<Detection> suppress_overlaps(const std::vector<Detection>& dets, const ClassHierarchy& hier,
                                                double iou_threshold = default_iou_threshold)
{
    const std::size_t n = dets.size();
    for (const auto& d : dets) {
        validate(d);
        if (!hier.contains(d.class_name)) {
            fail(ErrorCode::UnknownClass, "class '" + d.class_name + "' is not in the hierarchy");
        }
    }

    struct Pair {
        double overlap;
        std::size_t removed;
        std::size_t kept;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double overlap = iou(dets[i].box, dets[j].box);
            if (overlap < iou_threshold) {
                continue;
            }
            if (hier.is_strict_ancestor(dets[i].class_name, dets[j].class_name)) {
                pairs.push_back({overlap, i, j});
            } else if (hier.is_strict_ancestor(dets[j].class_name, dets[i].class_name)) {
                pairs.push_back({overlap, j, i});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
        if (a.overlap != b.overlap) {
            return a.overlap > b.overlap;
        }
        if (dets[a.removed].confidence != dets[b.removed].confidence) {
            return dets[a.removed].confidence < dets[b.removed].confidence;
        }
        return std::pair(a.removed, a.kept) < std::pair(b.removed, b.kept);
    });

    // Walking the sorted list once and skipping pairs with a removed member is
    // the same as re-picking the best live pair after each removal.
    std::vector<bool> alive(n, true);
    for (const auto& p : pairs) {
        if (alive[p.removed] && alive[p.kept]) {
            alive[p.removed] = false;
        }
    }
    std::vector<Detection> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (alive[i]) {
            out.push_back(dets[i]);
        }
    }
    return out;
}

struct RankedClass {
    std::string class_name;
    double confidence;

    bool operator==(const RankedClass&) const = default;
};

struct FilterResult {
    std::vector<PhraseGroup> groups;
    /// Detections dropped for reasons other than filtering, e.g. unknown classes.
    std::vector<std::string> warnings;
    std::vector<Detection> after_blacklist;
    std::vector<Detection> after_overlap;
    std::vector<RankedClass> ranked;
};

/// Detections to at most `top_k` constraint groups: blacklist, overlap
/// suppression, per-class max confidence, confidence ranking, then word-form
/// expansion.
inline FilterResult filter_constraints(const std::vector<Detection>& dets, const ClassHierarchy& hier,
                                       const Blacklist& blacklist, FilterMode mode = FilterMode::full,
                                       std::size_t top_k = default_top_k,
                                       double iou_threshold = default_iou_threshold)
{
    FilterResult result;
    std::vector<Detection> known;
    for (const auto& d : dets) {
        validate(d);
        if (hier.contains(d.class_name)) {
            known.push_back(d);
        } else {
            result.warnings.push_back("UnknownClass: '" + d.class_name + "' is not in the hierarchy; detection dropped");
        }
    }

    const bool use_blacklist = mode == FilterMode::full || mode == FilterMode::no_overlap;
    const bool use_overlap = mode == FilterMode::full || mode == FilterMode::no_class;

    for (auto& d : known) {
        if (!use_blacklist || !blacklist.contains(d.class_name)) {
            result.after_blacklist.push_back(d);
        }
    }
    result.after_overlap =
        use_overlap ? suppress_overlaps(result.after_blacklist, hier, iou_threshold) : result.after_blacklist;

    std::map<std::string, double> best;
    for (const auto& d : result.after_overlap) {
        auto [it, inserted] = best.emplace(d.class_name, d.confidence);
        if (!inserted) {
            it->second = std::max(it->second, d.confidence);
        }
    }
    for (const auto& [name, conf] : best) {
        result.ranked.push_back({name, conf});
    }
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const RankedClass& a, const RankedClass& b) { return a.confidence > b.confidence; });
    if (result.ranked.size() > top_k) {
        result.ranked.resize(top_k);
    }
    for (const auto& r : result.ranked) {
        result.groups.push_back(PhraseGroup{hier.forms(r.class_name), r.class_name});
    }
    return result;
}

} // namespace lexbeam
