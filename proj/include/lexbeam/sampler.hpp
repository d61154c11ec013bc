#pragma once

#include <lexbeam/error.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace lexbeam {

enum class Rotation { zero, nonzero, unknown };

struct ImageRecord {
    std::string image_id;
    std::set<std::string> classes;  ///< unique classes present
    Rotation rotation = Rotation::unknown;

    bool operator==(const ImageRecord&) const = default;
};

/// Images with more unique classes than this skip sampling entirely.
inline constexpr std::size_t auto_include_above = 6;
inline constexpr std::size_t min_pool_classes = 2;
inline constexpr std::size_t pool_count = auto_include_above - min_pool_classes + 1;

struct Exclusion {
    std::vector<ImageRecord> eligible;
    std::vector<ImageRecord> auto_include;
};

/// Drops images whose rotation is not known to be zero and images showing a
/// single class; routes images with more than six classes to auto-include.
inline Exclusion exclude(const std::vector<ImageRecord>& images)
{
    Exclusion out;
    for (const auto& img : images) {
        if (img.rotation != Rotation::zero || img.classes.size() < min_pool_classes) {
            continue;
        }
        (img.classes.size() > auto_include_above ? out.auto_include : out.eligible).push_back(img);
    }
    return out;
}

using ClassCounts = std::map<std::string, std::size_t>;

/// Shannon entropy (nats) of a presence-count distribution.
inline double class_entropy(const ClassCounts& counts)
{
    // Summed in count order: equal distributions give bitwise-equal results.
    std::vector<std::size_t> sorted;
    sorted.reserve(counts.size());
    double total = 0.0;
    for (const auto& [name, c] : counts) {
        if (c != 0) {
            sorted.push_back(c);
            total += static_cast<double>(c);
        }
    }
    if (total == 0.0) {
        return 0.0;
    }
    std::sort(sorted.begin(), sorted.end());
    double h = 0.0;
    for (std::size_t c : sorted) {
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

inline void add_presence(ClassCounts& counts, const std::set<std::string>& classes)
{
    for (const auto& c : classes) {
        ++counts[c];
    }
}

/// Entropy the running counts would have after adding `classes`.
inline double entropy_with(ClassCounts counts, const std::set<std::string>& classes)
{
    add_presence(counts, classes);
    return class_entropy(counts);
}

struct SelectionStep {
    std::size_t pool_classes;  ///< unique-class count of the pool drawn from
    std::vector<std::string> candidates;
    std::vector<double> entropies;  ///< post-addition entropy per candidate
    std::string chosen;
};

struct SelectionState {
    std::vector<std::string> selected;
    ClassCounts class_counts;
    std::uint64_t rng_seed = 0;
    std::vector<SelectionStep> steps;
};

namespace detail {

// Unbiased draw in [0, bound) by rejection.
inline std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound)
{
    const std::uint64_t reject_below = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = rng();
        if (x >= reject_below) {
            return x % bound;
        }
    }
}

} // namespace detail

/// Greedy entropy-maximising selection. Starting from `auto_include`, pools
/// of 2..6-class images are visited round-robin; each turn draws
/// `n_candidates` images without replacement and keeps the one that leaves
/// the class distribution with the highest entropy (ties to the smallest
/// image id). Unchosen candidates stay in their pool.
inline SelectionState sample(const std::vector<ImageRecord>& eligible, const std::vector<ImageRecord>& auto_include,
                             std::size_t target_count, std::size_t n_candidates, std::uint64_t seed)
{
    if (n_candidates == 0) {
        fail(ErrorCode::InvalidCandidates, "n_candidates must be at least 1");
    }
    if (target_count < auto_include.size()) {
        fail(ErrorCode::TargetTooSmall, "target " + std::to_string(target_count) + " is below the " +
                                            std::to_string(auto_include.size()) + " auto-included images");
    }

    SelectionState state;
    state.rng_seed = seed;
    for (const auto& img : auto_include) {
        state.selected.push_back(img.image_id);
        add_presence(state.class_counts, img.classes);
    }

    std::array<std::vector<const ImageRecord*>, pool_count> pools;
    for (const auto& img : eligible) {
        const std::size_t k = img.classes.size();
        if (k < min_pool_classes || k > auto_include_above) {
            fail(ErrorCode::InvalidCandidates,
                 "eligible image '" + img.image_id + "' has " + std::to_string(k) + " classes; pools cover 2-6");
        }
        pools[k - min_pool_classes].push_back(&img);
    }
    const bool all_empty = std::all_of(pools.begin(), pools.end(), [](const auto& p) { return p.empty(); });
    if (all_empty && target_count > state.selected.size()) {
        fail(ErrorCode::EmptyPools, "no eligible images to sample from");
    }

    std::mt19937_64 rng(seed);
    std::size_t turn = 0;
    while (state.selected.size() < target_count) {
        if (std::all_of(pools.begin(), pools.end(), [](const auto& p) { return p.empty(); })) {
            break;
        }
        auto& pool = pools[turn % pool_count];
        const std::size_t pool_classes = turn % pool_count + min_pool_classes;
        ++turn;
        if (pool.empty()) {
            continue;
        }

        const std::size_t draws = std::min(n_candidates, pool.size());
        for (std::size_t i = 0; i < draws; ++i) {
            const auto j = i + static_cast<std::size_t>(detail::draw_below(rng, pool.size() - i));
            std::swap(pool[i], pool[j]);
        }

        SelectionStep step;
        step.pool_classes = pool_classes;
        std::size_t best = 0;
        for (std::size_t i = 0; i < draws; ++i) {
            step.candidates.push_back(pool[i]->image_id);
            step.entropies.push_back(entropy_with(state.class_counts, pool[i]->classes));
            if (i > 0 && (step.entropies[i] > step.entropies[best] ||
                          (step.entropies[i] == step.entropies[best] && step.candidates[i] < step.candidates[best]))) {
                best = i;
            }
        }
        step.chosen = step.candidates[best];
        state.selected.push_back(step.chosen);
        add_presence(state.class_counts, pool[best]->classes);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
        state.steps.push_back(std::move(step));
    }
    return state;
}

enum class Domain { in_domain, near_domain, out_of_domain };

constexpr std::string_view to_string(Domain d) noexcept
{
    switch (d) {
    case Domain::in_domain: return "in-domain";
    case Domain::near_domain: return "near-domain";
    case Domain::out_of_domain: return "out-of-domain";
    }
    return "unknown";
}

/// Class partition relative to the caption training data. Classes listed in
/// none of the three sets count as out-of-domain.
struct DomainSpec {
    std::set<std::string> in_domain;
    std::set<std::string> out_of_domain;
    std::set<std::string> ignored;

    void validate() const
    {
        auto overlaps = [](const std::set<std::string>& a, const std::set<std::string>& b) {
            return std::any_of(a.begin(), a.end(), [&](const std::string& c) { return b.count(c) != 0; });
        };
        if (overlaps(in_domain, out_of_domain) || overlaps(in_domain, ignored) || overlaps(out_of_domain, ignored)) {
            fail(ErrorCode::OverlappingDomains, "in-domain, out-of-domain and ignored class sets must be disjoint");
        }
    }
};

inline Domain classify_domain(const ImageRecord& image, const DomainSpec& spec)
{
    spec.validate();
    std::size_t inside = 0;
    std::size_t outside = 0;
    for (const auto& c : image.classes) {
        if (spec.ignored.count(c) != 0) {
            continue;
        }
        (spec.in_domain.count(c) != 0 ? inside : outside) += 1;
    }
    if (inside + outside == 0) {
        fail(ErrorCode::AllClassesIgnored, "image '" + image.image_id + "' has no classes left after ignoring");
    }
    if (outside == 0) {
        return Domain::in_domain;
    }
    return inside == 0 ? Domain::out_of_domain : Domain::near_domain;
}

/// Lowercase, punctuation to spaces, split on whitespace.
inline std::vector<std::string> tokenize_caption(std::string_view text)
{
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isspace(c) || std::ispunct(c)) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

/// Number of distinct n-grams for every n in 1..n_max across all captions.
inline std::map<std::size_t, std::size_t> ngram_stats(const std::vector<std::vector<std::string>>& captions,
                                                      std::size_t n_max = 4)
{
    if (n_max == 0) {
        fail(ErrorCode::InvalidConfig, "n_max must be at least 1");
    }
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t n = 1; n <= n_max; ++n) {
        std::unordered_set<std::string> seen;
        for (const auto& caption : captions) {
            for (std::size_t i = 0; i + n <= caption.size(); ++i) {
                std::string key;
                for (std::size_t j = i; j < i + n; ++j) {
                    key += caption[j];
                    key += '\x1f';
                }
                seen.insert(std::move(key));
            }
        }
        counts[n] = seen.size();
    }
    return counts;
}

} // namespace lexbeam
