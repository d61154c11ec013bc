#pragma once

#include <lexbeam/error.hpp>
#include <lexbeam/vocabulary.hpp>

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lexbeam {

using StateId = std::uint32_t;
using GroupMask = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

/// Widest constraint set the dense mask lattice supports.
inline constexpr std::size_t max_constraint_groups = 16;

/// How a phrase in progress reacts to a token that does not extend it.
enum class PhraseMatchMode {
    /// Follow the longest suffix that is still a phrase prefix (KMP /
    /// Aho-Corasick failure links). Recognises every contiguous occurrence.
    failure_links,
    /// Drop all progress and return to the mask's base state without
    /// re-reading the token. Misses occurrences such as `a a b` for `a b`.
    reset_on_mismatch,
};

/// One lexical constraint: satisfied once any alternative appears
/// contiguously in the output.
struct ConstraintGroup {
    std::vector<TokenSequence> alternatives;
    std::string label;

    bool operator==(const ConstraintGroup&) const = default;
};

/// A constraint group spelled with surface tokens, before vocabulary lookup.
struct PhraseGroup {
    std::vector<std::vector<std::string>> alternatives;
    std::string label;
};

inline ConstraintGroup resolve(const PhraseGroup& group, const Vocabulary& vocab)
{
    ConstraintGroup out;
    out.label = group.label;
    out.alternatives.reserve(group.alternatives.size());
    for (const auto& alt : group.alternatives) {
        out.alternatives.push_back(vocab.encode(alt));
    }
    return out;
}

inline std::vector<ConstraintGroup> resolve(const std::vector<PhraseGroup>& groups, const Vocabulary& vocab)
{
    std::vector<ConstraintGroup> out;
    out.reserve(groups.size());
    for (const auto& g : groups) {
        out.push_back(resolve(g, vocab));
    }
    return out;
}

class ConstraintFsm;

ConstraintFsm compile(const std::vector<ConstraintGroup>& groups,
                      std::size_t min_satisfied,
                      const Vocabulary& vocab,
                      PhraseMatchMode mode = PhraseMatchMode::failure_links);

/// Compiled constraint automaton. States 0 .. 2^n - 1 are the base states,
/// with state id equal to the satisfaction mask; phrase-progress states
/// follow, ordered by (mask, matched prefix). Immutable once built.
class ConstraintFsm {
public:
    std::size_t state_count() const noexcept { return masks_.size(); }
    std::size_t vocab_size() const noexcept { return vocab_size_; }
    std::size_t group_count() const noexcept { return group_count_; }
    std::size_t min_satisfied() const noexcept { return min_satisfied_; }
    PhraseMatchMode mode() const noexcept { return mode_; }
    static constexpr StateId initial_state() noexcept { return 0; }

    StateId step(StateId state, TokenId token) const
    {
        check_state(state);
        if (token >= vocab_size_) {
            fail(ErrorCode::OutOfRange, "token id " + std::to_string(token) + " out of range");
        }
        return step_unchecked(state, token);
    }

    StateId step_unchecked(StateId state, TokenId token) const noexcept
    {
        return table_[static_cast<std::size_t>(state) * vocab_size_ + token];
    }

    bool accepting(StateId state) const
    {
        return satisfied_count(state) >= min_satisfied_;
    }

    std::size_t satisfied_count(StateId state) const
    {
        return static_cast<std::size_t>(std::popcount(satisfied_mask(state)));
    }

    GroupMask satisfied_mask(StateId state) const
    {
        check_state(state);
        return masks_[state];
    }

    /// Tokens of the phrase prefix matched so far (empty for base states).
    std::span<const TokenId> progress(StateId state) const
    {
        check_state(state);
        return progress_[state];
    }

    StateId run(std::span<const TokenId> tokens, StateId from = initial_state()) const
    {
        StateId state = from;
        for (auto token : tokens) {
            state = step(state, token);
        }
        return state;
    }

    std::span<const StateId> row(StateId state) const
    {
        check_state(state);
        return {table_.data() + static_cast<std::size_t>(state) * vocab_size_, vocab_size_};
    }

    const std::vector<ConstraintGroup>& groups() const noexcept { return groups_; }

    bool operator==(const ConstraintFsm&) const = default;

private:
    friend ConstraintFsm compile(const std::vector<ConstraintGroup>&, std::size_t, const Vocabulary&,
                                 PhraseMatchMode);

    void check_state(StateId state) const
    {
        if (state >= masks_.size()) {
            fail(ErrorCode::OutOfRange, "state " + std::to_string(state) + " out of range");
        }
    }

    std::size_t vocab_size_ = 0;
    std::size_t group_count_ = 0;
    std::size_t min_satisfied_ = 0;
    PhraseMatchMode mode_ = PhraseMatchMode::failure_links;
    std::vector<GroupMask> masks_;
    std::vector<TokenSequence> progress_;
    std::vector<StateId> table_;
    std::vector<ConstraintGroup> groups_;
};

namespace detail {

// Alternatives still able to fire in one mask state.
struct MaskPatterns {
    std::map<TokenSequence, GroupMask> complete;
    std::map<TokenSequence, StateId> prefixes;
};

inline TokenSequence suffix(const TokenSequence& seq, std::size_t from)
{
    return {seq.begin() + static_cast<std::ptrdiff_t>(from), seq.end()};
}

} // namespace detail

inline ConstraintFsm compile(const std::vector<ConstraintGroup>& groups,
                             std::size_t min_satisfied,
                             const Vocabulary& vocab,
                             PhraseMatchMode mode)
{
    const std::size_t n = groups.size();
    if (n > max_constraint_groups) {
        fail(ErrorCode::TooManyGroups, std::to_string(n) + " constraint groups exceed the limit of " +
                                           std::to_string(max_constraint_groups));
    }
    if (min_satisfied > n) {
        fail(ErrorCode::InvalidQuota, "min_satisfied " + std::to_string(min_satisfied) + " exceeds " +
                                          std::to_string(n) + " groups");
    }

    std::vector<ConstraintGroup> normalized;
    normalized.reserve(n);
    std::set<TokenId> alphabet;
    for (const auto& group : groups) {
        if (group.alternatives.empty()) {
            fail(ErrorCode::EmptyGroup, "constraint group '" + group.label + "' has no alternatives");
        }
        std::set<TokenSequence> unique;
        for (const auto& alt : group.alternatives) {
            if (alt.empty()) {
                fail(ErrorCode::EmptyAlternative, "constraint group '" + group.label + "' has an empty alternative");
            }
            for (auto token : alt) {
                if (token >= vocab.size() || Vocabulary::is_delimiter(token)) {
                    fail(ErrorCode::UnknownToken, "constraint group '" + group.label + "' references token id " +
                                                      std::to_string(token));
                }
                alphabet.insert(token);
            }
            unique.insert(alt);
        }
        normalized.push_back({{unique.begin(), unique.end()}, group.label});
    }

    const std::size_t mask_count = std::size_t{1} << n;
    std::vector<detail::MaskPatterns> patterns(mask_count);
    for (std::size_t m = 0; m < mask_count; ++m) {
        for (std::size_t g = 0; g < n; ++g) {
            const GroupMask bit = GroupMask{1} << g;
            if ((m & bit) != 0) {
                continue;
            }
            for (const auto& alt : normalized[g].alternatives) {
                patterns[m].complete[alt] |= bit;
                for (std::size_t len = 1; len < alt.size(); ++len) {
                    patterns[m].prefixes.emplace(TokenSequence(alt.begin(), alt.begin() + static_cast<std::ptrdiff_t>(len)), 0);
                }
            }
        }
    }

    ConstraintFsm fsm;
    fsm.vocab_size_ = vocab.size();
    fsm.group_count_ = n;
    fsm.min_satisfied_ = min_satisfied;
    fsm.mode_ = mode;
    fsm.groups_ = normalized;
    for (std::size_t m = 0; m < mask_count; ++m) {
        fsm.masks_.push_back(static_cast<GroupMask>(m));
        fsm.progress_.emplace_back();
    }
    for (std::size_t m = 0; m < mask_count; ++m) {
        for (auto& [prefix, id] : patterns[m].prefixes) {
            id = static_cast<StateId>(fsm.masks_.size());
            fsm.masks_.push_back(static_cast<GroupMask>(m));
            fsm.progress_.push_back(prefix);
        }
    }

    const std::size_t states = fsm.masks_.size();
    const std::size_t v = vocab.size();
    fsm.table_.assign(states * v, 0);

    auto target = [&](GroupMask mask, const TokenSequence& seq) -> StateId {
        const auto& prefixes = patterns[mask].prefixes;
        auto it = prefixes.find(seq);
        return it == prefixes.end() ? static_cast<StateId>(mask) : it->second;
    };

    for (StateId s = 0; s < states; ++s) {
        const GroupMask mask = fsm.masks_[s];
        StateId* row = fsm.table_.data() + static_cast<std::size_t>(s) * v;
        // Tokens outside every alternative can neither extend nor start a phrase.
        std::fill(row, row + v, static_cast<StateId>(mask));

        for (auto token : alphabet) {
            TokenSequence word = fsm.progress_[s];
            word.push_back(token);
            const auto& here = patterns[mask];

            if (mode == PhraseMatchMode::failure_links) {
                GroupMask matched = 0;
                for (std::size_t i = 0; i < word.size(); ++i) {
                    auto it = here.complete.find(detail::suffix(word, i));
                    if (it != here.complete.end()) {
                        matched |= it->second;
                    }
                }
                const GroupMask next_mask = mask | matched;
                StateId next = static_cast<StateId>(next_mask);
                for (std::size_t i = 0; i < word.size(); ++i) {
                    StateId candidate = target(next_mask, detail::suffix(word, i));
                    if (candidate != next_mask) {
                        next = candidate;
                        break;
                    }
                }
                row[token] = next;
            } else {
                if (auto it = here.complete.find(word); it != here.complete.end()) {
                    row[token] = target(mask | it->second, word);
                } else if (here.prefixes.count(word) != 0) {
                    row[token] = target(mask, word);
                } else {
                    row[token] = static_cast<StateId>(mask);
                }
            }
        }
    }
    return fsm;
}

} // namespace lexbeam
