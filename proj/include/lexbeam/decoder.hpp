#pragma once

#include <lexbeam/error.hpp>
#include <lexbeam/fsm.hpp>
#include <lexbeam/vocabulary.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lexbeam {

/// Anything that maps a token prefix (after BOS) to natural-log
/// probabilities over the whole vocabulary.
template <class S>
concept Scorer = requires(const S& scorer, std::span<const TokenId> prefix) {
    { scorer.vocab_size() } -> std::convertible_to<std::size_t>;
    { scorer.next_logprobs(prefix) } -> std::convertible_to<std::vector<double>>;
};

struct DecodeConfig {
    std::size_t beam_width = 5;  ///< hypotheses kept per FSM state
    std::size_t max_len = 16;    ///< caption tokens, EOS excluded
    bool min_satisfied_fallback = true;
    bool length_normalize = false;
};

struct Hypothesis {
    TokenSequence tokens;
    double logprob = 0.0;
    StateId fsm_state = 0;
    bool complete = false;

    bool operator==(const Hypothesis&) const = default;
};

struct DecodeResult {
    TokenSequence caption;
    double logprob = 0.0;
    std::size_t satisfied_count = 0;
    /// Completed hypotheses per FSM state, best first.
    std::vector<std::vector<Hypothesis>> per_state_finalists;

    bool operator==(const DecodeResult&) const = default;
};

/// Strict total order used everywhere a beam is ranked: higher log-probability
/// first, ties broken by lexicographic token-id order.
inline bool ranks_before(const Hypothesis& a, const Hypothesis& b) noexcept
{
    if (a.logprob != b.logprob) {
        return a.logprob > b.logprob;
    }
    return a.tokens < b.tokens;
}

namespace detail {

inline void validate(const DecodeConfig& cfg)
{
    if (cfg.beam_width == 0) {
        fail(ErrorCode::InvalidConfig, "beam_width must be at least 1");
    }
    if (cfg.max_len == 0) {
        fail(ErrorCode::InvalidConfig, "max_len must be at least 1");
    }
}

// A scored one-token extension of a live hypothesis; materialised only if it
// survives pruning.
struct Extension {
    double logprob;
    const Hypothesis* parent;
    TokenId token;
};

inline bool extension_before(const Extension& a, const Extension& b) noexcept
{
    if (a.logprob != b.logprob) {
        return a.logprob > b.logprob;
    }
    // Live hypotheses at one step all have the same length.
    if (a.parent->tokens != b.parent->tokens) {
        return a.parent->tokens < b.parent->tokens;
    }
    return a.token < b.token;
}

/// Bounded best-k container. Heap top is the current worst entry.
template <class T, class Before>
class TopK {
public:
    TopK(std::size_t k, Before before) : k_(k), before_(before) {}

    void offer(T item)
    {
        if (items_.size() < k_) {
            items_.push_back(std::move(item));
            std::push_heap(items_.begin(), items_.end(), before_);
        } else if (before_(item, items_.front())) {
            std::pop_heap(items_.begin(), items_.end(), before_);
            items_.back() = std::move(item);
            std::push_heap(items_.begin(), items_.end(), before_);
        }
    }

    /// Would `item` be kept?
    bool admits(const T& item) const
    {
        return items_.size() < k_ || before_(item, items_.front());
    }

    std::vector<T> sorted() &&
    {
        std::sort(items_.begin(), items_.end(), before_);
        return std::move(items_);
    }

private:
    std::size_t k_;
    Before before_;
    std::vector<T> items_;
};

template <class Before>
TopK(std::size_t, Before) -> TopK<Extension, Before>;

template <Scorer S>
std::vector<double> checked_logprobs(const S& scorer, std::span<const TokenId> prefix, std::size_t vocab_size)
{
    std::vector<double> logprobs = scorer.next_logprobs(prefix);
    if (logprobs.size() != vocab_size) {
        fail(ErrorCode::VocabMismatch, "scorer returned " + std::to_string(logprobs.size()) +
                                           " log-probabilities for a vocabulary of " + std::to_string(vocab_size));
    }
    return logprobs;
}

inline double selection_score(const Hypothesis& h, bool length_normalize)
{
    return length_normalize ? h.logprob / static_cast<double>(h.tokens.size() + 1) : h.logprob;
}

inline bool selects_before(const Hypothesis& a, const Hypothesis& b, bool length_normalize)
{
    const double sa = selection_score(a, length_normalize);
    const double sb = selection_score(b, length_normalize);
    if (sa != sb) {
        return sa > sb;
    }
    return ranks_before(a, b);
}

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

} // namespace detail

/// Constrained beam search with one beam per FSM state. Every live hypothesis
/// is extended by every token; EOS moves it to its state's completed list.
/// The result is the best completed hypothesis whose state satisfies the
/// FSM's quota, relaxing the quota one group at a time when fallback is on.
template <Scorer S>
DecodeResult decode(const S& scorer, const ConstraintFsm& fsm, const DecodeConfig& cfg)
{
    detail::validate(cfg);
    const std::size_t vocab_size = fsm.vocab_size();
    if (static_cast<std::size_t>(scorer.vocab_size()) != vocab_size) {
        fail(ErrorCode::VocabMismatch, "scorer vocabulary has " + std::to_string(scorer.vocab_size()) +
                                           " tokens, FSM expects " + std::to_string(vocab_size));
    }
    const std::size_t states = fsm.state_count();

    std::vector<std::vector<Hypothesis>> live(states);
    live[ConstraintFsm::initial_state()].push_back(Hypothesis{});
    std::vector<std::vector<Hypothesis>> completed(states);

    for (std::size_t step = 0; step <= cfg.max_len; ++step) {
        std::vector<detail::TopK<detail::Extension, decltype(&detail::extension_before)>> next;
        next.reserve(states);
        for (std::size_t s = 0; s < states; ++s) {
            next.emplace_back(cfg.beam_width, &detail::extension_before);
        }
        bool any_live = false;

        for (StateId s = 0; s < states; ++s) {
            for (const auto& hyp : live[s]) {
                any_live = true;
                const auto logprobs = detail::checked_logprobs(scorer, hyp.tokens, vocab_size);

                if (double lp = logprobs[Vocabulary::eos]; lp != detail::neg_inf) {
                    completed[s].push_back(Hypothesis{hyp.tokens, hyp.logprob + lp, s, true});
                }
                if (step == cfg.max_len) {
                    continue;
                }
                for (TokenId t = 0; t < vocab_size; ++t) {
                    if (Vocabulary::is_delimiter(t) || logprobs[t] == detail::neg_inf) {
                        continue;
                    }
                    detail::Extension ext{hyp.logprob + logprobs[t], &hyp, t};
                    auto& beam = next[fsm.step_unchecked(s, t)];
                    if (beam.admits(ext)) {
                        beam.offer(ext);
                    }
                }
            }
        }
        if (!any_live) {
            break;
        }

        std::vector<std::vector<Hypothesis>> survivors(states);
        for (StateId s = 0; s < states; ++s) {
            for (const auto& ext : std::move(next[s]).sorted()) {
                Hypothesis h;
                h.tokens = ext.parent->tokens;
                h.tokens.push_back(ext.token);
                h.logprob = ext.logprob;
                h.fsm_state = s;
                survivors[s].push_back(std::move(h));
            }
            auto& done = completed[s];
            std::sort(done.begin(), done.end(), ranks_before);
            if (done.size() > cfg.beam_width) {
                done.resize(cfg.beam_width);
            }
        }
        live = std::move(survivors);
    }

    const std::size_t quota = fsm.min_satisfied();
    const std::size_t lowest = cfg.min_satisfied_fallback ? 0 : quota;
    for (std::size_t tier = quota + 1; tier-- > lowest;) {
        const Hypothesis* best = nullptr;
        for (StateId s = 0; s < states; ++s) {
            if (fsm.satisfied_count(s) < tier) {
                continue;
            }
            for (const auto& h : completed[s]) {
                if (best == nullptr || detail::selects_before(h, *best, cfg.length_normalize)) {
                    best = &h;
                }
            }
        }
        if (best != nullptr) {
            DecodeResult result;
            result.caption = best->tokens;
            result.logprob = best->logprob;
            result.satisfied_count = fsm.satisfied_count(best->fsm_state);
            result.per_state_finalists = std::move(completed);
            return result;
        }
    }
    fail(ErrorCode::NoHypothesis, "no completed hypothesis satisfies " + std::to_string(quota) +
                                      " constraint groups within " + std::to_string(cfg.max_len) + " tokens");
}

/// Plain beam search with a single global beam; the baseline the
/// constrained decoder reduces to for an empty constraint set.
template <Scorer S>
DecodeResult decode_unconstrained(const S& scorer, std::size_t beam_width, std::size_t max_len,
                                  bool length_normalize = false)
{
    detail::validate(DecodeConfig{beam_width, max_len, true, length_normalize});
    const std::size_t vocab_size = scorer.vocab_size();

    std::vector<Hypothesis> beam{Hypothesis{}};
    std::vector<Hypothesis> completed;

    for (std::size_t step = 0; step <= max_len && !beam.empty(); ++step) {
        detail::TopK next(beam_width, &detail::extension_before);
        for (const auto& hyp : beam) {
            const auto logprobs = detail::checked_logprobs(scorer, hyp.tokens, vocab_size);
            if (double lp = logprobs[Vocabulary::eos]; lp != detail::neg_inf) {
                completed.push_back(Hypothesis{hyp.tokens, hyp.logprob + lp, 0, true});
            }
            if (step == max_len) {
                continue;
            }
            for (TokenId t = 0; t < vocab_size; ++t) {
                if (Vocabulary::is_delimiter(t) || logprobs[t] == detail::neg_inf) {
                    continue;
                }
                detail::Extension ext{hyp.logprob + logprobs[t], &hyp, t};
                if (next.admits(ext)) {
                    next.offer(ext);
                }
            }
        }
        std::vector<Hypothesis> survivors;
        for (const auto& ext : std::move(next).sorted()) {
            Hypothesis h{ext.parent->tokens, ext.logprob, 0, false};
            h.tokens.push_back(ext.token);
            survivors.push_back(std::move(h));
        }
        std::sort(completed.begin(), completed.end(), ranks_before);
        if (completed.size() > beam_width) {
            completed.resize(beam_width);
        }
        beam = std::move(survivors);
    }

    if (completed.empty()) {
        fail(ErrorCode::NoHypothesis, "no hypothesis emitted EOS within " + std::to_string(max_len) + " tokens");
    }
    auto best = std::min_element(completed.begin(), completed.end(), [&](const Hypothesis& a, const Hypothesis& b) {
        return detail::selects_before(a, b, length_normalize);
    });
    DecodeResult result;
    result.caption = best->tokens;
    result.logprob = best->logprob;
    result.satisfied_count = 0;
    result.per_state_finalists = {std::move(completed)};
    return result;
}

} // namespace lexbeam
