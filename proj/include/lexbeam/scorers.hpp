#pragma once

#include <lexbeam/error.hpp>
#include <lexbeam/vocabulary.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lexbeam {

/// log(sum(exp(x))) without overflow; -inf for an all -inf input.
inline double logsumexp(std::span<const double> values)
{
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : values) {
        peak = std::max(peak, v);
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
        return peak;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += std::exp(v - peak);
    }
    return peak + std::log(sum);
}

struct BigramCount {
    TokenId context;
    TokenId next;
    std::uint64_t count;
};

/// Laplace-smoothed bigram language model.
///
///     P(w | v) = (count(v, w) + alpha) / (count(v, .) + alpha * |V_out|)
///
/// where V_out is every token except BOS (BOS is never predicted and gets
/// log-probability -inf). Log-probabilities are tabulated once at
/// construction; the model is immutable afterwards.
class BigramModel {
public:
    BigramModel(Vocabulary vocab, const std::vector<BigramCount>& counts, double alpha)
        : vocab_(std::move(vocab)), alpha_(alpha)
    {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            fail(ErrorCode::NonPositiveAlpha, "smoothing constant must be positive, got " + std::to_string(alpha));
        }
        const std::size_t v = vocab_.size();
        counts_.assign(v * v, 0);
        for (const auto& c : counts) {
            if (c.context >= v || c.next >= v) {
                fail(ErrorCode::UnknownToken, "bigram count references a token outside the vocabulary");
            }
            if (c.next == Vocabulary::bos) {
                fail(ErrorCode::BadDistribution, "bigram counts cannot predict the BOS token");
            }
            counts_[c.context * v + c.next] += c.count;
        }

        const double outcomes = static_cast<double>(v - 1);
        logprobs_.assign(v * v, 0.0);
        for (std::size_t ctx = 0; ctx < v; ++ctx) {
            std::uint64_t total = 0;
            for (std::size_t w = 0; w < v; ++w) {
                total += counts_[ctx * v + w];
            }
            const double log_denominator = std::log(static_cast<double>(total) + alpha_ * outcomes);
            for (std::size_t w = 0; w < v; ++w) {
                logprobs_[ctx * v + w] =
                    w == Vocabulary::bos
                        ? -std::numeric_limits<double>::infinity()
                        : std::log(static_cast<double>(counts_[ctx * v + w]) + alpha_) - log_denominator;
            }
        }
    }

    /// Counts every adjacent pair of BOS + sentence + EOS. The vocabulary is
    /// `extra_tokens` followed by unseen corpus tokens in first-appearance order.
    static BigramModel fit(const std::vector<std::vector<std::string>>& corpus, double alpha,
                           const std::vector<std::string>& extra_tokens = {})
    {
        if (corpus.empty()) {
            fail(ErrorCode::EmptyCorpus, "cannot fit a bigram model on an empty corpus");
        }
        if (!(alpha > 0.0) || !std::isfinite(alpha)) {
            fail(ErrorCode::NonPositiveAlpha, "smoothing constant must be positive, got " + std::to_string(alpha));
        }
        std::vector<std::string> tokens = extra_tokens;
        std::unordered_set<std::string> seen(tokens.begin(), tokens.end());
        for (const auto& sentence : corpus) {
            for (const auto& word : sentence) {
                if (seen.insert(word).second) {
                    tokens.push_back(word);
                }
            }
        }
        Vocabulary vocab(tokens);

        std::map<std::pair<TokenId, TokenId>, std::uint64_t> pairs;
        for (const auto& sentence : corpus) {
            TokenId prev = Vocabulary::bos;
            for (const auto& word : sentence) {
                TokenId id = vocab.id(word);
                ++pairs[{prev, id}];
                prev = id;
            }
            ++pairs[{prev, Vocabulary::eos}];
        }
        std::vector<BigramCount> counts;
        counts.reserve(pairs.size());
        for (const auto& [key, n] : pairs) {
            counts.push_back({key.first, key.second, n});
        }
        return BigramModel(std::move(vocab), counts, alpha);
    }

    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const Vocabulary& vocabulary() const noexcept { return vocab_; }
    double alpha() const noexcept { return alpha_; }

    std::uint64_t count(TokenId context, TokenId next) const
    {
        check(context);
        check(next);
        return counts_[context * vocab_.size() + next];
    }

    /// Non-zero counts in (context, next) order.
    std::vector<BigramCount> counts() const
    {
        std::vector<BigramCount> out;
        const std::size_t v = vocab_.size();
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            if (counts_[i] != 0) {
                out.push_back({static_cast<TokenId>(i / v), static_cast<TokenId>(i % v), counts_[i]});
            }
        }
        return out;
    }

    double logprob(TokenId context, TokenId next) const
    {
        check(context);
        check(next);
        return logprobs_[context * vocab_.size() + next];
    }

    std::vector<double> next_logprobs(std::span<const TokenId> prefix) const
    {
        for (auto t : prefix) {
            check(t);
        }
        const TokenId context = prefix.empty() ? Vocabulary::bos : prefix.back();
        const std::size_t v = vocab_.size();
        auto first = logprobs_.begin() + static_cast<std::ptrdiff_t>(context * v);
        return {first, first + static_cast<std::ptrdiff_t>(v)};
    }

private:
    void check(TokenId t) const
    {
        if (t >= vocab_.size()) {
            fail(ErrorCode::UnknownToken, "token id " + std::to_string(t) + " is not in the model vocabulary");
        }
    }

    Vocabulary vocab_;
    double alpha_;
    std::vector<std::uint64_t> counts_;
    std::vector<double> logprobs_;
};

/// Scorer backed by explicitly supplied distributions: an exact-prefix table
/// with a default row for every prefix not listed.
class TableScorer {
public:
    static constexpr double tolerance = 1e-6;

    explicit TableScorer(std::vector<double> default_logprobs) : vocab_size_(default_logprobs.size())
    {
        validate(default_logprobs);
        default_ = std::move(default_logprobs);
    }

    void set(std::vector<TokenId> prefix, std::vector<double> logprobs)
    {
        validate(logprobs);
        table_[std::move(prefix)] = std::move(logprobs);
    }

    std::size_t vocab_size() const noexcept { return vocab_size_; }

    std::vector<double> next_logprobs(std::span<const TokenId> prefix) const
    {
        auto it = table_.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
        return it == table_.end() ? default_ : it->second;
    }

private:
    void validate(const std::vector<double>& logprobs) const
    {
        if (logprobs.size() != vocab_size_ || vocab_size_ == 0) {
            fail(ErrorCode::BadDistribution, "distribution has " + std::to_string(logprobs.size()) +
                                                 " entries, expected " + std::to_string(vocab_size_));
        }
        const double mass = logsumexp(logprobs);
        if (!(std::abs(mass) <= tolerance)) {
            fail(ErrorCode::BadDistribution, "distribution does not normalise (logsumexp " + std::to_string(mass) + ")");
        }
    }

    std::size_t vocab_size_;
    std::vector<double> default_;
    std::map<std::vector<TokenId>, std::vector<double>> table_;
};

} // namespace lexbeam
