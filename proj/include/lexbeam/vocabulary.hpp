#pragma once

#include <lexbeam/error.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lexbeam {

using TokenId = std::uint32_t;

/// Dense token table. Ids 0 and 1 are reserved for the sequence delimiters;
/// user tokens follow in insertion order.
class Vocabulary {
public:
    static constexpr TokenId bos = 0;
    static constexpr TokenId eos = 1;
    static constexpr std::string_view bos_token = "<s>";
    static constexpr std::string_view eos_token = "</s>";

    Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

    explicit Vocabulary(const std::vector<std::string>& tokens)
    {
        push(std::string(bos_token));
        push(std::string(eos_token));
        for (const auto& token : tokens) {
            if (token == bos_token || token == eos_token) {
                continue;
            }
            if (lookup_.count(token) != 0) {
                fail(ErrorCode::DuplicateToken, "duplicate vocabulary token '" + token + "'");
            }
            push(token);
        }
    }

    std::size_t size() const noexcept { return tokens_.size(); }

    std::optional<TokenId> find(std::string_view token) const
    {
        auto it = lookup_.find(std::string(token));
        if (it == lookup_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    TokenId id(std::string_view token) const
    {
        if (auto found = find(token)) {
            return *found;
        }
        fail(ErrorCode::UnknownToken, "token '" + std::string(token) + "' is not in the vocabulary");
    }

    const std::string& token(TokenId id) const
    {
        if (id >= tokens_.size()) {
            fail(ErrorCode::OutOfRange, "token id " + std::to_string(id) + " out of range");
        }
        return tokens_[id];
    }

    std::vector<TokenId> encode(std::span<const std::string> words) const
    {
        std::vector<TokenId> ids;
        ids.reserve(words.size());
        for (const auto& w : words) {
            ids.push_back(id(w));
        }
        return ids;
    }

    std::vector<std::string> decode(std::span<const TokenId> ids) const
    {
        std::vector<std::string> words;
        words.reserve(ids.size());
        for (auto id : ids) {
            words.push_back(token(id));
        }
        return words;
    }

    /// User tokens only (delimiters excluded), in id order.
    std::vector<std::string> user_tokens() const
    {
        return {tokens_.begin() + 2, tokens_.end()};
    }

    static constexpr bool is_delimiter(TokenId id) noexcept { return id == bos || id == eos; }

private:
    void push(std::string token)
    {
        lookup_.emplace(token, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(std::move(token));
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> lookup_;
};

} // namespace lexbeam
