#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "phytune/autograd.hpp"

namespace phytune {

// Frozen hashed-word embedding table. Id 0 pads empty text, id 1 separates
// concatenated sequences; words hash into ids 2..vocab_size-1.
class TextEncoder {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kSeparator = 1;

    TextEncoder(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

    std::size_t vocab_size() const noexcept { return vocab_size_; }
    std::size_t dim() const noexcept { return table_.dim(1); }

    // One id per lowercase alphanumeric word; a single pad id for empty text.
    std::vector<std::size_t> tokenize(std::string_view text) const;
    // Rows of the table for `ids`, shaped [ids.size(), dim].
    Tensor embed_ids(const std::vector<std::size_t>& ids) const;
    Tensor encode(std::string_view text) const { return embed_ids(tokenize(text)); }

    const Tensor& table() const noexcept { return table_; }

private:
    std::size_t vocab_size_;
    Tensor table_;
};

}  // namespace phytune
