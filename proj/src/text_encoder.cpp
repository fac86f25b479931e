#include "phytune/text_encoder.hpp"

#include "phytune/errors.hpp"
#include "phytune/util.hpp"

namespace phytune {

TextEncoder::TextEncoder(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) : vocab_size_(vocab_size) {
    if (vocab_size < 3) throw PreconditionError("text vocabulary needs at least three ids");
    if (dim == 0) throw PreconditionError("text embedding width must be positive");
    Rng rng(seed ^ 0x7465787465ULL);
    table_ = rng.normal_tensor({vocab_size, dim});
}

std::vector<std::size_t> TextEncoder::tokenize(std::string_view text) const {
    std::vector<std::size_t> ids;
    for (const auto& w : text::words(text)) ids.push_back(2 + fnv1a64(w) % (vocab_size_ - 2));
    if (ids.empty()) ids.push_back(kPad);
    return ids;
}

Tensor TextEncoder::embed_ids(const std::vector<std::size_t>& ids) const {
    if (ids.empty()) throw PreconditionError("cannot embed an empty id sequence");
    const std::size_t d = dim();
    Tensor out({ids.size(), d});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= vocab_size_) throw RangeError("token id out of range");
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = table_.at(ids[r], c);
    }
    return out;
}

}  // namespace phytune
