#ifndef VECFOLD_SYNTH_HPP
#define VECFOLD_SYNTH_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "vecfold/corpus.hpp"

namespace vecfold::synth {

/// Ground-truth themes of the synthetic car-parts corpus.
inline constexpr std::array<std::string_view, 4> categories = {"tires", "lights", "seats", "body_panels"};

struct LabeledPost {
    corpus::Post post;
    std::size_t category = 0;
};

/**
 * Marketplace-like posts drawn from four keyword vocabularies plus shared
 * filler (prices, pickup terms, vehicle makes). Posts cycle through the
 * categories so each gets n/4 posts; image counts range 0-5 with
 * uninformative file names.
 */
std::vector<LabeledPost> synthetic_corpus(std::size_t n_posts, std::uint64_t seed);

/// Line-delimited JSON; the ground truth rides along as an extra "category" key.
void write_synthetic_corpus(const std::filesystem::path& path, const std::vector<LabeledPost>& posts);

} // namespace vecfold::synth

#endif
