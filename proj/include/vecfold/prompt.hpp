#ifndef VECFOLD_PROMPT_HPP
#define VECFOLD_PROMPT_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vecfold/corpus.hpp"

namespace vecfold::prompt {

inline constexpr std::string_view post_prefix = "This is a post";
inline constexpr std::string_view no_image_phrase = "no image added with this post";
inline constexpr std::string_view single_image_phrase = "This is the image that goes with the post";
inline constexpr std::string_view multi_image_phrase = "These are the images that go with the post";

enum class TokenPlacement {
    /// `... These are the images that go with the post <image> <image>`
    after_phrase,
    /// `... <image> <image> These are the images that go with the post`
    before_text,
};

struct TemplateConfig {
    std::string image_token = "<image>";
    std::optional<std::string> end_chunk_token;
    TokenPlacement token_placement = TokenPlacement::after_phrase;
    std::optional<std::size_t> max_images;
    std::string separator = " ";

    /// Throws InvalidArgument when the image token is empty or holds whitespace,
    /// or max_images is zero.
    void validate() const;

    bool operator==(const TemplateConfig&) const = default;
};

struct TemplatedPost {
    std::string post_id;
    std::string text;
    std::vector<std::string> image_refs;
    std::size_t image_token_count = 0;
    /// Images the post carried before max_images truncation.
    std::size_t original_image_count = 0;

    bool truncated() const { return original_image_count > image_refs.size(); }
};

/**
 * Render a post as `This is a post <title> <body> <image phrase and tokens>`.
 *
 * Empty title or body parts are omitted rather than leaving doubled
 * separators. The image phrase is chosen from the retained image count:
 * none, one, or several. Occurrences of the image token inside the post
 * text are removed so the token count always equals the image count.
 */
TemplatedPost render_template(const corpus::Post& post, const TemplateConfig& config);

/// Non-overlapping occurrences of `needle` in `text`.
std::size_t count_occurrences(std::string_view text, std::string_view needle);

nlohmann::json config_to_json(const TemplateConfig& config);
TemplateConfig config_from_json(const nlohmann::json& j);

nlohmann::json templated_to_json(const TemplatedPost& templated);

} // namespace vecfold::prompt

#endif
