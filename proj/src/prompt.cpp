#include "vecfold/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "vecfold/error.hpp"

namespace vecfold::prompt {

using nlohmann::json;

void TemplateConfig::validate() const {
    if (image_token.empty()) {
        throw Error(Errc::InvalidArgument, "image_token must be non-empty");
    }
    if (std::any_of(image_token.begin(), image_token.end(), [](unsigned char c) { return std::isspace(c); })) {
        throw Error(Errc::InvalidArgument, "image_token must not contain whitespace");
    }
    if (max_images && *max_images == 0) {
        throw Error(Errc::InvalidArgument, "max_images must be at least 1 when set");
    }
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

void append_part(std::string& out, std::string_view part, std::string_view sep) {
    if (part.empty()) {
        return;
    }
    if (!out.empty()) {
        out += sep;
    }
    out += part;
}

// Post text must not smuggle in image tokens of its own.
std::string strip_token(std::string_view text, std::string_view token) {
    std::string out;
    std::size_t pos = 0;
    for (auto hit = text.find(token); hit != std::string_view::npos; hit = text.find(token, pos)) {
        out.append(text.substr(pos, hit - pos));
        pos = hit + token.size();
    }
    out.append(text.substr(pos));
    return out;
}

} // namespace

TemplatedPost render_template(const corpus::Post& post, const TemplateConfig& config) {
    TemplatedPost out;
    out.post_id = post.id;
    out.original_image_count = post.images.size();

    std::size_t keep = post.images.size();
    if (config.max_images) {
        keep = std::min(keep, *config.max_images);
    }
    out.image_refs.assign(post.images.begin(), post.images.begin() + static_cast<std::ptrdiff_t>(keep));
    out.image_token_count = keep;

    std::string text(post_prefix);
    const auto title = strip_token(post.title, config.image_token);
    const auto body = strip_token(post.body, config.image_token);
    append_part(text, trim(title), config.separator);
    append_part(text, trim(body), config.separator);

    if (keep == 0) {
        append_part(text, no_image_phrase, config.separator);
    } else {
        const std::string_view phrase = keep == 1 ? single_image_phrase : multi_image_phrase;
        if (config.token_placement == TokenPlacement::before_text) {
            for (std::size_t i = 0; i < keep; ++i) {
                append_part(text, config.image_token, config.separator);
            }
            append_part(text, phrase, config.separator);
        } else {
            append_part(text, phrase, config.separator);
            for (std::size_t i = 0; i < keep; ++i) {
                append_part(text, config.image_token, config.separator);
            }
        }
        if (config.end_chunk_token) {
            append_part(text, *config.end_chunk_token, config.separator);
        }
    }

    out.text = std::move(text);
    return out;
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    if (needle.empty()) {
        return 0;
    }
    std::size_t count = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

json config_to_json(const TemplateConfig& config) {
    json j{{"image_token", config.image_token},
           {"token_placement", config.token_placement == TokenPlacement::after_phrase ? "after_phrase" : "before_text"},
           {"separator", config.separator}};
    j["end_chunk_token"] = config.end_chunk_token ? json(*config.end_chunk_token) : json(nullptr);
    j["max_images"] = config.max_images ? json(*config.max_images) : json(nullptr);
    return j;
}

TemplateConfig config_from_json(const json& j) {
    TemplateConfig c;
    if (!j.is_object()) {
        throw Error(Errc::ConfigError, "template config must be an object");
    }
    try {
        c.image_token = j.value("image_token", c.image_token);
        c.separator = j.value("separator", c.separator);
        if (auto it = j.find("end_chunk_token"); it != j.end() && !it->is_null()) {
            c.end_chunk_token = it->get<std::string>();
        }
        if (auto it = j.find("max_images"); it != j.end() && !it->is_null()) {
            c.max_images = it->get<std::size_t>();
        }
        const auto placement = j.value("token_placement", std::string("after_phrase"));
        if (placement == "after_phrase") {
            c.token_placement = TokenPlacement::after_phrase;
        } else if (placement == "before_text") {
            c.token_placement = TokenPlacement::before_text;
        } else {
            throw Error(Errc::ConfigError, "token_placement must be after_phrase or before_text");
        }
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("template config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    return c;
}

json templated_to_json(const TemplatedPost& t) {
    return json{{"post_id", t.post_id},
                {"text", t.text},
                {"image_refs", t.image_refs},
                {"image_token_count", t.image_token_count},
                {"original_image_count", t.original_image_count}};
}

} // namespace vecfold::prompt
