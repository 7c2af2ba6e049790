#include "vecfold/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <regex>
#include <unordered_map>
#include <unordered_set>

#include "vecfold/error.hpp"

namespace vecfold::corpus {

using nlohmann::json;

std::string_view platform_name(Platform p) {
    switch (p) {
    case Platform::offerup: return "offerup";
    case Platform::craigslist: return "craigslist";
    case Platform::other: return "other";
    }
    return "other";
}

std::optional<Platform> parse_platform(std::string_view name) {
    if (name == "offerup") return Platform::offerup;
    if (name == "craigslist") return Platform::craigslist;
    if (name == "other") return Platform::other;
    return std::nullopt;
}

Corpus::Corpus(std::vector<Post> posts, std::vector<SkippedRecord> skipped, std::size_t unknown_keys) :
    posts_(std::move(posts)), skipped_(std::move(skipped)), unknown_keys_(unknown_keys) {
    for (std::size_t i = 0; i < posts_.size(); ++i) {
        index_.emplace(posts_[i].id, i);
    }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

const std::regex& iso8601() {
    static const std::regex re(
        R"(^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)?$)");
    return re;
}

std::string optional_string(const json& record, const char* key, std::size_t line) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        throw SchemaViolation(line, key, "must be a string");
    }
    return it->get<std::string>();
}

} // namespace

Post parse_post(const json& record, std::size_t line, std::size_t* unknown_keys) {
    static const std::unordered_set<std::string> known = {"id", "platform", "title", "body",
                                                          "images", "price", "posted_at"};
    if (!record.is_object()) {
        throw SchemaViolation(line, "", "record is not a JSON object");
    }

    Post post;
    auto id = record.find("id");
    if (id == record.end()) {
        throw SchemaViolation(line, "id", "missing");
    }
    if (!id->is_string() || id->get_ref<const std::string&>().empty()) {
        throw SchemaViolation(line, "id", "must be a non-empty string");
    }
    post.id = id->get<std::string>();
    if (post.id.find_first_of("\t\r\n") != std::string::npos) {
        throw SchemaViolation(line, "id", "must not contain tabs or newlines");
    }

    auto platform = record.find("platform");
    if (platform == record.end()) {
        throw SchemaViolation(line, "platform", "missing");
    }
    if (!platform->is_string()) {
        throw SchemaViolation(line, "platform", "must be a string");
    }
    auto parsed = parse_platform(platform->get_ref<const std::string&>());
    if (!parsed) {
        throw SchemaViolation(line, "platform", "must be one of offerup, craigslist, other");
    }
    post.platform = *parsed;

    post.title = optional_string(record, "title", line);
    post.body = optional_string(record, "body", line);
    if (blank(post.title) && blank(post.body)) {
        throw SchemaViolation(line, "body", "title and body are both empty");
    }

    if (auto images = record.find("images"); images != record.end() && !images->is_null()) {
        if (!images->is_array()) {
            throw SchemaViolation(line, "images", "must be an array of strings");
        }
        std::unordered_set<std::string> seen;
        for (const auto& ref : *images) {
            if (!ref.is_string()) {
                throw SchemaViolation(line, "images", "entries must be strings");
            }
            const auto& s = ref.get_ref<const std::string&>();
            if (s.empty()) {
                throw SchemaViolation(line, "images", "empty image reference");
            }
            if (!seen.insert(s).second) {
                throw SchemaViolation(line, "images", "duplicate image reference '" + s + "'");
            }
            post.images.push_back(s);
        }
    }

    if (auto price = record.find("price"); price != record.end() && !price->is_null()) {
        if (!price->is_number()) {
            throw SchemaViolation(line, "price", "must be a number");
        }
        const double value = price->get<double>();
        if (!std::isfinite(value) || value < 0.0) {
            throw SchemaViolation(line, "price", "must be a non-negative finite number");
        }
        post.price = value;
    }

    if (auto ts = record.find("posted_at"); ts != record.end() && !ts->is_null()) {
        if (!ts->is_string() || !std::regex_match(ts->get_ref<const std::string&>(), iso8601())) {
            throw SchemaViolation(line, "posted_at", "must be an ISO-8601 timestamp");
        }
        post.posted_at = ts->get<std::string>();
    }

    if (unknown_keys) {
        for (const auto& item : record.items()) {
            if (!known.count(item.key())) {
                ++*unknown_keys;
            }
        }
    }
    return post;
}

json post_to_json(const Post& post) {
    json j;
    j["id"] = post.id;
    j["platform"] = platform_name(post.platform);
    j["title"] = post.title;
    j["body"] = post.body;
    j["images"] = post.images;
    if (post.price) {
        j["price"] = *post.price;
    }
    if (post.posted_at) {
        j["posted_at"] = *post.posted_at;
    }
    return j;
}

CorpusHandle load_corpus(const std::filesystem::path& path, bool strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::FileNotReadable, "cannot read corpus " + path.string());
    }

    std::vector<Post> posts;
    std::vector<SkippedRecord> skipped;
    std::unordered_map<std::string, std::size_t> first_line;
    std::size_t unknown = 0;

    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') {
            text.pop_back();
        }
        if (blank(text)) {
            continue;
        }
        try {
            json record;
            try {
                record = json::parse(text);
            } catch (const json::parse_error& e) {
                throw SchemaViolation(line, "", std::string("malformed JSON: ") + e.what());
            }
            std::size_t record_unknown = 0;
            Post post = parse_post(record, line, &record_unknown);
            auto [it, inserted] = first_line.emplace(post.id, line);
            if (!inserted) {
                throw DuplicateId(post.id, it->second, line);
            }
            unknown += record_unknown;
            posts.push_back(std::move(post));
        } catch (const SchemaViolation& e) {
            if (strict) {
                throw;
            }
            skipped.push_back(SkippedRecord{e.line(), e.field(), e.reason()});
        } catch (const DuplicateId& e) {
            if (strict) {
                throw;
            }
            skipped.push_back(SkippedRecord{e.second_line(), "id",
                                            "duplicate of line " + std::to_string(e.first_line())});
        }
    }
    return std::make_shared<const Corpus>(std::move(posts), std::move(skipped), unknown);
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.total_posts = corpus.size();
    for (const auto& post : corpus.posts()) {
        ++stats.per_platform[std::string(platform_name(post.platform))];
        ++stats.image_count_histogram[post.images.size()];
        if (post.images.empty()) {
            ++stats.posts_without_images;
        }
    }
    return stats;
}

json stats_to_json(const CorpusStats& stats) {
    json histogram = json::object();
    for (const auto& [count, posts] : stats.image_count_histogram) {
        histogram[std::to_string(count)] = posts;
    }
    return json{{"total_posts", stats.total_posts},
                {"per_platform", stats.per_platform},
                {"image_count_histogram", histogram},
                {"posts_without_images", stats.posts_without_images}};
}

void write_corpus(const std::filesystem::path& path, const std::vector<Post>& posts) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::UnwritablePath, "cannot write corpus " + path.string());
    }
    for (const auto& post : posts) {
        out << post_to_json(post).dump() << '\n';
    }
}

} // namespace vecfold::corpus
