#ifndef VECFOLD_CORPUS_HPP
#define VECFOLD_CORPUS_HPP

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace vecfold::corpus {

enum class Platform { offerup, craigslist, other };

std::string_view platform_name(Platform p);
std::optional<Platform> parse_platform(std::string_view name);

/// One marketplace listing. Image entries are references only; bytes are never loaded here.
struct Post {
    std::string id;
    Platform platform = Platform::other;
    std::string title;
    std::string body;
    std::vector<std::string> images;
    std::optional<double> price;
    std::optional<std::string> posted_at;

    bool operator==(const Post&) const = default;
};

/// A record rejected by a lenient load.
struct SkippedRecord {
    std::size_t line;
    std::string field;
    std::string reason;

    bool operator==(const SkippedRecord&) const = default;
};

/**
 * @brief Immutable, validated post sequence in file order.
 *
 * Shared through `std::shared_ptr<const Corpus>` so any number of readers can
 * hold it concurrently.
 */
class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<Post> posts, std::vector<SkippedRecord> skipped, std::size_t unknown_keys);

    const std::vector<Post>& posts() const { return posts_; }
    std::size_t size() const { return posts_.size(); }
    const Post& operator[](std::size_t i) const { return posts_[i]; }

    const std::vector<SkippedRecord>& skipped() const { return skipped_; }
    std::size_t unknown_keys() const { return unknown_keys_; }

    /// Row of a post id, if present.
    std::optional<std::size_t> find(std::string_view id) const;

private:
    std::vector<Post> posts_;
    std::vector<SkippedRecord> skipped_;
    std::size_t unknown_keys_ = 0;
    std::map<std::string, std::size_t, std::less<>> index_;
};

using CorpusHandle = std::shared_ptr<const Corpus>;

struct CorpusStats {
    std::size_t total_posts = 0;
    std::map<std::string, std::size_t> per_platform;
    std::map<std::size_t, std::size_t> image_count_histogram;
    std::size_t posts_without_images = 0;

    bool operator==(const CorpusStats&) const = default;
};

/**
 * Validate one decoded record against the post schema.
 * Throws SchemaViolation tagged with `line`. Unknown keys are tallied in `unknown_keys`.
 */
Post parse_post(const nlohmann::json& record, std::size_t line, std::size_t* unknown_keys = nullptr);

nlohmann::json post_to_json(const Post& post);

/**
 * Load a line-delimited JSON corpus.
 *
 * Strict mode throws on the first invalid record (SchemaViolation) or
 * repeated id (DuplicateId). Lenient mode skips such records and lists them
 * in `Corpus::skipped()`. Blank lines are ignored in both modes and line
 * numbers are 1-based.
 */
CorpusHandle load_corpus(const std::filesystem::path& path, bool strict);

CorpusStats corpus_stats(const Corpus& corpus);

nlohmann::json stats_to_json(const CorpusStats& stats);

/// Write posts as one JSON object per line.
void write_corpus(const std::filesystem::path& path, const std::vector<Post>& posts);

} // namespace vecfold::corpus

#endif
