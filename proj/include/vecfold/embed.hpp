#ifndef VECFOLD_EMBED_HPP
#define VECFOLD_EMBED_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vecfold/corpus.hpp"
#include "vecfold/prompt.hpp"
#include "vecfold/store.hpp"

namespace vecfold::embed {

enum class ProviderKind { stub, precomputed_file, remote };
enum class Pooling { mean, last_token };
enum class ImagePolicy { first_only, all };

std::string_view kind_name(ProviderKind kind);
std::string_view pooling_name(Pooling pooling);
std::string_view image_policy_name(ImagePolicy policy);

struct ProviderDescriptor {
    ProviderKind kind = ProviderKind::stub;
    std::size_t dim = 768;
    Pooling pooling = Pooling::mean;
    bool normalize = true;
    ImagePolicy image_policy = ImagePolicy::first_only;
    /// EMBM path for precomputed_file, base URL (http://host:port) for remote.
    std::string endpoint_or_path;
    /// Stub hashing seed.
    std::uint64_t seed = 0;
    /// Directory image references are resolved against (remote only).
    std::string images_root;
    /// Concurrent embed_post calls; 0 selects the kind's default.
    std::size_t max_in_flight = 0;
    double timeout_seconds = 30.0;

    /// Throws InvalidArgument.
    void validate() const;
};

nlohmann::json descriptor_to_json(const ProviderDescriptor& d);
ProviderDescriptor descriptor_from_json(const nlohmann::json& j);

struct EmbeddingVector {
    std::vector<float> values;
    std::string post_id;
    bool truncated_images = false;

    std::size_t dim() const { return values.size(); }
};

/**
 * @brief Turns one templated post into one fixed-width vector.
 *
 * Implementations must tolerate concurrent `embed_post()` calls up to
 * `max_in_flight()`.
 */
class Provider {
public:
    explicit Provider(ProviderDescriptor descriptor) : descriptor_(std::move(descriptor)) {}
    virtual ~Provider() = default;

    virtual EmbeddingVector embed_post(const prompt::TemplatedPost& templated) const = 0;

    /// 0 means unbounded.
    virtual std::size_t max_in_flight() const { return descriptor_.max_in_flight; }

    const ProviderDescriptor& descriptor() const { return descriptor_; }
    std::size_t dim() const { return descriptor_.dim; }

protected:
    /// Shared post-processing: width and finiteness checks, optional normalization.
    EmbeddingVector finish(std::vector<float> values, const prompt::TemplatedPost& templated,
                           bool truncated) const;

    /// Image references consumed under the descriptor's image policy.
    std::span<const std::string> consumed_images(const prompt::TemplatedPost& templated) const;

private:
    ProviderDescriptor descriptor_;
};

/**
 * @brief Deterministic feature-hashing embedder.
 *
 * Each whitespace-delimited, lowercased token of the templated text, plus the
 * basename of every consumed image reference, becomes a signed one-hot
 * vector: bucket = h mod dim, sign = top bit of h, where h is `stub_hash()`.
 * The token sequence is then pooled and (optionally) L2-normalized.
 */
class StubProvider : public Provider {
public:
    explicit StubProvider(ProviderDescriptor descriptor);

    EmbeddingVector embed_post(const prompt::TemplatedPost& templated) const override;
    std::size_t max_in_flight() const override { return descriptor().max_in_flight; }

    /// The pseudo-token sequence hashed for a post.
    std::vector<std::string> tokens(const prompt::TemplatedPost& templated) const;
};

/// Serves rows of an existing EMBM file looked up by post id.
class PrecomputedFileProvider : public Provider {
public:
    explicit PrecomputedFileProvider(ProviderDescriptor descriptor);

    EmbeddingVector embed_post(const prompt::TemplatedPost& templated) const override;

private:
    store::MatrixReader reader_;
    std::unordered_map<std::string, std::size_t> rows_;
};

/**
 * @brief Client for the embedding service protocol.
 *
 * `POST /v1/embed` with `{"id", "text", "images": [base64...], "pooling",
 * "normalize"}`; expects `{"id", "embedding", "dim", "truncated_images",
 * "model_tag"}`. The constructor probes `GET /v1/health` and checks the
 * advertised dimension.
 */
class RemoteProvider : public Provider {
public:
    explicit RemoteProvider(ProviderDescriptor descriptor);

    EmbeddingVector embed_post(const prompt::TemplatedPost& templated) const override;
    std::size_t max_in_flight() const override;

    const std::string& model_tag() const { return model_tag_; }

    /// The JSON request body sent for a post (image bytes already base64-encoded).
    nlohmann::json build_request(const prompt::TemplatedPost& templated) const;

private:
    std::string model_tag_;
};

std::unique_ptr<Provider> make_provider(const ProviderDescriptor& descriptor);

/// FNV-1a over the little-endian seed bytes then the token, finished with a 64-bit avalanche mix.
std::uint64_t stub_hash(std::string_view token, std::uint64_t seed);

std::string base64_encode(std::span<const unsigned char> bytes);

/**
 * Reduce a token sequence to one vector.
 * Throws EmptySequence or RaggedSequence. Means are accumulated in double.
 */
std::vector<float> pool_tokens(std::span<const std::vector<float>> sequence, Pooling strategy);

struct EmbedCorpusOptions {
    std::size_t batch_size = 64;
    bool resume = true;
    int threads = 1;
};

struct EmbedCorpusResult {
    std::size_t rows = 0;
    std::size_t resumed_rows = 0;
    std::size_t provider_calls = 0;
    std::size_t truncated_posts = 0;
};

/**
 * Embed every post into an EMBM file, one row per post in corpus order.
 *
 * Rows are checkpointed at batch boundaries. When a provider call fails,
 * rows completed before it are flushed and the error is rethrown with the
 * post id prepended, so a resumed run picks up exactly where this one
 * stopped. With `resume`, an existing file whose ids are a prefix of the
 * corpus is extended; anything else is PartialWriteDetected.
 */
EmbedCorpusResult embed_corpus(const Provider& provider, const corpus::Corpus& corpus,
                               const prompt::TemplateConfig& config, const std::filesystem::path& out_path,
                               const EmbedCorpusOptions& options);

} // namespace vecfold::embed

#endif
