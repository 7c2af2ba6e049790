#include "vecfold/embed.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <optional>
#include <thread>

#include "vecfold/error.hpp"

namespace vecfold::embed {

using nlohmann::json;

std::string_view kind_name(ProviderKind kind) {
    switch (kind) {
    case ProviderKind::stub: return "stub";
    case ProviderKind::precomputed_file: return "precomputed_file";
    case ProviderKind::remote: return "remote";
    }
    return "stub";
}

std::string_view pooling_name(Pooling pooling) {
    return pooling == Pooling::mean ? "mean" : "last_token";
}

std::string_view image_policy_name(ImagePolicy policy) {
    return policy == ImagePolicy::first_only ? "first_only" : "all";
}

void ProviderDescriptor::validate() const {
    if (dim < 2) {
        throw Error(Errc::InvalidArgument, "provider dim must be at least 2");
    }
    if (kind != ProviderKind::stub && endpoint_or_path.empty()) {
        throw Error(Errc::InvalidArgument, "endpoint_or_path is required for " + std::string(kind_name(kind)));
    }
}

json descriptor_to_json(const ProviderDescriptor& d) {
    return json{{"kind", kind_name(d.kind)},
                {"dim", d.dim},
                {"pooling", pooling_name(d.pooling)},
                {"normalize", d.normalize},
                {"image_policy", image_policy_name(d.image_policy)},
                {"endpoint_or_path", d.endpoint_or_path},
                {"seed", d.seed},
                {"images_root", d.images_root},
                {"max_in_flight", d.max_in_flight},
                {"timeout_seconds", d.timeout_seconds}};
}

ProviderDescriptor descriptor_from_json(const json& j) {
    ProviderDescriptor d;
    if (!j.is_object()) {
        throw Error(Errc::ConfigError, "provider config must be an object");
    }
    try {
        const auto kind = j.value("kind", std::string("stub"));
        if (kind == "stub") d.kind = ProviderKind::stub;
        else if (kind == "precomputed_file") d.kind = ProviderKind::precomputed_file;
        else if (kind == "remote") d.kind = ProviderKind::remote;
        else throw Error(Errc::ConfigError, "unknown provider kind '" + kind + "'");

        const auto pooling = j.value("pooling", std::string("mean"));
        if (pooling == "mean") d.pooling = Pooling::mean;
        else if (pooling == "last_token") d.pooling = Pooling::last_token;
        else throw Error(Errc::ConfigError, "unknown pooling '" + pooling + "'");

        const auto policy = j.value("image_policy", std::string("first_only"));
        if (policy == "first_only") d.image_policy = ImagePolicy::first_only;
        else if (policy == "all") d.image_policy = ImagePolicy::all;
        else throw Error(Errc::ConfigError, "unknown image_policy '" + policy + "'");

        d.dim = j.value("dim", d.dim);
        d.normalize = j.value("normalize", d.normalize);
        d.endpoint_or_path = j.value("endpoint_or_path", d.endpoint_or_path);
        d.seed = j.value("seed", d.seed);
        d.images_root = j.value("images_root", d.images_root);
        d.max_in_flight = j.value("max_in_flight", d.max_in_flight);
        d.timeout_seconds = j.value("timeout_seconds", d.timeout_seconds);
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("provider config: ") + e.what());
    }
    try {
        d.validate();
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    return d;
}

/******************
 *** Provider *****
 ******************/

EmbeddingVector Provider::finish(std::vector<float> values, const prompt::TemplatedPost& templated,
                                 bool truncated) const {
    if (values.size() != descriptor_.dim) {
        throw Error(Errc::DimensionMismatch, "provider returned " + std::to_string(values.size()) +
                                                 " values, expected " + std::to_string(descriptor_.dim));
    }
    double sq = 0.0;
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw Error(Errc::NonFiniteData, "provider returned a non-finite value");
        }
        sq += static_cast<double>(v) * v;
    }
    if (descriptor_.normalize) {
        if (sq == 0.0) {
            // A zero vector has no direction; fall back to the first axis.
            values[0] = 1.0f;
        } else {
            const double norm = std::sqrt(sq);
            for (auto& v : values) {
                v = static_cast<float>(v / norm);
            }
        }
    }
    return EmbeddingVector{std::move(values), templated.post_id, truncated};
}

std::span<const std::string> Provider::consumed_images(const prompt::TemplatedPost& templated) const {
    std::span<const std::string> refs(templated.image_refs);
    if (descriptor_.image_policy == ImagePolicy::first_only && refs.size() > 1) {
        return refs.first(1);
    }
    return refs;
}

/******************
 *** Stub *********
 ******************/

std::uint64_t stub_hash(std::string_view token, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    constexpr std::uint64_t prime = 0x100000001b3ULL;
    for (int i = 0; i < 8; ++i) {
        h ^= (seed >> (8 * i)) & 0xFF;
        h *= prime;
    }
    for (unsigned char c : token) {
        h ^= c;
        h *= prime;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ULL;
    h ^= h >> 33;
    return h;
}

StubProvider::StubProvider(ProviderDescriptor descriptor) : Provider(std::move(descriptor)) {
    this->descriptor().validate();
}

std::vector<std::string> StubProvider::tokens(const prompt::TemplatedPost& templated) const {
    std::vector<std::string> out;
    std::string current;
    for (unsigned char c : templated.text) {
        if (std::isspace(c)) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    for (const auto& ref : consumed_images(templated)) {
        const auto slash = ref.find_last_of('/');
        std::string base = slash == std::string::npos ? ref : ref.substr(slash + 1);
        std::transform(base.begin(), base.end(), base.begin(), [](unsigned char c) { return std::tolower(c); });
        if (!base.empty()) {
            out.push_back(std::move(base));
        }
    }
    return out;
}

EmbeddingVector StubProvider::embed_post(const prompt::TemplatedPost& templated) const {
    const auto& desc = descriptor();
    const auto toks = tokens(templated);
    std::vector<std::vector<float>> sequence;
    sequence.reserve(toks.size());
    for (const auto& tok : toks) {
        const auto h = stub_hash(tok, desc.seed);
        std::vector<float> one_hot(desc.dim, 0.0f);
        one_hot[h % desc.dim] = (h >> 63) ? -1.0f : 1.0f;
        sequence.push_back(std::move(one_hot));
    }
    std::vector<float> pooled = sequence.empty() ? std::vector<float>(desc.dim, 0.0f)
                                                 : pool_tokens(sequence, desc.pooling);
    const bool truncated = desc.image_policy == ImagePolicy::first_only && templated.original_image_count >= 2;
    return finish(std::move(pooled), templated, truncated);
}

/******************
 *** Precomputed **
 ******************/

PrecomputedFileProvider::PrecomputedFileProvider(ProviderDescriptor descriptor) :
    Provider(std::move(descriptor)),
    reader_(store::MatrixReader::open(this->descriptor().endpoint_or_path)) {
    this->descriptor().validate();
    if (reader_.cols() != this->descriptor().dim) {
        throw Error(Errc::DimensionMismatch, "precomputed matrix has d=" + std::to_string(reader_.cols()) +
                                                 ", provider expects " + std::to_string(this->descriptor().dim));
    }
    const auto ids = reader_.ids();
    if (ids.size() != reader_.rows()) {
        throw Error(Errc::FormatMismatch, "precomputed id sidecar does not cover every row");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        rows_.emplace(ids[i], i);
    }
}

EmbeddingVector PrecomputedFileProvider::embed_post(const prompt::TemplatedPost& templated) const {
    auto it = rows_.find(templated.post_id);
    if (it == rows_.end()) {
        throw Error(Errc::ProviderUnavailable, "no precomputed embedding for post '" + templated.post_id + "'");
    }
    const bool truncated = descriptor().image_policy == ImagePolicy::first_only && templated.original_image_count >= 2;
    return finish(reader_.get_row(it->second), templated, truncated);
}

std::unique_ptr<Provider> make_provider(const ProviderDescriptor& descriptor) {
    switch (descriptor.kind) {
    case ProviderKind::stub: return std::make_unique<StubProvider>(descriptor);
    case ProviderKind::precomputed_file: return std::make_unique<PrecomputedFileProvider>(descriptor);
    case ProviderKind::remote: return std::make_unique<RemoteProvider>(descriptor);
    }
    throw Error(Errc::InvalidArgument, "unknown provider kind");
}

/******************
 *** Pooling ******
 ******************/

std::vector<float> pool_tokens(std::span<const std::vector<float>> sequence, Pooling strategy) {
    if (sequence.empty()) {
        throw Error(Errc::EmptySequence, "cannot pool an empty token sequence");
    }
    const std::size_t width = sequence.front().size();
    for (const auto& v : sequence) {
        if (v.size() != width) {
            throw Error(Errc::RaggedSequence, "token vectors differ in length");
        }
    }
    if (strategy == Pooling::last_token) {
        return sequence.back();
    }
    std::vector<double> sum(width, 0.0);
    for (const auto& v : sequence) {
        for (std::size_t j = 0; j < width; ++j) {
            sum[j] += v[j];
        }
    }
    std::vector<float> out(width);
    const double count = static_cast<double>(sequence.size());
    for (std::size_t j = 0; j < width; ++j) {
        out[j] = static_cast<float>(sum[j] / count);
    }
    return out;
}

/******************
 *** Corpus *******
 ******************/

EmbedCorpusResult embed_corpus(const Provider& provider, const corpus::Corpus& corpus,
                               const prompt::TemplateConfig& config, const std::filesystem::path& out_path,
                               const EmbedCorpusOptions& options) {
    if (options.batch_size == 0) {
        throw Error(Errc::InvalidArgument, "batch size must be positive");
    }
    config.validate();

    std::optional<store::MatrixWriter> writer;
    EmbedCorpusResult result;
    if (options.resume && std::filesystem::exists(out_path)) {
        writer.emplace(store::MatrixWriter::resume(out_path));
        if (writer->dim() != provider.dim()) {
            throw Error(Errc::PartialWriteDetected, out_path.string() + ": existing matrix width differs from provider");
        }
        const auto& done = writer->ids();
        if (done.size() > corpus.size()) {
            throw Error(Errc::PartialWriteDetected, out_path.string() + ": more rows than corpus posts");
        }
        for (std::size_t i = 0; i < done.size(); ++i) {
            if (done[i] != corpus[i].id) {
                throw Error(Errc::PartialWriteDetected,
                            out_path.string() + ": row " + std::to_string(i) + " belongs to a different corpus");
            }
        }
        result.resumed_rows = done.size();
    } else {
        writer.emplace(store::MatrixWriter::create(out_path, static_cast<std::uint32_t>(provider.dim())));
    }

    std::size_t workers = static_cast<std::size_t>(std::max(1, options.threads));
    if (provider.max_in_flight() > 0) {
        workers = std::min(workers, provider.max_in_flight());
    }
    workers = std::min(workers, options.batch_size);

    // A provider that sees one image per post gets one image token per post.
    prompt::TemplateConfig effective = config;
    if (provider.descriptor().image_policy == ImagePolicy::first_only) {
        effective.max_images = 1;
    }

    std::atomic<std::size_t> calls{0};
    for (std::size_t begin = writer->rows(); begin < corpus.size(); begin += options.batch_size) {
        const std::size_t end = std::min(corpus.size(), begin + options.batch_size);
        std::vector<std::optional<EmbeddingVector>> slots(end - begin);
        std::atomic<std::size_t> next{begin};
        std::atomic<bool> stop{false};
        std::mutex failure_mutex;
        std::size_t failed_at = end;
        std::exception_ptr failure;

        auto work = [&]() {
            while (!stop.load()) {
                const std::size_t i = next.fetch_add(1);
                if (i >= end) {
                    return;
                }
                try {
                    ++calls;
                    auto templated = prompt::render_template(corpus[i], effective);
                    auto vec = provider.embed_post(templated);
                    if (vec.dim() != writer->dim()) {
                        throw Error(Errc::DimensionMismatch, "provider returned width " + std::to_string(vec.dim()));
                    }
                    slots[i - begin] = std::move(vec);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (i < failed_at) {
                        failed_at = i;
                        failure = std::current_exception();
                    }
                    stop = true;
                }
            }
        };

        const std::size_t nthreads = std::min(workers, end - begin);
        if (nthreads <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < nthreads; ++t) {
                pool.emplace_back(work);
            }
            for (auto& t : pool) {
                t.join();
            }
        }

        for (std::size_t i = begin; i < failed_at; ++i) {
            auto& vec = *slots[i - begin];
            writer->append_row(vec.values, corpus[i].id);
            if (vec.truncated_images) {
                ++result.truncated_posts;
            }
        }
        writer->flush();

        if (failure) {
            result.provider_calls = calls.load();
            try {
                std::rethrow_exception(failure);
            } catch (Error& e) {
                e.add_context("post '" + corpus[failed_at].id + "'");
                throw;
            }
        }
    }
    writer->close();
    result.provider_calls = calls.load();
    result.rows = corpus.size();
    return result;
}

} // namespace vecfold::embed
