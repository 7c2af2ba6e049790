#include <cmath>
#include <fstream>
#include <iterator>

#include "httplib.h"
#include "vecfold/embed.hpp"
#include "vecfold/error.hpp"

namespace vecfold::embed {

using nlohmann::json;

std::string base64_encode(std::span<const unsigned char> bytes) {
    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += alphabet[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

namespace {

httplib::Client make_client(const ProviderDescriptor& d) {
    httplib::Client client(d.endpoint_or_path);
    const auto secs = static_cast<time_t>(d.timeout_seconds);
    const auto usecs = static_cast<time_t>((d.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    return client;
}

std::vector<unsigned char> read_image(const std::string& root, const std::string& ref) {
    const std::filesystem::path path = root.empty() ? std::filesystem::path(ref) : std::filesystem::path(root) / ref;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ImageUnreadable(ref);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw ImageUnreadable(ref);
    }
    return bytes;
}

json parse_body(const httplib::Result& res, const std::string& what) {
    if (!res) {
        throw Error(Errc::ProviderUnavailable, what + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(Errc::ProviderUnavailable, what + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(Errc::ProviderUnavailable, what + ": malformed response: " + e.what());
    }
}

} // namespace

RemoteProvider::RemoteProvider(ProviderDescriptor descriptor) : Provider(std::move(descriptor)) {
    this->descriptor().validate();
    auto client = make_client(this->descriptor());
    const auto health = parse_body(client.Get("/v1/health"), "GET /v1/health");
    if (!health.is_object() || health.value("status", std::string()) != "ok") {
        throw Error(Errc::ProviderUnavailable, "embedding service is not healthy");
    }
    const auto dim = health.value("dim", std::size_t{0});
    if (dim != this->descriptor().dim) {
        throw Error(Errc::DimensionMismatch, "service advertises dim " + std::to_string(dim) + ", expected " +
                                                 std::to_string(this->descriptor().dim));
    }
    model_tag_ = health.value("model_tag", std::string());
}

std::size_t RemoteProvider::max_in_flight() const {
    return descriptor().max_in_flight == 0 ? 4 : descriptor().max_in_flight;
}

json RemoteProvider::build_request(const prompt::TemplatedPost& templated) const {
    json images = json::array();
    for (const auto& ref : consumed_images(templated)) {
        images.push_back(base64_encode(read_image(descriptor().images_root, ref)));
    }
    return json{{"id", templated.post_id},
                {"text", templated.text},
                {"images", std::move(images)},
                {"pooling", pooling_name(descriptor().pooling)},
                {"normalize", descriptor().normalize}};
}

EmbeddingVector RemoteProvider::embed_post(const prompt::TemplatedPost& templated) const {
    const auto request = build_request(templated);
    auto client = make_client(descriptor());
    const auto body = parse_body(client.Post("/v1/embed", request.dump(), "application/json"), "POST /v1/embed");

    std::vector<float> values;
    try {
        if (body.at("id").get<std::string>() != templated.post_id) {
            throw Error(Errc::ProviderUnavailable, "response id does not match request");
        }
        const auto& embedding = body.at("embedding");
        if (!embedding.is_array()) {
            throw Error(Errc::ProviderUnavailable, "response embedding is not an array");
        }
        values.reserve(embedding.size());
        for (const auto& v : embedding) {
            values.push_back(static_cast<float>(v.get<double>()));
        }
        if (body.at("dim").get<std::size_t>() != values.size()) {
            throw Error(Errc::DimensionMismatch, "response dim disagrees with embedding length");
        }
    } catch (const json::exception& e) {
        throw Error(Errc::ProviderUnavailable, std::string("malformed embed response: ") + e.what());
    }
    const bool local_truncation =
        descriptor().image_policy == ImagePolicy::first_only && templated.original_image_count >= 2;
    const bool truncated = local_truncation || body.value("truncated_images", false);
    return finish(std::move(values), templated, truncated);
}

} // namespace vecfold::embed
