#include <cstring>
#include <fstream>

#include "vecfold/cluster.hpp"
#include "vecfold/error.hpp"

namespace vecfold::cluster {

using nlohmann::json;

json config_to_json(const KMeansConfig& c) {
    return json{{"k", c.k},
                {"tol", c.tol},
                {"max_iter", c.max_iter},
                {"restarts", c.restarts},
                {"seed", c.seed},
                {"init_trials", c.init_trials},
                {"minibatch", {{"enabled", c.minibatch}, {"batch_size", c.batch_size}, {"max_iters", c.minibatch_iters}}}};
}

KMeansConfig config_from_json(const json& j) {
    KMeansConfig c;
    if (!j.is_object()) {
        throw Error(Errc::ConfigError, "kmeans config must be an object");
    }
    try {
        c.k = j.value("k", c.k);
        c.tol = j.value("tol", c.tol);
        c.max_iter = j.value("max_iter", c.max_iter);
        c.restarts = j.value("restarts", c.restarts);
        c.seed = j.value("seed", c.seed);
        c.init_trials = j.value("init_trials", c.init_trials);
        if (auto mb = j.find("minibatch"); mb != j.end()) {
            c.minibatch = mb->value("enabled", c.minibatch);
            c.batch_size = mb->value("batch_size", c.batch_size);
            c.minibatch_iters = mb->value("max_iters", c.minibatch_iters);
        }
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("kmeans config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    return c;
}

json model_to_json(const KMeansModel& model) {
    json centroids = json::array();
    for (std::size_t c = 0; c < model.centroids.rows(); ++c) {
        const auto row = model.centroids.row(c);
        centroids.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return json{{"k", model.k},
                {"d", model.d},
                {"seed", model.seed},
                {"iterations", model.iterations},
                {"inertia", model.inertia},
                {"restarts", model.restarts},
                {"converged", model.converged},
                {"algorithm", model.algorithm},
                {"metric", "squared_euclidean"},
                {"centroids", std::move(centroids)}};
}

KMeansModel model_from_json(const json& j) {
    KMeansModel model;
    try {
        model.k = j.at("k").get<std::size_t>();
        model.d = j.at("d").get<std::size_t>();
        model.seed = j.at("seed").get<std::uint64_t>();
        model.iterations = j.at("iterations").get<std::size_t>();
        model.inertia = j.at("inertia").get<double>();
        model.restarts = j.value("restarts", std::size_t{1});
        model.converged = j.value("converged", false);
        model.algorithm = j.value("algorithm", std::string("lloyd"));
        const auto& rows = j.at("centroids");
        if (rows.size() != model.k) {
            throw Error(Errc::FormatMismatch, "model file: centroid count differs from k");
        }
        model.centroids = Matrix<double>(model.k, model.d);
        for (std::size_t c = 0; c < model.k; ++c) {
            const auto values = rows[c].get<std::vector<double>>();
            if (values.size() != model.d) {
                throw Error(Errc::FormatMismatch, "model file: centroid width differs from d");
            }
            std::copy(values.begin(), values.end(), model.centroids.row(c).begin());
        }
    } catch (const json::exception& e) {
        throw Error(Errc::FormatMismatch, std::string("model file: ") + e.what());
    }
    return model;
}

void save_model(const std::filesystem::path& path, const KMeansModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::UnwritablePath, "cannot write " + path.string());
    }
    out << model_to_json(model).dump() << '\n';
}

KMeansModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::FileNotReadable, "cannot read " + path.string());
    }
    try {
        return model_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(Errc::FormatMismatch, path.string() + ": " + e.what());
    }
}

namespace {

void put_u32(unsigned char* dst, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        dst[i] = static_cast<unsigned char>(v >> (8 * i));
    }
}

std::uint32_t get_u32(const unsigned char* src) {
    return static_cast<std::uint32_t>(src[0]) | (static_cast<std::uint32_t>(src[1]) << 8) |
           (static_cast<std::uint32_t>(src[2]) << 16) | (static_cast<std::uint32_t>(src[3]) << 24);
}

} // namespace

void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels) {
    if (labels.size() > 0xFFFFFFFFull) {
        throw Error(Errc::InvalidArgument, "label count exceeds the u32 header");
    }
    std::vector<unsigned char> bytes(8 + 4 * labels.size());
    std::memcpy(bytes.data(), "KLBL", 4);
    put_u32(bytes.data() + 4, static_cast<std::uint32_t>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        put_u32(bytes.data() + 8 + 4 * i, labels[i]);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
        throw Error(Errc::UnwritablePath, "cannot write " + path.string());
    }
}

std::vector<std::uint32_t> read_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::FileNotReadable, "cannot read " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "KLBL", 4) != 0) {
        throw Error(Errc::FormatMismatch, path.string() + ": not a KLBL label file");
    }
    const std::uint32_t n = get_u32(bytes.data() + 4);
    if (bytes.size() != 8 + 4 * static_cast<std::size_t>(n)) {
        throw Error(Errc::TruncatedFile, path.string() + ": size inconsistent with label count");
    }
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = get_u32(bytes.data() + 8 + 4 * i);
    }
    return labels;
}

} // namespace vecfold::cluster
