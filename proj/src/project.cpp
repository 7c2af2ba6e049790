#include "vecfold/project.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include <Eigen/Dense>

#include "vecfold/error.hpp"
#include "vecfold/parallel.hpp"
#include "vecfold/random.hpp"

namespace vecfold::project {

using nlohmann::json;

std::vector<std::size_t> viz_sample(std::size_t n_total, std::size_t sample_size, std::uint64_t seed) {
    std::vector<std::size_t> out;
    if (sample_size >= n_total) {
        out.resize(n_total);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    // Floyd's algorithm: exactly sample_size draws, uniform over subsets.
    Rng rng(seed);
    std::vector<char> taken(n_total, 0);
    for (std::size_t j = n_total - sample_size; j < n_total; ++j) {
        std::size_t t = rng.uniform_index(j + 1);
        if (taken[t]) {
            t = j;
        }
        taken[t] = 1;
    }
    out.reserve(sample_size);
    for (std::size_t i = 0; i < n_total; ++i) {
        if (taken[i]) {
            out.push_back(i);
        }
    }
    return out;
}

Matrix<float> gather_rows(FloatView data, std::span<const std::size_t> rows) {
    Matrix<float> out(rows.size(), data.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= data.rows()) {
            throw Error(Errc::IndexOutOfRange, "sample index " + std::to_string(rows[r]) + " out of range");
        }
        const auto src = data.row(rows[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

/***************
 *** PCA *******
 ***************/

std::vector<double> PCAModel::explained_variance_ratio() const {
    std::vector<double> out(explained_variance.size(), 0.0);
    if (total_variance > 0.0) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = explained_variance[i] / total_variance;
        }
    }
    return out;
}

PCAModel pca_fit(FloatView data, std::size_t p) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    if (n < 2) {
        throw Error(Errc::RankDeficient, "PCA needs at least 2 rows");
    }
    if (p == 0 || p > std::min(n - 1, d)) {
        throw Error(Errc::InvalidArgument, "PCA component count must be in [1, min(n-1, d)]");
    }

    PCAModel model;
    model.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = data.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            model.mean[j] += x[j];
        }
    }
    for (auto& m : model.mean) {
        m /= static_cast<double>(n);
    }

    constexpr std::size_t block_rows = 4096;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::MatrixXd block;
    for (std::size_t begin = 0; begin < n; begin += block_rows) {
        const std::size_t end = std::min(n, begin + block_rows);
        block.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            const auto x = data.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                block(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i - begin)) = x[j] - model.mean[j];
            }
        }
        cov.selfadjointView<Eigen::Lower>().rankUpdate(block);
    }
    cov = cov.selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(n - 1);
    model.total_variance = cov.trace();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw Error(Errc::RankDeficient, "covariance eigendecomposition failed");
    }
    const auto& values = solver.eigenvalues();
    const auto& vectors = solver.eigenvectors();

    model.components = Matrix<double>(p, d);
    model.explained_variance.resize(p);
    for (std::size_t c = 0; c < p; ++c) {
        const auto col = static_cast<Eigen::Index>(d - 1 - c);
        double ev = values(col);
        model.explained_variance[c] = ev < 0.0 ? 0.0 : ev;

        Eigen::Index arg = 0;
        vectors.col(col).cwiseAbs().maxCoeff(&arg);
        const double sign = vectors(arg, col) < 0.0 ? -1.0 : 1.0;
        auto dst = model.components.row(c);
        for (std::size_t j = 0; j < d; ++j) {
            dst[j] = sign * vectors(static_cast<Eigen::Index>(j), col);
        }
    }
    return model;
}

Matrix<double> pca_transform(FloatView data, const PCAModel& model) {
    const std::size_t d = model.mean.size();
    if (data.cols() != d) {
        throw Error(Errc::DimensionMismatch, "PCA model width differs from data");
    }
    const std::size_t p = model.components.rows();
    Matrix<double> out(data.rows(), p);
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        const auto x = data.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            centered[j] = x[j] - model.mean[j];
        }
        for (std::size_t c = 0; c < p; ++c) {
            const auto comp = model.components.row(c);
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s += centered[j] * comp[j];
            }
            out(i, c) = s;
        }
    }
    return out;
}

Matrix<double> pca_init(FloatView data) {
    const auto model = pca_fit(data, 2);
    auto coords = pca_transform(data, model);
    double max_abs = 0.0;
    for (double v : coords.values()) {
        max_abs = std::max(max_abs, std::abs(v));
    }
    if (max_abs > 0.0) {
        for (double& v : coords.values()) {
            v *= 10.0 / max_abs;
        }
    }
    return coords;
}

/***************
 *** kNN *******
 ***************/

namespace {

struct Candidate {
    double dist;
    std::uint32_t index;
    bool operator<(const Candidate& o) const {
        return dist < o.dist || (dist == o.dist && index < o.index);
    }
};

double smooth_sigma(std::span<const Edge> nbrs, double rho, double target) {
    constexpr int max_iter = 64;
    constexpr double tol = 1e-5;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double sigma = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        double total = 0.0;
        for (const auto& e : nbrs) {
            total += std::exp(-std::max(0.0, e.distance - rho) / sigma);
        }
        if (std::abs(total - target) < tol) {
            break;
        }
        if (total > target) {
            hi = sigma;
            sigma = 0.5 * (lo + hi);
        } else {
            lo = sigma;
            sigma = std::isinf(hi) ? sigma * 2.0 : 0.5 * (lo + hi);
        }
    }
    return sigma;
}

} // namespace

std::vector<UndirectedEdge> NeighborGraph::symmetric_edges() const {
    std::vector<UndirectedEdge> out;
    out.reserve(edges.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& e : neighbors(i)) {
            const auto a = static_cast<std::uint32_t>(std::min<std::size_t>(i, e.target));
            const auto b = static_cast<std::uint32_t>(std::max<std::size_t>(i, e.target));
            out.push_back(UndirectedEdge{a, b, e.weight});
        }
    }
    std::sort(out.begin(), out.end(), [](const UndirectedEdge& x, const UndirectedEdge& y) {
        return x.a < y.a || (x.a == y.a && x.b < y.b);
    });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const UndirectedEdge& x, const UndirectedEdge& y) { return x.a == y.a && x.b == y.b; }),
              out.end());
    return out;
}

NeighborGraph knn_graph(FloatView data, std::size_t n_neighbors, int threads) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    if (n_neighbors == 0) {
        throw Error(Errc::InvalidArgument, "n_neighbors must be at least 1");
    }
    if (n <= n_neighbors) {
        throw Error(Errc::TooFewRows, "kNN graph needs more than n_neighbors=" + std::to_string(n_neighbors) + " rows");
    }

    NeighborGraph graph;
    graph.n = n;
    graph.n_neighbors = n_neighbors;
    graph.edges.resize(n * n_neighbors);
    graph.rho.resize(n);
    graph.sigma.resize(n);

    parallel_chunks(n, 64, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::priority_queue<Candidate> heap;
        std::vector<Candidate> sorted;
        for (std::size_t i = begin; i < end; ++i) {
            const auto x = data.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const auto y = data.row(j);
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double t = static_cast<double>(x[c]) - static_cast<double>(y[c]);
                    s += t * t;
                }
                const Candidate cand{s, static_cast<std::uint32_t>(j)};
                if (heap.size() < n_neighbors) {
                    heap.push(cand);
                } else if (cand < heap.top()) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            sorted.clear();
            while (!heap.empty()) {
                sorted.push_back(heap.top());
                heap.pop();
            }
            std::reverse(sorted.begin(), sorted.end());
            for (std::size_t r = 0; r < n_neighbors; ++r) {
                graph.edges[i * n_neighbors + r] = Edge{sorted[r].index, std::sqrt(sorted[r].dist), 0.0, 0.0};
            }
        }
    });

    double mean_distance = 0.0;
    for (const auto& e : graph.edges) {
        mean_distance += e.distance;
    }
    mean_distance /= static_cast<double>(graph.edges.size());

    const double target = std::log2(static_cast<double>(n_neighbors));
    constexpr double min_k_dist_scale = 1e-3;
    const double tiny = std::numeric_limits<double>::min();
    for (std::size_t i = 0; i < n; ++i) {
        auto nbrs = std::span<Edge>(graph.edges).subspan(i * n_neighbors, n_neighbors);
        const double rho = nbrs.front().distance;
        double local_mean = 0.0;
        for (const auto& e : nbrs) {
            local_mean += e.distance;
        }
        local_mean /= static_cast<double>(n_neighbors);

        double sigma = smooth_sigma(nbrs, rho, target);
        const double floor = min_k_dist_scale * (rho > 0.0 ? local_mean : mean_distance);
        sigma = std::max({sigma, floor, tiny});

        graph.rho[i] = rho;
        graph.sigma[i] = sigma;
        for (auto& e : nbrs) {
            const double m = std::exp(-std::max(0.0, e.distance - rho) / sigma);
            e.membership = std::clamp(m, tiny, 1.0);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (auto& e : std::span<Edge>(graph.edges).subspan(i * n_neighbors, n_neighbors)) {
            double reverse = 0.0;
            for (const auto& back : graph.neighbors(e.target)) {
                if (back.target == i) {
                    reverse = back.membership;
                    break;
                }
            }
            e.weight = std::clamp(fuzzy_union(e.membership, reverse), tiny, 1.0);
        }
    }
    return graph;
}

/***************
 *** Config ****
 ***************/

void ProjectionConfig::validate() const {
    if (sample_size == 0) throw Error(Errc::InvalidArgument, "sample_size must be at least 1");
    if (n_neighbors == 0) throw Error(Errc::InvalidArgument, "n_neighbors must be at least 1");
    if (epochs == 0) throw Error(Errc::InvalidArgument, "epochs must be at least 1");
    if (!(min_dist >= 0.0)) throw Error(Errc::InvalidArgument, "min_dist must be non-negative");
    if (method != "umap" && method != "pca") throw Error(Errc::InvalidArgument, "method must be umap or pca");
}

json config_to_json(const ProjectionConfig& c) {
    return json{{"sample_size", c.sample_size}, {"n_neighbors", c.n_neighbors}, {"min_dist", c.min_dist},
                {"epochs", c.epochs},           {"seed", c.seed},               {"method", c.method}};
}

ProjectionConfig config_from_json(const json& j) {
    ProjectionConfig c;
    if (!j.is_object()) {
        throw Error(Errc::ConfigError, "projection config must be an object");
    }
    try {
        c.sample_size = j.value("sample_size", c.sample_size);
        c.n_neighbors = j.value("n_neighbors", c.n_neighbors);
        c.min_dist = j.value("min_dist", c.min_dist);
        c.epochs = j.value("epochs", c.epochs);
        c.seed = j.value("seed", c.seed);
        c.method = j.value("method", c.method);
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("projection config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(Errc::ConfigError, e.what());
    }
    return c;
}

Projection2D project(FloatView data, const ProjectionConfig& config, int threads, bool deterministic) {
    config.validate();
    Projection2D out;
    out.source_sample = viz_sample(data.rows(), config.sample_size, config.seed);
    const auto sample = gather_rows(data, out.source_sample);
    const std::size_t n = sample.rows();

    if (n == 0) {
        out.coords = Matrix<double>(0, 2);
        return out;
    }
    if (n < 3) {
        // Too few points for a 2D PCA basis; place them on a line.
        out.coords = Matrix<double>(n, 2, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            out.coords(i, 0) = static_cast<double>(i);
        }
        return out;
    }

    auto init = pca_init(sample.view());
    if (config.method == "pca") {
        out.coords = std::move(init);
        return out;
    }
    const std::size_t k = std::min(config.n_neighbors, n - 1);
    const auto graph = knn_graph(sample.view(), k, threads);
    LayoutOptions options;
    options.epochs = config.epochs;
    options.seed = config.seed;
    options.min_dist = config.min_dist;
    options.parallel = !deterministic && threads > 1;
    options.threads = threads;
    auto layout = umap_layout(graph, init, options);
    out.coords = std::move(layout.coords);
    out.curve = layout.curve;
    return out;
}

/***************
 *** I/O *******
 ***************/

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_projection_csv(const std::filesystem::path& path, const Projection2D& projection) {
    if (projection.coords.rows() != projection.source_sample.size()) {
        throw Error(Errc::LengthMismatch, "projection rows differ from sample size");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::UnwritablePath, "cannot write " + path.string());
    }
    out << "row_index,x,y\n";
    for (std::size_t i = 0; i < projection.source_sample.size(); ++i) {
        out << projection.source_sample[i] << ',' << format_double(projection.coords(i, 0)) << ','
            << format_double(projection.coords(i, 1)) << '\n';
    }
}

Projection2D read_projection_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::FileNotReadable, "cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "row_index,x,y") {
        throw Error(Errc::FormatMismatch, path.string() + ": missing row_index,x,y header");
    }
    Projection2D out;
    std::vector<double> coords;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::size_t row = 0;
        double x = 0.0;
        double y = 0.0;
        const char* p = line.data();
        const char* e = line.data() + line.size();
        auto r1 = std::from_chars(p, e, row);
        if (r1.ec != std::errc() || r1.ptr == e || *r1.ptr != ',') {
            throw Error(Errc::FormatMismatch, path.string() + ": malformed line '" + line + "'");
        }
        auto r2 = std::from_chars(r1.ptr + 1, e, x);
        if (r2.ec != std::errc() || r2.ptr == e || *r2.ptr != ',') {
            throw Error(Errc::FormatMismatch, path.string() + ": malformed line '" + line + "'");
        }
        auto r3 = std::from_chars(r2.ptr + 1, e, y);
        if (r3.ec != std::errc() || r3.ptr != e) {
            throw Error(Errc::FormatMismatch, path.string() + ": malformed line '" + line + "'");
        }
        out.source_sample.push_back(row);
        coords.push_back(x);
        coords.push_back(y);
    }
    out.coords = Matrix<double>(out.source_sample.size(), 2, std::move(coords));
    return out;
}

void write_graph_csv(const std::filesystem::path& path, const NeighborGraph& graph) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::UnwritablePath, "cannot write " + path.string());
    }
    out << "src,dst,distance,weight\n";
    for (std::size_t i = 0; i < graph.n; ++i) {
        for (const auto& e : graph.neighbors(i)) {
            out << i << ',' << e.target << ',' << format_double(e.distance) << ',' << format_double(e.weight) << '\n';
        }
    }
}

} // namespace vecfold::project
