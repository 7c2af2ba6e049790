#ifndef VECFOLD_PROJECT_HPP
#define VECFOLD_PROJECT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vecfold/matrix.hpp"

namespace vecfold::project {

/**
 * Row indices for visualization, ascending. Returns every index when
 * `sample_size >= n_total`, otherwise `sample_size` distinct indices drawn
 * uniformly without replacement (deterministic per seed).
 */
std::vector<std::size_t> viz_sample(std::size_t n_total, std::size_t sample_size, std::uint64_t seed);

/// Copy the listed rows into a dense matrix.
Matrix<float> gather_rows(FloatView data, std::span<const std::size_t> rows);

struct PCAModel {
    std::vector<double> mean;
    /// p x d, orthonormal rows, sign fixed so each row's largest-magnitude entry is positive.
    Matrix<double> components;
    /// Descending, clamped at 0.
    std::vector<double> explained_variance;
    /// Trace of the sample covariance.
    double total_variance = 0.0;

    std::vector<double> explained_variance_ratio() const;
};

/**
 * Top-p principal axes of the sample covariance (denominator n - 1).
 * Throws RankDeficient when n < 2 and InvalidArgument when p > min(n - 1, d).
 */
PCAModel pca_fit(FloatView data, std::size_t p);

/// (x - mean) * components^T, n x p.
Matrix<double> pca_transform(FloatView data, const PCAModel& model);

struct Edge {
    std::uint32_t target;
    double distance;
    /// Directed smooth-kernel membership exp(-max(0, d - rho) / sigma).
    double membership;
    /// Symmetrized weight w_ij + w_ji - w_ij * w_ji.
    double weight;
};

struct UndirectedEdge {
    std::uint32_t a;
    std::uint32_t b;
    double weight;
};

/**
 * @brief Exact k-nearest-neighbor graph with fuzzy membership weights.
 *
 * Out-edges are stored row-major: node i owns edges [i*k, (i+1)*k), sorted by
 * distance with ties toward the lower target index.
 */
struct NeighborGraph {
    std::size_t n = 0;
    std::size_t n_neighbors = 0;
    std::vector<Edge> edges;
    std::vector<double> rho;
    std::vector<double> sigma;

    std::span<const Edge> neighbors(std::size_t i) const {
        return std::span<const Edge>(edges).subspan(i * n_neighbors, n_neighbors);
    }

    /// Each unordered pair {a < b} once, sorted by (a, b).
    std::vector<UndirectedEdge> symmetric_edges() const;
};

/// Probabilistic t-conorm used to symmetrize memberships.
inline double fuzzy_union(double a, double b) { return a + b - a * b; }

/**
 * Brute-force Euclidean kNN (self excluded), then per-node rho (nearest
 * neighbor distance) and sigma by bisection so that
 * sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(n_neighbors).
 * Throws TooFewRows unless n > n_neighbors.
 */
NeighborGraph knn_graph(FloatView data, std::size_t n_neighbors, int threads = 1);

struct CurveParams {
    double a;
    double b;
};

/// Least-squares fit of 1 / (1 + a x^(2b)) to the min_dist-shifted exponential on [0, 3 * spread].
CurveParams fit_curve(double min_dist, double spread = 1.0);

struct LayoutOptions {
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    double min_dist = 0.1;
    double spread = 1.0;
    double negative_sample_rate = 5.0;
    double learning_rate = 1.0;
    /// Asynchronous multi-threaded updates. Faster, not reproducible.
    bool parallel = false;
    int threads = 1;
};

struct LayoutResult {
    Matrix<double> coords;
    CurveParams curve;
};

/**
 * Stochastic gradient descent on the fuzzy cross-entropy between the graph
 * and the 2D layout: attraction along sampled edges, repulsion against
 * negative samples. `init` is n x 2.
 * Throws NonFiniteGradient if any coordinate stops being finite.
 */
LayoutResult umap_layout(const NeighborGraph& graph, const Matrix<double>& init, const LayoutOptions& options);

/// Top-2 PCA coordinates scaled so the largest magnitude is 10.
Matrix<double> pca_init(FloatView data);

struct ProjectionConfig {
    std::size_t sample_size = 70000;
    std::size_t n_neighbors = 15;
    double min_dist = 0.1;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    /// "umap" or "pca".
    std::string method = "umap";

    void validate() const;
};

nlohmann::json config_to_json(const ProjectionConfig& c);
ProjectionConfig config_from_json(const nlohmann::json& j);

struct Projection2D {
    Matrix<double> coords;
    std::vector<std::size_t> source_sample;
    CurveParams curve{0.0, 0.0};
};

/// Sample, build the graph, initialize from PCA and lay out.
Projection2D project(FloatView data, const ProjectionConfig& config, int threads = 1, bool deterministic = true);

/// CSV with header `row_index,x,y`.
void write_projection_csv(const std::filesystem::path& path, const Projection2D& projection);
Projection2D read_projection_csv(const std::filesystem::path& path);

/// Debug dump, CSV with header `src,dst,distance,weight`.
void write_graph_csv(const std::filesystem::path& path, const NeighborGraph& graph);

/// Shortest round-trip decimal form.
std::string format_double(double value);

} // namespace vecfold::project

#endif
