#ifndef VECFOLD_CLUSTER_HPP
#define VECFOLD_CLUSTER_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vecfold/matrix.hpp"

/**
 * @file cluster.hpp
 *
 * @brief k-means over float32 rows: k-means++ seeding, Lloyd iterations and
 * mini-batch updates. The metric is squared Euclidean throughout; all
 * accumulations run in double.
 *
 * Every reduction is split into fixed 1024-row chunks whose partial results
 * are combined in chunk order, so a fit is bit-identical for any thread count.
 */

namespace vecfold::cluster {

inline constexpr std::size_t reduction_chunk = 1024;

struct KMeansModel {
    std::size_t k = 0;
    std::size_t d = 0;
    Matrix<double> centroids;
    std::vector<std::uint32_t> labels;
    double inertia = 0.0;
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    std::size_t restarts = 1;
    bool converged = false;
    std::string algorithm = "lloyd";
    /// Inertia after the initial assignment and after every iteration.
    std::vector<double> inertia_history;
};

struct Assignment {
    std::vector<std::uint32_t> labels;
    /// Euclidean (not squared) distance to the assigned centroid.
    std::vector<double> distances;
};

struct InitOptions {
    /// Candidates drawn per center; the one that lowers the potential most wins.
    /// 1 gives classic k-means++.
    std::size_t local_trials = 1;
    int threads = 1;
};

/// Trial count used by the greedy variant: 2 + floor(ln k).
std::size_t greedy_trials(std::size_t k);

/**
 * k-means++ seeding. The first center is row `Rng(seed).uniform_index(n)`;
 * each later one is drawn with probability proportional to its squared
 * distance from the nearest chosen center. Every center is a copy of a data
 * row. Throws TooFewRows when n < k.
 */
Matrix<double> kmeans_pp_init(FloatView data, std::size_t k, std::uint64_t seed, const InitOptions& options = {});

/**
 * Nearest-centroid assignment; ties go to the lowest centroid index.
 * Throws DimensionMismatch.
 */
Assignment assign(FloatView vectors, const Matrix<double>& centroids, int threads = 1);

/// Sum of squared distances from rows to their labelled centroids. Throws DimensionMismatch.
double inertia(FloatView data, const KMeansModel& model, int threads = 1);

/**
 * Lloyd iterations from the given centroids until the relative inertia
 * improvement falls below `tol`, labels stop changing, or `max_iter` is hit.
 * Clusters left empty by an update seize the row farthest from its centroid.
 */
KMeansModel fit_lloyd(FloatView data, const Matrix<double>& init, double tol, std::size_t max_iter,
                      int threads = 1);

struct MiniBatchOptions {
    /// Rows sampled for k-means++ seeding; 0 seeds on the full matrix.
    std::size_t init_size = 0;
    std::size_t init_trials = 1;
    int threads = 1;
};

/**
 * Mini-batch k-means with per-center learning rate 1/(points ever assigned
 * to the center). Labels and inertia come from one full assignment pass at
 * the end.
 */
KMeansModel fit_minibatch(FloatView data, std::size_t k, std::size_t batch_size, std::size_t max_iters,
                          std::uint64_t seed, const MiniBatchOptions& options = {});

struct KMeansConfig {
    std::size_t k = 20;
    double tol = 1e-4;
    std::size_t max_iter = 300;
    std::size_t restarts = 5;
    std::uint64_t seed = 0;
    /// 0 selects greedy_trials(k).
    std::size_t init_trials = 0;
    bool minibatch = false;
    std::size_t batch_size = 1024;
    std::size_t minibatch_iters = 100;

    void validate() const;
};

nlohmann::json config_to_json(const KMeansConfig& c);
KMeansConfig config_from_json(const nlohmann::json& j);

/// Run `restarts` seeded fits and keep the lowest inertia (earliest restart on ties).
KMeansModel fit(FloatView data, const KMeansConfig& config, int threads = 1);

/// Model JSON: {"k","d","seed","iterations","inertia","centroids",...}; labels are stored separately.
nlohmann::json model_to_json(const KMeansModel& model);
KMeansModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const KMeansModel& model);
KMeansModel load_model(const std::filesystem::path& path);

/// KLBL label file: magic "KLBL", n as u32 LE, then n u32 LE labels.
void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels);
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);

} // namespace vecfold::cluster

#endif
