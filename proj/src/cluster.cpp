#include "vecfold/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vecfold/error.hpp"
#include "vecfold/parallel.hpp"
#include "vecfold/random.hpp"

namespace vecfold::cluster {

namespace {

inline double squared_distance(std::span<const float> x, std::span<const double> c) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double t = static_cast<double>(x[j]) - c[j];
        s += t * t;
    }
    return s;
}

inline double squared_distance(std::span<const float> x, std::span<const float> y) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double t = static_cast<double>(x[j]) - static_cast<double>(y[j]);
        s += t * t;
    }
    return s;
}

void check_finite(FloatView data) {
    for (float v : data.data()) {
        if (!std::isfinite(v)) {
            throw Error(Errc::NonFiniteData, "input matrix contains NaN or infinite values");
        }
    }
}

/// Labels plus squared distances, and the chunk-ordered total.
struct SquaredAssignment {
    std::vector<std::uint32_t> labels;
    std::vector<double> sq;
    double total = 0.0;
};

SquaredAssignment assign_squared(FloatView data, const Matrix<double>& centroids, int threads) {
    const std::size_t n = data.rows();
    const std::size_t k = centroids.rows();
    SquaredAssignment out;
    out.labels.resize(n);
    out.sq.resize(n);
    std::vector<double> partial(chunk_count(n, reduction_chunk), 0.0);

    parallel_chunks(n, reduction_chunk, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        double local = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto x = data.row(i);
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double dist = squared_distance(x, centroids.row(c));
                if (dist < best) {
                    best = dist;
                    best_c = static_cast<std::uint32_t>(c);
                }
            }
            out.labels[i] = best_c;
            out.sq[i] = best;
            local += best;
        }
        partial[chunk] = local;
    });
    for (double p : partial) {
        out.total += p;
    }
    return out;
}

/// Column means of the rows in each cluster, reduced in chunk order.
Matrix<double> cluster_sums(FloatView data, std::span<const std::uint32_t> labels, std::size_t k,
                            std::vector<std::size_t>& counts, int threads) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    const std::size_t nchunks = chunk_count(n, reduction_chunk);
    std::vector<Matrix<double>> sums(nchunks);
    std::vector<std::vector<std::size_t>> chunk_counts(nchunks);

    parallel_chunks(n, reduction_chunk, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        Matrix<double> local(k, d, 0.0);
        std::vector<std::size_t> local_counts(k, 0);
        for (std::size_t i = begin; i < end; ++i) {
            auto dst = local.row(labels[i]);
            const auto x = data.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                dst[j] += x[j];
            }
            ++local_counts[labels[i]];
        }
        sums[chunk] = std::move(local);
        chunk_counts[chunk] = std::move(local_counts);
    });

    Matrix<double> total(k, d, 0.0);
    counts.assign(k, 0);
    for (std::size_t c = 0; c < nchunks; ++c) {
        for (std::size_t v = 0; v < total.values().size(); ++v) {
            total.values()[v] += sums[c].values()[v];
        }
        for (std::size_t j = 0; j < k; ++j) {
            counts[j] += chunk_counts[c][j];
        }
    }
    return total;
}

} // namespace

std::size_t greedy_trials(std::size_t k) {
    return 2 + static_cast<std::size_t>(std::floor(std::log(static_cast<double>(std::max<std::size_t>(k, 1)))));
}

Matrix<double> kmeans_pp_init(FloatView data, std::size_t k, std::uint64_t seed, const InitOptions& options) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    if (k == 0) {
        throw Error(Errc::InvalidArgument, "k must be at least 1");
    }
    if (n < k) {
        throw Error(Errc::TooFewRows, "k-means++ needs at least k=" + std::to_string(k) + " rows, got " + std::to_string(n));
    }
    const std::size_t trials = std::max<std::size_t>(1, options.local_trials);

    Rng rng(seed);
    Matrix<double> centers(k, d);
    std::vector<char> chosen(n, 0);

    auto copy_row = [&](std::size_t c, std::size_t row) {
        const auto src = data.row(row);
        std::copy(src.begin(), src.end(), centers.row(c).begin());
        chosen[row] = 1;
    };

    const std::size_t first = rng.uniform_index(n);
    copy_row(0, first);

    std::vector<double> nearest(n);
    parallel_chunks(n, reduction_chunk, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        const auto f = data.row(first);
        for (std::size_t i = begin; i < end; ++i) {
            nearest[i] = squared_distance(data.row(i), f);
        }
    });

    std::vector<double> cumulative(n);
    std::vector<double> candidate_dist(n);
    std::vector<double> best_dist(n);
    for (std::size_t c = 1; c < k; ++c) {
        std::partial_sum(nearest.begin(), nearest.end(), cumulative.begin());
        const double total = cumulative.back();

        double best_potential = std::numeric_limits<double>::infinity();
        std::size_t best_row = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t row;
            if (total > 0.0) {
                const double u = rng.uniform01() * total;
                row = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
                row = std::min(row, n - 1);
                // Rounding can land on a zero-weight row at the end; walk back to a weighted one.
                while (nearest[row] == 0.0 && row > 0) {
                    --row;
                }
            } else {
                // Every remaining row duplicates a center: take the first unused row.
                row = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
            }

            if (trials == 1) {
                best_row = row;
                break;
            }

            std::vector<double> partial(chunk_count(n, reduction_chunk), 0.0);
            const auto cand = data.row(row);
            parallel_chunks(n, reduction_chunk, options.threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                double local = 0.0;
                for (std::size_t i = begin; i < end; ++i) {
                    candidate_dist[i] = std::min(nearest[i], squared_distance(data.row(i), cand));
                    local += candidate_dist[i];
                }
                partial[chunk] = local;
            });
            const double potential = std::accumulate(partial.begin(), partial.end(), 0.0);
            if (potential < best_potential) {
                best_potential = potential;
                best_row = row;
                best_dist.swap(candidate_dist);
            }
        }

        copy_row(c, best_row);
        if (trials == 1) {
            const auto picked = data.row(best_row);
            parallel_chunks(n, reduction_chunk, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
                for (std::size_t i = begin; i < end; ++i) {
                    nearest[i] = std::min(nearest[i], squared_distance(data.row(i), picked));
                }
            });
        } else {
            nearest.swap(best_dist);
            best_dist.resize(n);
        }
    }
    return centers;
}

Assignment assign(FloatView vectors, const Matrix<double>& centroids, int threads) {
    if (centroids.rows() == 0) {
        throw Error(Errc::InvalidArgument, "no centroids");
    }
    if (vectors.cols() != centroids.cols()) {
        throw Error(Errc::DimensionMismatch, "vector width " + std::to_string(vectors.cols()) +
                                                 " differs from centroid width " + std::to_string(centroids.cols()));
    }
    auto sq = assign_squared(vectors, centroids, threads);
    Assignment out;
    out.labels = std::move(sq.labels);
    out.distances.resize(sq.sq.size());
    std::transform(sq.sq.begin(), sq.sq.end(), out.distances.begin(), [](double v) { return std::sqrt(v); });
    return out;
}

double inertia(FloatView data, const KMeansModel& model, int threads) {
    if (data.cols() != model.centroids.cols() || model.labels.size() != data.rows()) {
        throw Error(Errc::DimensionMismatch, "model does not match matrix shape");
    }
    std::vector<double> partial(chunk_count(data.rows(), reduction_chunk), 0.0);
    parallel_chunks(data.rows(), reduction_chunk, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        double local = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            if (model.labels[i] >= model.centroids.rows()) {
                throw Error(Errc::DimensionMismatch, "label out of range at row " + std::to_string(i));
            }
            local += squared_distance(data.row(i), model.centroids.row(model.labels[i]));
        }
        partial[chunk] = local;
    });
    return std::accumulate(partial.begin(), partial.end(), 0.0);
}

KMeansModel fit_lloyd(FloatView data, const Matrix<double>& init, double tol, std::size_t max_iter, int threads) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    const std::size_t k = init.rows();
    if (k == 0) {
        throw Error(Errc::InvalidArgument, "k must be at least 1");
    }
    if (n < k) {
        throw Error(Errc::TooFewRows, "Lloyd needs at least k=" + std::to_string(k) + " rows, got " + std::to_string(n));
    }
    if (init.cols() != d) {
        throw Error(Errc::DimensionMismatch, "initial centroids have the wrong width");
    }
    if (!(tol > 0.0)) {
        throw Error(Errc::InvalidArgument, "tol must be positive");
    }
    check_finite(data);

    KMeansModel model;
    model.k = k;
    model.d = d;
    model.centroids = init;

    auto current = assign_squared(data, model.centroids, threads);
    model.inertia_history.push_back(current.total);

    std::vector<std::size_t> counts;
    for (std::size_t iter = 1; iter <= max_iter; ++iter) {
        auto sums = cluster_sums(data, current.labels, k, counts, threads);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            auto dst = model.centroids.row(c);
            const auto src = sums.row(c);
            for (std::size_t j = 0; j < d; ++j) {
                dst[j] = src[j] / static_cast<double>(counts[c]);
            }
        }

        // Empty-cluster repair: seize the row farthest from its (updated) centroid.
        std::vector<char> seized;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) {
                continue;
            }
            if (seized.empty()) {
                seized.assign(n, 0);
            }
            double far = -1.0;
            std::size_t far_row = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (seized[i]) {
                    continue;
                }
                const double dist = squared_distance(data.row(i), model.centroids.row(current.labels[i]));
                if (dist > far) {
                    far = dist;
                    far_row = i;
                }
            }
            seized[far_row] = 1;
            --counts[current.labels[far_row]];
            current.labels[far_row] = static_cast<std::uint32_t>(c);
            counts[c] = 1;
            const auto src = data.row(far_row);
            std::copy(src.begin(), src.end(), model.centroids.row(c).begin());
        }

        auto next = assign_squared(data, model.centroids, threads);
        const double previous = current.total;
        const bool changed = next.labels != current.labels;
        current = std::move(next);
        model.inertia_history.push_back(current.total);
        model.iterations = iter;

        if (!changed || previous == 0.0 || (previous - current.total) / previous < tol) {
            model.converged = true;
            break;
        }
    }

    model.labels = std::move(current.labels);
    model.inertia = current.total;
    return model;
}

KMeansModel fit_minibatch(FloatView data, std::size_t k, std::size_t batch_size, std::size_t max_iters,
                          std::uint64_t seed, const MiniBatchOptions& options) {
    const std::size_t n = data.rows();
    const std::size_t d = data.cols();
    if (k == 0) {
        throw Error(Errc::InvalidArgument, "k must be at least 1");
    }
    if (n < k) {
        throw Error(Errc::TooFewRows, "mini-batch needs at least k=" + std::to_string(k) + " rows, got " + std::to_string(n));
    }
    if (batch_size < k) {
        throw Error(Errc::InvalidArgument, "batch size must be at least k");
    }
    check_finite(data);

    KMeansModel model;
    model.k = k;
    model.d = d;
    model.seed = seed;
    model.algorithm = "minibatch";

    // Batches draw from a stream separate from the seeding stream, so a full-matrix
    // init is the same one fit_lloyd would start from for this seed.
    Rng rng(derive_seed(seed, 1));
    const std::size_t init_size = options.init_size ? std::clamp(options.init_size, k, n) : n;
    if (init_size == n) {
        model.centroids = kmeans_pp_init(data, k, seed, InitOptions{options.init_trials, options.threads});
    } else {
        // Floyd's algorithm keeps the subsample draw O(init_size).
        std::vector<char> taken(n, 0);
        for (std::size_t j = n - init_size; j < n; ++j) {
            std::size_t t = rng.uniform_index(j + 1);
            if (taken[t]) {
                t = j;
            }
            taken[t] = 1;
        }
        std::vector<float> subset;
        subset.reserve(init_size * d);
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) {
                const auto src = data.row(i);
                subset.insert(subset.end(), src.begin(), src.end());
            }
        }
        model.centroids = kmeans_pp_init(FloatView(subset, init_size, d), k, seed,
                                         InitOptions{options.init_trials, options.threads});
    }

    std::vector<std::size_t> counts(k, 0);
    std::vector<std::size_t> batch(batch_size);
    std::vector<std::uint32_t> batch_labels(batch_size);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (auto& b : batch) {
            b = rng.uniform_index(n);
        }
        parallel_chunks(batch_size, 128, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t s = begin; s < end; ++s) {
                const auto x = data.row(batch[s]);
                double best = std::numeric_limits<double>::infinity();
                std::uint32_t best_c = 0;
                for (std::size_t c = 0; c < k; ++c) {
                    const double dist = squared_distance(x, model.centroids.row(c));
                    if (dist < best) {
                        best = dist;
                        best_c = static_cast<std::uint32_t>(c);
                    }
                }
                batch_labels[s] = best_c;
            }
        });
        for (std::size_t s = 0; s < batch_size; ++s) {
            const auto c = batch_labels[s];
            const double eta = 1.0 / static_cast<double>(++counts[c]);
            auto center = model.centroids.row(c);
            const auto x = data.row(batch[s]);
            for (std::size_t j = 0; j < d; ++j) {
                center[j] = (1.0 - eta) * center[j] + eta * x[j];
            }
        }
        model.iterations = iter + 1;
    }

    auto final_pass = assign_squared(data, model.centroids, options.threads);
    model.labels = std::move(final_pass.labels);
    model.inertia = final_pass.total;
    model.inertia_history.push_back(model.inertia);
    return model;
}

void KMeansConfig::validate() const {
    if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
    if (!(tol > 0.0)) throw Error(Errc::InvalidArgument, "tol must be positive");
    if (restarts == 0) throw Error(Errc::InvalidArgument, "restarts must be at least 1");
    if (minibatch && batch_size < k) throw Error(Errc::InvalidArgument, "mini-batch size must be at least k");
}

KMeansModel fit(FloatView data, const KMeansConfig& config, int threads) {
    config.validate();
    const std::size_t trials = config.init_trials ? config.init_trials : greedy_trials(config.k);

    KMeansModel best;
    bool have = false;
    for (std::size_t r = 0; r < config.restarts; ++r) {
        const std::uint64_t run_seed = derive_seed(config.seed, r);
        KMeansModel model;
        if (config.minibatch) {
            model = fit_minibatch(data, config.k, config.batch_size, config.minibatch_iters, run_seed,
                                  MiniBatchOptions{0, trials, threads});
        } else {
            auto init = kmeans_pp_init(data, config.k, run_seed, InitOptions{trials, threads});
            model = fit_lloyd(data, init, config.tol, config.max_iter, threads);
        }
        if (!have || model.inertia < best.inertia) {
            best = std::move(model);
            have = true;
        }
    }
    best.seed = config.seed;
    best.restarts = config.restarts;
    return best;
}

} // namespace vecfold::cluster
