#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "oracles.hpp"
#include "vecfold/cluster.hpp"
#include "vecfold/error.hpp"

using namespace vecfold;
using oracle::TempDir;

namespace {

const std::vector<float> four_points = {0, 0, 0, 1, 10, 0, 10, 1};

FloatView view(const std::vector<float>& v, std::size_t d) { return FloatView(v, v.size() / d, d); }

std::vector<std::vector<double>> sorted_centroids(const Matrix<double>& c) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < c.rows(); ++i) rows.emplace_back(c.row(i).begin(), c.row(i).end());
    std::sort(rows.begin(), rows.end());
    return rows;
}

bool is_data_row(std::span<const double> center, const std::vector<float>& data, std::size_t d) {
    for (std::size_t i = 0; i < data.size() / d; ++i) {
        bool same = true;
        for (std::size_t j = 0; j < d; ++j) same = same && static_cast<double>(data[i * d + j]) == center[j];
        if (same) return true;
    }
    return false;
}

/// Minimum SSE over every assignment of the points to two non-empty groups.
double best_two_partition(const std::vector<float>& data, std::size_t d) {
    const std::size_t n = data.size() / d;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask + 1 < (1u << n); ++mask) {
        double sse = 0;
        for (int side = 0; side < 2; ++side) {
            std::vector<double> mean(d, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (((mask >> i) & 1) != static_cast<std::size_t>(side)) continue;
                for (std::size_t j = 0; j < d; ++j) mean[j] += data[i * d + j];
                ++count;
            }
            for (auto& m : mean) m /= static_cast<double>(count);
            for (std::size_t i = 0; i < n; ++i) {
                if (((mask >> i) & 1) != static_cast<std::size_t>(side)) continue;
                sse += oracle::squared_distance(std::span(data).subspan(i * d, d), mean);
            }
        }
        best = std::min(best, sse);
    }
    return best;
}

} // namespace

TEST(Init, KEqualsNDistinctRowsIsPermutation) {
    const auto data = oracle::random_matrix(12, 3, 1);
    const auto centers = cluster::kmeans_pp_init(view(data, 3), 12, 5);
    std::set<std::vector<double>> seen;
    for (std::size_t c = 0; c < 12; ++c) {
        EXPECT_TRUE(is_data_row(centers.row(c), data, 3));
        seen.emplace(centers.row(c).begin(), centers.row(c).end());
    }
    EXPECT_EQ(seen.size(), 12u);
}

TEST(Init, FirstCenterFollowsReferenceStream) {
    const auto data = oracle::random_matrix(37, 2, 2);
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 123456789ULL}) {
        // Reference sampler: raw mt19937_64 with rejection of the biased top range.
        std::mt19937_64 gen(seed);
        const std::uint64_t bound = 37;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t draw = gen();
        while (draw >= limit) draw = gen();
        const std::size_t row = draw % bound;

        const auto c = cluster::kmeans_pp_init(view(data, 2), 1, seed);
        EXPECT_EQ(c(0, 0), data[row * 2]);
        EXPECT_EQ(c(0, 1), data[row * 2 + 1]);
    }
}

TEST(Init, CentersAreDataRowsAndTooFewRows) {
    const auto data = oracle::random_matrix(50, 4, 3);
    for (std::size_t trials : {1u, 3u}) {
        const auto c = cluster::kmeans_pp_init(view(data, 4), 6, 9, {trials, 1});
        for (std::size_t i = 0; i < 6; ++i) EXPECT_TRUE(is_data_row(c.row(i), data, 4));
    }
    try {
        cluster::kmeans_pp_init(view(data, 4), 51, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TooFewRows);
    }
}

TEST(Lloyd, FourPointExampleIsGlobalOptimum) {
    EXPECT_DOUBLE_EQ(best_two_partition(four_points, 2), 1.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        cluster::KMeansConfig cfg;
        cfg.k = 2;
        cfg.restarts = 1;
        cfg.seed = seed;
        const auto m = cluster::fit(view(four_points, 2), cfg);
        EXPECT_EQ(sorted_centroids(m.centroids), (std::vector<std::vector<double>>{{0, 0.5}, {10, 0.5}}));
        EXPECT_DOUBLE_EQ(m.inertia, 1.0);
    }
}

TEST(Lloyd, SingleClusterIsMean) {
    const auto data = oracle::random_matrix(40, 3, 4);
    const Matrix<double> init(1, 3, std::vector<double>{data[0], data[1], data[2]});
    const auto m = cluster::fit_lloyd(view(data, 3), init, 1e-4, 100);
    std::vector<double> mean(3, 0);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 3; ++j) mean[j] += data[i * 3 + j] / 40.0;
    double sse = 0;
    for (std::size_t i = 0; i < 40; ++i) sse += oracle::squared_distance(std::span(data).subspan(i * 3, 3), mean);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.centroids(0, j), mean[j], 1e-12);
    EXPECT_NEAR(m.inertia, sse, 1e-9 * sse);
}

TEST(Lloyd, DistinctRowCountGivesZeroInertia) {
    std::vector<float> data;
    for (int rep = 0; rep < 4; ++rep)
        for (float v : {1.f, 2.f, 5.f, 5.f, -3.f, 0.5f}) data.push_back(v);
    cluster::KMeansConfig cfg;
    cfg.k = 3;
    const auto m = cluster::fit(view(data, 2), cfg);
    EXPECT_EQ(m.inertia, 0.0);
}

TEST(Lloyd, NonFiniteAndTooFewRows) {
    std::vector<float> data = {0, 0, 1, std::numeric_limits<float>::quiet_NaN(), 3, 3};
    cluster::KMeansConfig cfg;
    cfg.k = 2;
    try {
        cluster::fit(view(data, 2), cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonFiniteData);
    }
    cfg.k = 4;
    data[3] = 1;
    try {
        cluster::fit(view(data, 2), cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TooFewRows);
    }
}

TEST(Lloyd, InertiaNeverIncreases) {
    // Relative slack 1e-12 covers summation rounding; a real increase is many orders larger.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto data = oracle::random_matrix(150, 5, 100 + seed);
        const auto init = cluster::kmeans_pp_init(view(data, 5), 4, seed);
        const auto m = cluster::fit_lloyd(view(data, 5), init, 1e-12, 300);
        ASSERT_GE(m.inertia_history.size(), 1u);
        for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
            EXPECT_LE(m.inertia_history[i], m.inertia_history[i - 1] * (1 + 1e-12));
        }
        EXPECT_EQ(m.inertia_history.back(), m.inertia);
    }
}

TEST(Lloyd, EmptyClusterRepaired) {
    // Two centroids start far from every point; the update must not leave them empty.
    const std::vector<float> data = {0, 0, 0.1f, 0, 5, 5, 5.1f, 5};
    const Matrix<double> init(3, 2, std::vector<double>{0, 0, 100, 100, 200, 200});
    const auto m = cluster::fit_lloyd(view(data, 2), init, 1e-8, 50);
    std::vector<int> counts(3, 0);
    for (auto l : m.labels) ++counts[l];
    for (int c : counts) EXPECT_GT(c, 0);
}

TEST(Fit, DeterministicAndThreadInvariant) {
    const auto blobs = oracle::make_blobs(3000, 6, 5, 1.0, 8.0, 7);
    cluster::KMeansConfig cfg;
    cfg.k = 5;
    cfg.restarts = 2;
    cfg.seed = 3;
    const auto a = cluster::fit(view(blobs.data, 6), cfg, 1);
    const auto b = cluster::fit(view(blobs.data, 6), cfg, 1);
    const auto c = cluster::fit(view(blobs.data, 6), cfg, 4);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.centroids, c.centroids);
    EXPECT_EQ(a.inertia, c.inertia);
    cfg.minibatch = true;
    cfg.batch_size = 256;
    const auto m1 = cluster::fit(view(blobs.data, 6), cfg, 1);
    const auto m4 = cluster::fit(view(blobs.data, 6), cfg, 4);
    EXPECT_EQ(m1.centroids, m4.centroids);
    EXPECT_EQ(m1.labels, m4.labels);
}

TEST(Fit, BeatsRandomRowInitBaseline) {
    const auto blobs = oracle::make_blobs(600, 4, 3, 1.0, 6.0, 11);
    cluster::KMeansConfig cfg;
    cfg.k = 3;
    const auto model = cluster::fit(view(blobs.data, 4), cfg);
    std::mt19937_64 gen(5);
    double total = 0;
    for (int run = 0; run < 10; ++run) {
        Matrix<double> init(3, 4);
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t row = gen() % 600;
            for (std::size_t j = 0; j < 4; ++j) init(c, j) = blobs.data[row * 4 + j];
        }
        total += cluster::fit_lloyd(view(blobs.data, 4), init, 1e-4, 300).inertia;
    }
    EXPECT_LE(model.inertia, total / 10 * (1 + 1e-12));
}

TEST(MiniBatch, FullBatchMatchesLloydOnFourPoints) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto mb = cluster::fit_minibatch(view(four_points, 2), 2, 4, 50, seed);
        const auto init = cluster::kmeans_pp_init(view(four_points, 2), 2, seed);
        const auto ll = cluster::fit_lloyd(view(four_points, 2), init, 1e-4, 300);
        EXPECT_LE(mb.inertia, ll.inertia * 1.05) << "seed " << seed;
        EXPECT_EQ(mb.algorithm, "minibatch");
    }
}

TEST(MiniBatch, FullMatrixSeedingSharesLloydInit) {
    const auto blobs = oracle::make_blobs(500, 5, 4, 1.0, 6.0, 13);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto init = cluster::kmeans_pp_init(view(blobs.data, 5), 4, seed, cluster::InitOptions{3, 1});
        const auto mb = cluster::fit_minibatch(view(blobs.data, 5), 4, 64, 0, seed, cluster::MiniBatchOptions{0, 3, 1});
        EXPECT_EQ(mb.centroids, init) << "seed " << seed;
        const auto sub = cluster::fit_minibatch(view(blobs.data, 5), 4, 64, 0, seed, cluster::MiniBatchOptions{100, 3, 1});
        for (std::size_t c = 0; c < 4; ++c) {
            bool is_row = false;
            for (std::size_t i = 0; i < 500 && !is_row; ++i) {
                is_row = std::equal(sub.centroids.row(c).begin(), sub.centroids.row(c).end(), blobs.data.begin() + i * 5);
            }
            EXPECT_TRUE(is_row);
        }
    }
}

TEST(Assign, TieGoesToLowerIndex) {
    const std::vector<float> point = {0, 0};
    const Matrix<double> centroids(4, 2, std::vector<double>{5, 5, 1, 0, 3, 3, -1, 0});
    const auto a = cluster::assign(FloatView(point, 1, 2), centroids);
    EXPECT_EQ(a.labels[0], 1u);
    EXPECT_DOUBLE_EQ(a.distances[0], 1.0);
}

TEST(Assign, MatchesBruteForceScan) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto data = oracle::random_matrix(100, 7, seed);
        const auto cvals = oracle::random_matrix(6, 7, seed + 50);
        const Matrix<double> centroids(6, 7, std::vector<double>(cvals.begin(), cvals.end()));
        const auto a = cluster::assign(view(data, 7), centroids, 3);
        EXPECT_EQ(a.labels, oracle::brute_assign(data, 7, centroids.values(), 6));
        for (auto l : a.labels) EXPECT_LT(l, 6u);
    }
    const std::vector<float> three = {1, 2, 3};
    EXPECT_THROW(cluster::assign(FloatView(three, 1, 3), Matrix<double>(2, 2)), Error);
}

TEST(Inertia, ClosedFormsAndOracle) {
    const auto data = oracle::random_matrix(50, 8, 21);
    cluster::KMeansModel every;
    every.k = 50;
    every.d = 8;
    every.centroids = Matrix<double>(50, 8, std::vector<double>(data.begin(), data.end()));
    for (std::uint32_t i = 0; i < 50; ++i) every.labels.push_back(i);
    EXPECT_EQ(cluster::inertia(view(data, 8), every), 0.0);

    cluster::KMeansModel three;
    three.k = 3;
    three.d = 8;
    const auto cvals = oracle::random_matrix(3, 8, 22);
    three.centroids = Matrix<double>(3, 8, std::vector<double>(cvals.begin(), cvals.end()));
    three.labels = oracle::brute_assign(data, 8, three.centroids.values(), 3);
    const double expect = oracle::brute_inertia(data, 8, three.centroids.values(), three.labels);
    EXPECT_NEAR(cluster::inertia(view(data, 8), three), expect, 1e-9 * expect);
}

TEST(ModelIo, JsonAndLabelsRoundTrip) {
    TempDir dir;
    const auto blobs = oracle::make_blobs(200, 3, 2, 1.0, 5.0, 1);
    cluster::KMeansConfig cfg;
    cfg.k = 2;
    const auto m = cluster::fit(view(blobs.data, 3), cfg);
    cluster::save_model(dir / "model.json", m);
    const auto back = cluster::load_model(dir / "model.json");
    EXPECT_EQ(back.centroids, m.centroids);
    EXPECT_EQ(back.inertia, m.inertia);
    EXPECT_EQ(back.k, 2u);
    EXPECT_EQ(cluster::model_to_json(back)["metric"], "squared_euclidean");

    cluster::write_labels(dir / "labels.klbl", m.labels);
    EXPECT_EQ(cluster::read_labels(dir / "labels.klbl"), m.labels);
    std::filesystem::resize_file(dir / "labels.klbl", 20);
    EXPECT_THROW(cluster::read_labels(dir / "labels.klbl"), Error);
}

TEST(Config, JsonAndValidation) {
    cluster::KMeansConfig c;
    c.k = 7;
    c.minibatch = true;
    c.batch_size = 512;
    const auto back = cluster::config_from_json(cluster::config_to_json(c));
    EXPECT_EQ(back.k, 7u);
    EXPECT_TRUE(back.minibatch);
    EXPECT_EQ(back.batch_size, 512u);
    c.k = 0;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_EQ(cluster::greedy_trials(20), 4u);
}
