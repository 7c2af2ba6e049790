#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "vecfold/error.hpp"
#include "vecfold/project.hpp"
#include "vecfold/random.hpp"

namespace vecfold::project {

CurveParams fit_curve(double min_dist, double spread) {
    constexpr int points = 300;
    std::vector<double> xs(points);
    std::vector<double> ys(points);
    for (int i = 0; i < points; ++i) {
        xs[i] = 3.0 * spread * i / (points - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }

    auto residual_sum = [&](double a, double b) {
        double s = 0.0;
        for (int i = 0; i < points; ++i) {
            const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b)) - ys[i];
            s += r * r;
        }
        return s;
    };

    // Levenberg-Marquardt on (a, b).
    double a = 1.0;
    double b = 1.0;
    double lambda = 1e-3;
    double cost = residual_sum(a, b);
    for (int iter = 0; iter < 500; ++iter) {
        double jaa = 0.0, jab = 0.0, jbb = 0.0, ga = 0.0, gb = 0.0;
        for (int i = 0; i < points; ++i) {
            const double x = xs[i];
            if (x <= 0.0) {
                continue; // f(0) = 1 for every (a, b): no gradient
            }
            const double x2b = std::pow(x, 2.0 * b);
            const double denom = 1.0 + a * x2b;
            const double f = 1.0 / denom;
            const double r = f - ys[i];
            const double da = -x2b / (denom * denom);
            const double db = -a * x2b * 2.0 * std::log(x) / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        const double maa = jaa * (1.0 + lambda);
        const double mbb = jbb * (1.0 + lambda);
        const double det = maa * mbb - jab * jab;
        if (det == 0.0) {
            break;
        }
        const double step_a = -(mbb * ga - jab * gb) / det;
        const double step_b = -(maa * gb - jab * ga) / det;
        const double na = a + step_a;
        const double nb = b + step_b;
        const double new_cost = (na > 0.0 && nb > 0.0) ? residual_sum(na, nb) : cost * 2.0 + 1.0;
        if (new_cost < cost) {
            const bool done = std::abs(cost - new_cost) < 1e-15 * std::max(1.0, cost);
            a = na;
            b = nb;
            cost = new_cost;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (done) {
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) {
                break;
            }
        }
    }
    return CurveParams{a, b};
}

namespace {

inline double clip(double v) { return std::clamp(v, -4.0, 4.0); }

struct DirectedSample {
    std::uint32_t head;
    std::uint32_t tail;
    double epochs_per_sample;
};

/// Plain loads and stores for the serial path, relaxed atomics for the shared-memory one.
struct PlainAccess {
    static double load(double& v) { return v; }
    static void store(double& v, double x) { v = x; }
};

struct AtomicAccess {
    static double load(double& v) { return std::atomic_ref<double>(v).load(std::memory_order_relaxed); }
    static void store(double& v, double x) { std::atomic_ref<double>(v).store(x, std::memory_order_relaxed); }
};

template<class Access>
void run_samples(std::vector<double>& emb, std::size_t n, const std::vector<DirectedSample>& samples,
                 std::size_t begin, std::size_t end, std::vector<double>& next_sample,
                 std::vector<double>& next_negative, double epoch, double alpha, double a, double b,
                 double negative_rate, Rng& rng) {
    for (std::size_t s = begin; s < end; ++s) {
        const auto& smp = samples[s];
        if (next_sample[s] > epoch) {
            continue;
        }
        double& hx = emb[2 * smp.head];
        double& hy = emb[2 * smp.head + 1];
        double& tx = emb[2 * smp.tail];
        double& ty = emb[2 * smp.tail + 1];

        double cx = Access::load(hx), cy = Access::load(hy);
        double ox = Access::load(tx), oy = Access::load(ty);
        double dx = cx - ox, dy = cy - oy;
        double dist_sq = dx * dx + dy * dy;
        if (dist_sq > 0.0) {
            const double coeff = -2.0 * a * b * std::pow(dist_sq, b - 1.0) / (a * std::pow(dist_sq, b) + 1.0);
            const double gx = clip(coeff * dx) * alpha;
            const double gy = clip(coeff * dy) * alpha;
            cx += gx;
            cy += gy;
            Access::store(hx, cx);
            Access::store(hy, cy);
            Access::store(tx, ox - gx);
            Access::store(ty, oy - gy);
        }
        next_sample[s] += smp.epochs_per_sample;

        const double per_negative = smp.epochs_per_sample / negative_rate;
        const auto negatives = static_cast<long>((epoch - next_negative[s]) / per_negative);
        for (long p = 0; p < negatives; ++p) {
            const auto other = static_cast<std::uint32_t>(rng.uniform_index(n));
            if (other == smp.head) {
                continue;
            }
            const double px = Access::load(emb[2 * other]);
            const double py = Access::load(emb[2 * other + 1]);
            dx = cx - px;
            dy = cy - py;
            dist_sq = dx * dx + dy * dy;
            if (dist_sq <= 0.0) {
                continue;
            }
            const double coeff = 2.0 * b / ((0.001 + dist_sq) * (a * std::pow(dist_sq, b) + 1.0));
            cx += clip(coeff * dx) * alpha;
            cy += clip(coeff * dy) * alpha;
        }
        if (negatives > 0) {
            Access::store(hx, cx);
            Access::store(hy, cy);
            next_negative[s] += static_cast<double>(negatives) * per_negative;
        }
    }
}

} // namespace

LayoutResult umap_layout(const NeighborGraph& graph, const Matrix<double>& init, const LayoutOptions& options) {
    if (options.epochs == 0) {
        throw Error(Errc::InvalidArgument, "epochs must be at least 1");
    }
    if (init.rows() != graph.n || init.cols() != 2) {
        throw Error(Errc::DimensionMismatch, "initial layout must be n x 2");
    }

    LayoutResult result;
    result.curve = fit_curve(options.min_dist, options.spread);
    const double a = result.curve.a;
    const double b = result.curve.b;

    const auto undirected = graph.symmetric_edges();
    double max_weight = 0.0;
    for (const auto& e : undirected) {
        max_weight = std::max(max_weight, e.weight);
    }

    // Both directions of every edge, like the reference construction; edges
    // too weak to be sampled once in the run are dropped.
    std::vector<DirectedSample> samples;
    const double min_weight = max_weight / static_cast<double>(options.epochs);
    for (const auto& e : undirected) {
        if (e.weight < min_weight) {
            continue;
        }
        const double eps = max_weight / e.weight;
        samples.push_back(DirectedSample{e.a, e.b, eps});
        samples.push_back(DirectedSample{e.b, e.a, eps});
    }

    std::vector<double> next_sample(samples.size());
    std::vector<double> next_negative(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) {
        next_sample[s] = samples[s].epochs_per_sample;
        next_negative[s] = samples[s].epochs_per_sample / options.negative_sample_rate;
    }

    std::vector<double> emb = init.values();
    const std::size_t n = graph.n;
    const int workers = options.parallel ? std::max(1, options.threads) : 1;
    std::vector<Rng> rngs;
    for (int t = 0; t < workers; ++t) {
        rngs.emplace_back(derive_seed(options.seed, static_cast<std::uint64_t>(t)));
    }

    for (std::size_t e = 1; e <= options.epochs; ++e) {
        const double epoch = static_cast<double>(e);
        const double alpha = options.learning_rate * (1.0 - static_cast<double>(e - 1) / static_cast<double>(options.epochs));
        if (workers == 1) {
            run_samples<PlainAccess>(emb, n, samples, 0, samples.size(), next_sample, next_negative, epoch, alpha, a, b,
                                     options.negative_sample_rate, rngs[0]);
        } else {
            std::vector<std::thread> pool;
            const std::size_t per = (samples.size() + workers - 1) / workers;
            for (int t = 0; t < workers; ++t) {
                const std::size_t begin = std::min(samples.size(), per * t);
                const std::size_t end = std::min(samples.size(), begin + per);
                pool.emplace_back([&, t, begin, end]() {
                    run_samples<AtomicAccess>(emb, n, samples, begin, end, next_sample, next_negative, epoch, alpha, a, b,
                                              options.negative_sample_rate, rngs[t]);
                });
            }
            for (auto& th : pool) {
                th.join();
            }
        }

        for (std::size_t i = 0; i < emb.size(); ++i) {
            if (!std::isfinite(emb[i])) {
                throw Error(Errc::NonFiniteGradient, "layout coordinate of node " + std::to_string(i / 2) +
                                                         " became non-finite at epoch " + std::to_string(e) +
                                                         " (a=" + std::to_string(a) + ", b=" + std::to_string(b) + ")");
            }
        }
    }

    result.coords = Matrix<double>(n, 2, std::move(emb));
    return result;
}

} // namespace vecfold::project
