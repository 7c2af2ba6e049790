// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include "oracles.hpp"
#include "vecfold/cluster.hpp"
#include "vecfold/error.hpp"
#include "vecfold/parallel.hpp"
#include "vecfold/pipeline.hpp"
#include "vecfold/project.hpp"
#include "vecfold/prompt.hpp"
#include "vecfold/store.hpp"
#include "vecfold/synth.hpp"

using namespace vecfold;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_seconds > 0 && secs > limit_seconds) {
        out.pass = false;
        out.detail += "; exceeded " + std::to_string(limit_seconds) + " s";
    }
    if (!out.pass) ++failures;
    std::printf("%s  %-28s %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

FloatView view(const std::vector<float>& v, std::size_t d) { return FloatView(v, v.size() / d, d); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(VECFOLD_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::uint32_t> categories_of(const fs::path& corpus) {
    std::vector<std::uint32_t> out;
    std::ifstream in(corpus);
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto cat = json::parse(line).at("category").get<std::string>();
        for (std::size_t c = 0; c < synth::categories.size(); ++c)
            if (synth::categories[c] == cat) out.push_back(static_cast<std::uint32_t>(c));
    }
    return out;
}

const fs::path bundled_corpus = fs::path(VECFOLD_DATA_DIR) / "synthetic_800.jsonl";

Outcome default_run_shape(const oracle::TempDir& dir) {
    auto cfg = pipeline::default_config();
    cfg.corpus_path = bundled_corpus.string();
    cfg.output_dir = (dir / "defaults").string();
    pipeline::RunOptions opt;
    opt.deterministic = true;
    pipeline::run_pipeline(cfg, opt, pipeline::Stage::ingest);
    const auto manifest = json::parse(oracle::slurp(dir / "defaults" / pipeline::files::manifest));
    const auto& shape = manifest.at("run_shape");
    const bool ok = shape.at("k") == 20 && shape.at("sample_size") == 70000 && shape.at("top_n") == 10;
    return {ok, "run_shape " + shape.dump()};
}

Outcome template_conformance() {
    auto posts = synth::synthetic_corpus(1000, 99);
    std::mt19937_64 gen(1);
    std::size_t checked = 0, bad = 0;
    for (auto& lp : posts) {
        auto& p = lp.post;
        p.images.clear();
        for (std::size_t m = 0, n = gen() % 7; m < n; ++m) p.images.push_back("img" + std::to_string(m) + ".jpg");
        const auto t = prompt::render_template(p, {});
        const std::size_t n = p.images.size();
        const bool phrase_ok =
            (t.text.find(prompt::no_image_phrase) != std::string::npos) == (n == 0) &&
            (t.text.find(prompt::single_image_phrase) != std::string::npos) == (n == 1) &&
            (t.text.find(prompt::multi_image_phrase) != std::string::npos) == (n >= 2);
        const bool prefix_ok = t.text.rfind(prompt::post_prefix, 0) == 0;
        const bool count_ok = prompt::count_occurrences(t.text, "<image>") == n && t.image_token_count == n;
        ++checked;
        if (!(phrase_ok && prefix_ok && count_ok)) ++bad;
    }
    return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) + " prompts conform"};
}

Outcome kmeans_oracle_suite() {
    std::mt19937_64 gen(2024);
    std::size_t label_mismatch = 0, inertia_bad = 0, monotone_bad = 0;
    double worst_rel = 0;
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t k = 1 + gen() % 5;
        const std::size_t d = 1 + gen() % 8;
        const std::size_t n = k + gen() % (201 - k);
        const auto data = oracle::random_matrix(n, d, gen());
        const auto init = cluster::kmeans_pp_init(view(data, d), k, gen());
        const auto model = cluster::fit_lloyd(view(data, d), init, 1e-12, 300);
        if (model.labels != oracle::brute_assign(data, d, model.centroids.values(), k)) ++label_mismatch;
        const double expect = oracle::brute_inertia(data, d, model.centroids.values(), model.labels);
        const double rel = std::abs(model.inertia - expect) / std::max(expect, 1e-300);
        worst_rel = std::max(worst_rel, rel);
        if (rel > 1e-9) ++inertia_bad;
        // Allow 1e-12 relative for summation-order rounding between iterations.
        for (std::size_t i = 1; i < model.inertia_history.size(); ++i)
            if (model.inertia_history[i] > model.inertia_history[i - 1] * (1 + 1e-12)) ++monotone_bad;
    }
    const bool ok = label_mismatch == 0 && inertia_bad == 0 && monotone_bad == 0;
    return {ok, "50 instances: label mismatches " + std::to_string(label_mismatch) + ", inertia rel err max " +
                    fmt("%.2e", worst_rel) + ", increases " + std::to_string(monotone_bad)};
}

const oracle::Blobs& twenty_blobs() {
    // Centers drawn in a small box so many pairs sit near the 10-unit floor.
    static const auto blobs = oracle::make_blobs(10000, 64, 20, 1.0, 10.0, 77, 2.5);
    return blobs;
}

Outcome clustering_recovery() {
    const auto& b = twenty_blobs();
    cluster::KMeansConfig cfg;
    cfg.k = 20;
    cfg.restarts = 5;
    cfg.minibatch = false;
    const auto model = cluster::fit(view(b.data, 64), cfg);
    const double ari = oracle::adjusted_rand_index(model.labels, b.labels);
    cfg.init_trials = 1;
    const auto classic = cluster::fit(view(b.data, 64), cfg);
    const double ari_classic = oracle::adjusted_rand_index(classic.labels, b.labels);
    return {ari >= 0.90 && ari_classic >= 0.90,
            "ARI " + fmt("%.4f", ari) + " (classic k-means++ seeding " + fmt("%.4f", ari_classic) + ")"};
}

Outcome minibatch_fidelity() {
    const auto& b = twenty_blobs();
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        cluster::KMeansConfig cfg;
        cfg.k = 20;
        cfg.seed = seed;
        const auto full = cluster::fit(view(b.data, 64), cfg);
        cfg.minibatch = true;
        cfg.batch_size = 1024;
        const auto mb = cluster::fit(view(b.data, 64), cfg);
        worst = std::max(worst, std::abs(mb.inertia - full.inertia) / full.inertia);
    }
    return {worst <= 0.05, "max relative inertia gap " + fmt("%.4f", worst) + " over 5 seeds"};
}

Outcome end_to_end(const oracle::TempDir& dir) {
    const auto out = dir / "e2e";
    const int code = run_cli("run --set corpus_path=" + bundled_corpus.string() + " --set output_dir=" + out.string() +
                             " --set kmeans.k=4 --threads 1 -q");
    if (code != 0) return {false, "vecfold run exited " + std::to_string(code)};
    namespace f = pipeline::files;
    for (auto name : {f::matrix, f::model, f::labels, f::projection, f::scatter_svg, f::report_json, f::report_md}) {
        if (!fs::exists(out / name)) return {false, "missing " + std::string(name)};
    }
    const auto labels = cluster::read_labels(out / f::labels);
    const double ari = oracle::adjusted_rand_index(labels, categories_of(bundled_corpus));
    return {ari >= 0.80, "ARI " + fmt("%.4f", ari) + " vs generating categories, all artifacts present"};
}

Outcome projection_quality() {
    const auto b = oracle::make_blobs(300, 10, 3, 0.1, 10.0, 5, 10.0);
    project::ProjectionConfig cfg;
    const auto p = project::project(view(b.data, 10), cfg);
    const std::vector<double> high(b.data.begin(), b.data.end());
    const double t = oracle::trustworthiness(high, 10, p.coords.values(), 2, 15);

    double worst = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto data = oracle::random_matrix(40, 6, 300 + seed);
        const auto pca = project::pca_fit(view(data, 6), 6);
        const auto expect = oracle::jacobi_eigenvalues(oracle::covariance(data, 40, 6), 6);
        for (std::size_t i = 0; i < 6; ++i) worst = std::max(worst, std::abs(pca.explained_variance[i] - expect[i]));
    }
    const auto blob_pca = project::pca_fit(view(b.data, 10), 10);
    const auto blob_expect = oracle::jacobi_eigenvalues(oracle::covariance(b.data, 300, 10), 10);
    for (std::size_t i = 0; i < 10; ++i)
        worst = std::max(worst, std::abs(blob_pca.explained_variance[i] - blob_expect[i]) / std::max(1.0, blob_expect[i]));
    return {t >= 0.80 && worst <= 1e-8,
            "trustworthiness@15 " + fmt("%.4f", t) + ", PCA eigenvalue error max " + fmt("%.2e", worst)};
}

Outcome determinism(const oracle::TempDir& dir) {
    const std::string base = "run --set corpus_path=" + bundled_corpus.string() +
                             " --set kmeans.k=4 --deterministic --threads 1 --no-resume -q --set output_dir=";
    if (run_cli(base + (dir / "det1").string()) != 0 || run_cli(base + (dir / "det2").string()) != 0) {
        return {false, "pipeline run failed"};
    }
    namespace f = pipeline::files;
    std::size_t same = 0, total = 0;
    std::string differing;
    for (auto name : {f::matrix, f::model, f::labels, f::projection, f::scatter_svg, f::scatter_csv, f::report_json,
                      f::report_md}) {
        ++total;
        if (oracle::slurp(dir / "det1" / name) == oracle::slurp(dir / "det2" / name)) ++same;
        else differing += " " + std::string(name);
    }
    return {same == total, std::to_string(same) + "/" + std::to_string(total) + " artifacts byte-identical" +
                               (differing.empty() ? "" : ", differ:" + differing)};
}

Outcome performance(const oracle::TempDir& dir) {
    const std::size_t n = 70000, d = 768, k = 20;
    const auto path = dir / "perf.embm";
    {
        std::mt19937_64 gen(8);
        std::normal_distribution<float> gauss(0.0f, 1.0f);
        std::vector<std::vector<float>> centers(k, std::vector<float>(d));
        for (auto& c : centers)
            for (auto& v : c) v = 3.0f * gauss(gen);
        auto w = store::MatrixWriter::create(path, d);
        std::vector<float> row(d);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& c = centers[i % k];
            for (std::size_t j = 0; j < d; ++j) row[j] = c[j] + gauss(gen);
            w.append_row(row, "r" + std::to_string(i));
            if (i % 4096 == 4095) w.flush();
        }
        w.close();
    }

    // Measure in a fresh process so peak RSS covers only the clustering run.
    int fds[2];
    if (::pipe(fds) != 0) return {false, "pipe failed"};
    const pid_t pid = ::fork();
    if (pid == 0) {
        ::close(fds[0]);
        double result[3] = {0, 0, 0};
        try {
            const auto start = std::chrono::steady_clock::now();
            const auto reader = store::MatrixReader::open(path);
            cluster::KMeansConfig cfg;
            cfg.k = k;
            cfg.minibatch = true;
            cfg.minibatch_iters = 100;
            const auto model = cluster::fit(reader.view(), cfg, default_threads());
            result[0] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            rusage usage{};
            ::getrusage(RUSAGE_SELF, &usage);
            result[1] = static_cast<double>(usage.ru_maxrss) / 1024.0;
            result[2] = static_cast<double>(model.labels.size());
        } catch (...) {
            result[2] = -1;
        }
        [[maybe_unused]] auto written = ::write(fds[1], result, sizeof(result));
        ::_exit(0);
    }
    ::close(fds[1]);
    double result[3] = {0, 0, 0};
    const auto got = ::read(fds[0], result, sizeof(result));
    ::close(fds[0]);
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (got != static_cast<ssize_t>(sizeof(result)) || result[2] != static_cast<double>(n)) {
        return {false, "clustering child failed"};
    }
    const bool ok = result[0] < 120.0 && result[1] < 2048.0;
    return {ok, "70000x768, k=20 mini-batch: fit " + fmt("%.1f", result[0]) + " s on " +
                    std::to_string(default_threads()) + " thread(s), peak RSS " + fmt("%.0f", result[1]) + " MiB"};
}

Outcome format_round_trips(const oracle::TempDir& dir) {
    std::mt19937_64 gen(31337);
    const auto path = dir / "rt.embm";
    std::size_t mismatches = 0;
    for (int cycle = 0; cycle < 10000; ++cycle) {
        const std::size_t n = gen() % 9;
        const std::uint32_t d = 2 + static_cast<std::uint32_t>(gen() % 15);
        std::vector<float> data(n * d);
        for (auto& v : data) {
            const auto bits = static_cast<std::uint32_t>(gen());
            std::memcpy(&v, &bits, 4);
        }
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) ids.push_back("c" + std::to_string(cycle) + "_" + std::to_string(i));
        store::write_matrix(path, FloatView(data, n, d), ids);
        const auto r = store::MatrixReader::open(path);
        const bool same = r.rows() == n && r.cols() == d &&
                          (n == 0 || std::memcmp(r.view().data().data(), data.data(), data.size() * 4) == 0) &&
                          r.ids() == ids;
        if (!same) ++mismatches;
    }

    const auto good = oracle::slurp(path);
    auto expect_error = [&](const std::string& bytes, Errc code) {
        {
            std::ofstream out(dir / "broken.embm", std::ios::binary);
            out << bytes;
        }
        fs::copy_file(store::ids_path(path), store::ids_path(dir / "broken.embm"), fs::copy_options::overwrite_existing);
        try {
            store::MatrixReader::open(dir / "broken.embm");
        } catch (const Error& e) {
            return e.code() == code;
        }
        return false;
    };
    std::string bad_magic = good;
    bad_magic.replace(0, 4, "XBMF");
    bool rejections = expect_error(bad_magic, Errc::FormatMismatch) &&
                      expect_error(good.substr(0, 20), Errc::TruncatedFile);
    if (good.size() > store::header_size) {
        rejections = rejections && expect_error(good.substr(0, good.size() - 1), Errc::TruncatedFile);
    }
    return {mismatches == 0 && rejections, "10000 cycles, " + std::to_string(mismatches) +
                                               " mismatches; bad magic and truncation rejected: " +
                                               (rejections ? "yes" : "no")};
}

} // namespace

int main() {
    oracle::TempDir dir;
    criterion("default-config", 1.0, [&] { return default_run_shape(dir); });
    criterion("template-conformance", 1.0, template_conformance);
    criterion("kmeans-oracle-suite", 30.0, kmeans_oracle_suite);
    criterion("clustering-recovery", 60.0, clustering_recovery);
    criterion("minibatch-fidelity", 60.0, minibatch_fidelity);
    criterion("end-to-end-stub-pipeline", 120.0, [&] { return end_to_end(dir); });
    criterion("projection-quality", 60.0, projection_quality);
    criterion("determinism", 0.0, [&] { return determinism(dir); });
    criterion("desk-scale-performance", 0.0, [&] { return performance(dir); });
    criterion("format-round-trips", 0.0, [&] { return format_round_trips(dir); });
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
