#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"

#include "vecfold/cluster.hpp"
#include "vecfold/corpus.hpp"
#include "vecfold/embed.hpp"
#include "vecfold/error.hpp"
#include "vecfold/pipeline.hpp"
#include "vecfold/project.hpp"
#include "vecfold/prompt.hpp"
#include "vecfold/store.hpp"
#include "vecfold/synth.hpp"

namespace py = pybind11;
using namespace vecfold;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

FloatView as_view(const FloatArray& a) {
    if (a.ndim() != 2) {
        throw Error(Errc::DimensionMismatch, "expected a 2-d array");
    }
    const auto n = static_cast<std::size_t>(a.shape(0));
    const auto d = static_cast<std::size_t>(a.shape(1));
    return FloatView(std::span<const float>(a.data(), n * d), n, d);
}

Matrix<double> as_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) {
        throw Error(Errc::DimensionMismatch, "expected a 2-d array");
    }
    const auto n = static_cast<std::size_t>(a.shape(0));
    const auto d = static_cast<std::size_t>(a.shape(1));
    return Matrix<double>(n, d, std::vector<double>(a.data(), a.data() + n * d));
}

template<typename T>
py::array_t<T> to_array(const std::vector<T>& values, std::size_t rows, std::size_t cols) {
    py::array_t<T> out({rows, cols});
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

template<typename T>
py::array_t<T> to_array(const std::vector<T>& values) {
    py::array_t<T> out(values.size());
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

py::array_t<double> to_array(const Matrix<double>& m) { return to_array(m.values(), m.rows(), m.cols()); }

py::dict model_to_dict(const cluster::KMeansModel& model) {
    py::dict out;
    out["k"] = model.k;
    out["d"] = model.d;
    out["centroids"] = to_array(model.centroids);
    out["labels"] = to_array(model.labels);
    out["inertia"] = model.inertia;
    out["iterations"] = model.iterations;
    out["converged"] = model.converged;
    out["algorithm"] = model.algorithm;
    out["seed"] = model.seed;
    out["restarts"] = model.restarts;
    out["inertia_history"] = model.inertia_history;
    return out;
}

pipeline::Stage parse_stage(const std::string& name) {
    using pipeline::Stage;
    for (auto s : {Stage::ingest, Stage::template_preview, Stage::embed, Stage::cluster, Stage::project, Stage::report}) {
        if (pipeline::stage_name(s) == name) {
            return s;
        }
    }
    throw Error(Errc::InvalidArgument, "unknown stage '" + name + "'");
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of vecfold; use the vecfold package rather than this module directly.";
    m.attr("__version__") = VECFOLD_VERSION;

    PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
    error_type.call_once_and_store_result([&]() -> py::object { return py::exception<Error>(m, "VecfoldError"); });
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            const py::object& type = error_type.get_stored();
            py::object instance = type(e.what());
            instance.attr("code") = std::string(errc_name(e.code()));
            PyErr_SetObject(type.ptr(), instance.ptr());
        }
    });

    m.def("kmeans_pp_init",
          [](const FloatArray& data, std::size_t k, std::uint64_t seed, std::size_t local_trials, int threads) {
              return to_array(cluster::kmeans_pp_init(as_view(data), k, seed, {local_trials, threads}));
          },
          py::arg("data"), py::arg("k"), py::arg("seed"), py::arg("local_trials") = 1, py::arg("threads") = 1);

    m.def("fit_lloyd",
          [](const FloatArray& data, const DoubleArray& init, double tol, std::size_t max_iter, int threads) {
              return model_to_dict(cluster::fit_lloyd(as_view(data), as_matrix(init), tol, max_iter, threads));
          },
          py::arg("data"), py::arg("init"), py::arg("tol") = 1e-4, py::arg("max_iter") = 300, py::arg("threads") = 1);

    m.def("fit_minibatch",
          [](const FloatArray& data, std::size_t k, std::size_t batch_size, std::size_t max_iters, std::uint64_t seed,
             std::size_t init_trials, int threads) {
              return model_to_dict(cluster::fit_minibatch(as_view(data), k, batch_size, max_iters, seed,
                                                          cluster::MiniBatchOptions{0, init_trials, threads}));
          },
          py::arg("data"), py::arg("k"), py::arg("batch_size"), py::arg("max_iters"), py::arg("seed"),
          py::arg("init_trials") = 1, py::arg("threads") = 1);

    m.def("fit_kmeans",
          [](const FloatArray& data, const std::string& config_json, int threads) {
              const auto config = cluster::config_from_json(nlohmann::json::parse(config_json));
              return model_to_dict(cluster::fit(as_view(data), config, threads));
          },
          py::arg("data"), py::arg("config_json"), py::arg("threads") = 1);

    m.def("default_kmeans_config", [] { return cluster::config_to_json(cluster::KMeansConfig{}).dump(); });

    m.def("assign",
          [](const FloatArray& vectors, const DoubleArray& centroids, int threads) {
              const auto a = cluster::assign(as_view(vectors), as_matrix(centroids), threads);
              return py::make_tuple(to_array(a.labels), to_array(a.distances));
          },
          py::arg("vectors"), py::arg("centroids"), py::arg("threads") = 1);

    m.def("pca_fit",
          [](const FloatArray& data, std::size_t p) {
              const auto model = project::pca_fit(as_view(data), p);
              py::dict out;
              out["mean"] = to_array(model.mean);
              out["components"] = to_array(model.components);
              out["explained_variance"] = to_array(model.explained_variance);
              out["explained_variance_ratio"] = to_array(model.explained_variance_ratio());
              out["total_variance"] = model.total_variance;
              return out;
          },
          py::arg("data"), py::arg("p"));

    m.def("fit_curve",
          [](double min_dist, double spread) {
              const auto c = project::fit_curve(min_dist, spread);
              return py::make_tuple(c.a, c.b);
          },
          py::arg("min_dist"), py::arg("spread") = 1.0);

    m.def("project",
          [](const FloatArray& data, const std::string& config_json, int threads, bool deterministic) {
              const auto config = project::config_from_json(nlohmann::json::parse(config_json));
              const auto p = project::project(as_view(data), config, threads, deterministic);
              py::dict out;
              out["coords"] = to_array(p.coords);
              out["source_sample"] = to_array(p.source_sample);
              out["curve"] = py::make_tuple(p.curve.a, p.curve.b);
              return out;
          },
          py::arg("data"), py::arg("config_json"), py::arg("threads") = 1, py::arg("deterministic") = true);

    m.def("default_projection_config", [] { return project::config_to_json(project::ProjectionConfig{}).dump(); });

    m.def("render_template",
          [](const std::string& post_json, const std::string& config_json) {
              const auto post = corpus::parse_post(nlohmann::json::parse(post_json), 1);
              const auto config = prompt::config_from_json(nlohmann::json::parse(config_json));
              return prompt::templated_to_json(prompt::render_template(post, config)).dump();
          },
          py::arg("post_json"), py::arg("config_json"));

    m.def("default_template_config", [] { return prompt::config_to_json(prompt::TemplateConfig{}).dump(); });

    m.def("embed_post",
          [](const std::string& post_json, const std::string& template_json, const std::string& provider_json) {
              const auto post = corpus::parse_post(nlohmann::json::parse(post_json), 1);
              const auto tmpl = prompt::config_from_json(nlohmann::json::parse(template_json));
              const auto provider = embed::make_provider(embed::descriptor_from_json(nlohmann::json::parse(provider_json)));
              return to_array(provider->embed_post(prompt::render_template(post, tmpl)).values);
          },
          py::arg("post_json"), py::arg("template_json"), py::arg("provider_json"));

    m.def("default_provider", [] { return embed::descriptor_to_json(embed::ProviderDescriptor{}).dump(); });

    m.def("write_matrix",
          [](const std::filesystem::path& path, const FloatArray& data, const std::vector<std::string>& ids) {
              store::write_matrix(path, as_view(data), ids);
          },
          py::arg("path"), py::arg("data"), py::arg("ids"));

    m.def("read_matrix",
          [](const std::filesystem::path& path) {
              const auto reader = store::MatrixReader::open(path);
              const auto values = reader.view().data();
              return py::make_tuple(to_array(std::vector<float>(values.begin(), values.end()), reader.rows(), reader.cols()),
                                    reader.ids());
          },
          py::arg("path"));

    m.def("load_corpus_stats",
          [](const std::filesystem::path& path, bool strict) {
              const auto corpus = corpus::load_corpus(path, strict);
              auto stats = corpus::stats_to_json(corpus::corpus_stats(*corpus));
              stats["skipped_records"] = corpus->skipped().size();
              return stats.dump();
          },
          py::arg("path"), py::arg("strict") = false);

    m.def("write_synthetic_corpus",
          [](const std::filesystem::path& path, std::size_t n_posts, std::uint64_t seed) {
              synth::write_synthetic_corpus(path, synth::synthetic_corpus(n_posts, seed));
          },
          py::arg("path"), py::arg("n_posts") = 800, py::arg("seed") = 7);

    m.def("default_config", [] { return pipeline::config_to_json(pipeline::default_config()).dump(); });

    m.def("load_config",
          [](const std::string& config_path, const std::vector<std::string>& overrides) {
              return pipeline::config_to_json(pipeline::load_config(config_path, overrides)).dump();
          },
          py::arg("config_path") = "", py::arg("overrides") = std::vector<std::string>{});

    m.def("run_pipeline",
          [](const std::string& config_json, int threads, bool resume, bool deterministic, const std::string& last) {
              const auto config = pipeline::config_from_json(nlohmann::json::parse(config_json));
              pipeline::RunOptions options;
              options.threads = threads;
              options.resume = resume;
              options.deterministic = deterministic;
              const auto stage = parse_stage(last);
              py::gil_scoped_release release;
              return pipeline::run_pipeline(config, options, stage).manifest.dump();
          },
          py::arg("config_json"), py::arg("threads") = 1, py::arg("resume") = true, py::arg("deterministic") = false,
          py::arg("last") = "report");
}
