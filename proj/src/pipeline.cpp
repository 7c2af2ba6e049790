#include "vecfold/pipeline.hpp"

#include <chrono>
#include <cerrno>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include "vecfold/analyze.hpp"
#include "vecfold/corpus.hpp"
#include "vecfold/error.hpp"
#include "vecfold/store.hpp"

namespace vecfold::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

/******************
 *** Config *******
 ******************/

PipelineConfig default_config() {
    PipelineConfig c;
    c.kmeans.minibatch = true;
    return c;
}

json config_to_json(const PipelineConfig& c) {
    return json{{"corpus_path", c.corpus_path},
                {"strict", c.strict},
                {"template", prompt::config_to_json(c.template_config)},
                {"provider", embed::descriptor_to_json(c.provider)},
                {"embed", {{"batch_size", c.embed_batch_size}}},
                {"kmeans", cluster::config_to_json(c.kmeans)},
                {"projection", project::config_to_json(c.projection)},
                {"report", {{"top_n", c.top_n}}},
                {"output_dir", c.output_dir}};
}

void merge_config(json& base, const json& overlay, const std::string& prefix) {
    if (!overlay.is_object()) {
        throw Error(Errc::ConfigError, (prefix.empty() ? std::string("config") : prefix) + " must be a JSON object");
    }
    for (const auto& item : overlay.items()) {
        const std::string key = prefix.empty() ? item.key() : prefix + "." + item.key();
        auto it = base.find(item.key());
        if (it == base.end()) {
            throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
        }
        if (it->is_object()) {
            merge_config(*it, item.value(), key);
        } else {
            *it = item.value();
        }
    }
}

void apply_override(json& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(Errc::ConfigError, "override must look like key=value: '" + std::string(assignment) + "'");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }

    // Rebuild the nested object for the dotted key and merge it through the checked path.
    json overlay = value;
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) {
        if (part.empty()) {
            throw Error(Errc::ConfigError, "empty segment in override key '" + key + "'");
        }
        parts.push_back(part);
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        overlay = json{{*it, overlay}};
    }
    // A scalar replacing a section would silently drop the section.
    const json* target = &config;
    for (const auto& part : parts) {
        auto found = target->find(part);
        if (found == target->end()) {
            throw Error(Errc::ConfigError, "unknown config key '" + key + "'");
        }
        target = &*found;
    }
    if (target->is_object() && !value.is_object()) {
        throw Error(Errc::ConfigError, "'" + key + "' is a section, not a value");
    }
    merge_config(config, overlay);
}

PipelineConfig config_from_json(const json& j) {
    json merged = config_to_json(default_config());
    merge_config(merged, j);

    PipelineConfig c;
    try {
        c.corpus_path = merged.at("corpus_path").get<std::string>();
        c.strict = merged.at("strict").get<bool>();
        c.embed_batch_size = merged.at("embed").at("batch_size").get<std::size_t>();
        c.top_n = merged.at("report").at("top_n").get<std::size_t>();
        c.output_dir = merged.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(Errc::ConfigError, std::string("config: ") + e.what());
    }
    c.template_config = prompt::config_from_json(merged.at("template"));
    c.provider = embed::descriptor_from_json(merged.at("provider"));
    c.kmeans = cluster::config_from_json(merged.at("kmeans"));
    c.projection = project::config_from_json(merged.at("projection"));
    if (c.embed_batch_size == 0) {
        throw Error(Errc::ConfigError, "embed.batch_size must be at least 1");
    }
    if (c.top_n == 0) {
        throw Error(Errc::ConfigError, "report.top_n must be at least 1");
    }
    return c;
}

PipelineConfig load_config(const fs::path& config_path, const std::vector<std::string>& overrides) {
    json merged = config_to_json(default_config());
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) {
            throw Error(Errc::ConfigError, "cannot read config file " + config_path.string());
        }
        json file;
        try {
            file = json::parse(in);
        } catch (const json::parse_error& e) {
            throw Error(Errc::ConfigError, config_path.string() + ": " + e.what());
        }
        merge_config(merged, file);
    }
    for (const auto& o : overrides) {
        apply_override(merged, o);
    }
    if (merged["output_dir"].get<std::string>().empty()) {
        if (const char* env = std::getenv("VECFOLD_OUTPUT_DIR"); env && *env) {
            merged["output_dir"] = env;
        }
    }
    return config_from_json(merged);
}

std::string_view stage_name(Stage stage) {
    switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::template_preview: return "template";
    case Stage::embed: return "embed";
    case Stage::cluster: return "cluster";
    case Stage::project: return "project";
    case Stage::report: return "report";
    }
    return "unknown";
}

/******************
 *** Hashing ******
 ******************/

namespace {

struct Fnv {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

std::string stage_hash(const json& inputs) { return fnv1a_hex(inputs.dump()); }

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error(Errc::UnwritablePath, "cannot write " + path.string());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return {};
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// One pipeline process per run directory. A lock left by a dead process is taken over.
class RunLock {
public:
    explicit RunLock(fs::path path) : path_(std::move(path)) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                const auto pid = std::to_string(::getpid()) + "\n";
                [[maybe_unused]] auto ignored = ::write(fd, pid.data(), pid.size());
                ::close(fd);
                return;
            }
            if (errno != EEXIST) {
                throw Error(Errc::UnwritablePath, "cannot create lock " + path_.string());
            }
            const long holder = std::atol(read_text(path_).c_str());
            if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM)) {
                throw Error(Errc::Locked, "run directory is locked by process " + std::to_string(holder) + " (" +
                                              path_.string() + ")");
            }
            std::error_code ec;
            fs::remove(path_, ec);
        }
        throw Error(Errc::Locked, "could not acquire " + path_.string());
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

json record_to_json(const StageRecord& r) {
    return json{{"name", r.name},       {"hash", r.hash},         {"status", r.status},
                {"seconds", r.seconds}, {"outputs", r.outputs}, {"details", r.details}};
}

StageRecord record_from_json(const json& j) {
    StageRecord r;
    r.name = j.value("name", std::string());
    r.hash = j.value("hash", std::string());
    r.status = j.value("status", std::string());
    r.seconds = j.value("seconds", 0.0);
    r.outputs = j.value("outputs", std::vector<std::string>{});
    r.details = j.value("details", json::object());
    return r;
}

} // namespace

std::string fnv1a_hex(std::string_view bytes) {
    Fnv f;
    f.update(bytes);
    return f.hex();
}

std::string file_digest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::FileNotReadable, "cannot read " + path.string());
    }
    Fnv f;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        f.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
    }
    return f.hex();
}

/******************
 *** Runner *******
 ******************/

RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options, Stage last) {
    if (config.corpus_path.empty()) {
        throw Error(Errc::ConfigError, "corpus_path is not set");
    }
    if (config.output_dir.empty()) {
        throw Error(Errc::ConfigError, "output_dir is not set (and VECFOLD_OUTPUT_DIR is empty)");
    }
    const fs::path run_dir = config.output_dir;
    {
        std::error_code ec;
        fs::create_directories(run_dir, ec);
        if (ec || !fs::is_directory(run_dir) || ::access(run_dir.c_str(), W_OK) != 0) {
            throw Error(Errc::ConfigError, "output_dir " + run_dir.string() + " is not writable");
        }
    }
    RunLock lock(run_dir / files::lock);

    const int threads = options.deterministic ? 1 : std::max(1, options.threads);
    const json config_json = config_to_json(config);

    std::map<std::string, StageRecord> previous;
    if (options.resume) {
        const auto text = read_text(run_dir / files::manifest);
        if (!text.empty()) {
            try {
                const auto old = json::parse(text);
                for (const auto& r : old.value("stages", json::array())) {
                    auto rec = record_from_json(r);
                    previous[rec.name] = std::move(rec);
                }
            } catch (const json::exception&) {
                previous.clear();
            }
        }
    }

    RunSummary summary;
    summary.run_dir = run_dir;
    std::map<std::string, StageRecord> current = previous;

    std::string corpus_digest;
    auto write_manifest = [&]() {
        json stages = json::array();
        for (auto s : {Stage::ingest, Stage::template_preview, Stage::embed, Stage::cluster, Stage::project, Stage::report}) {
            auto it = current.find(std::string(stage_name(s)));
            if (it != current.end()) {
                stages.push_back(record_to_json(it->second));
            }
        }
        json manifest{{"vecfold_version", VECFOLD_VERSION},
                      {"compiler", __VERSION__},
                      {"formats", {{"embm", store::format_version}}},
                      {"config", config_json},
                      {"config_hash", fnv1a_hex(config_json.dump())},
                      {"run_shape",
                       {{"k", config.kmeans.k}, {"sample_size", config.projection.sample_size}, {"top_n", config.top_n}}},
                      {"deterministic", options.deterministic},
                      {"threads", threads},
                      {"corpus_digest", corpus_digest},
                      {"stages", std::move(stages)}};
        write_text(run_dir / files::manifest, manifest.dump(2) + "\n");
        summary.manifest = std::move(manifest);
    };

    auto log = [&](const std::string& line) {
        if (options.log) {
            *options.log << "[vecfold] " << line << std::endl;
        }
    };

    // Runs or reuses a stage. `body` returns the stage details.
    auto run_stage = [&](Stage stage, const std::string& hash, const std::vector<std::string>& outputs,
                         const std::function<json()>& body) {
        const std::string name(stage_name(stage));
        StageRecord record;
        record.name = name;
        record.hash = hash;
        record.outputs = outputs;

        auto prev = previous.find(name);
        const bool outputs_exist = std::all_of(outputs.begin(), outputs.end(),
                                               [&](const std::string& f) { return fs::exists(run_dir / f); });
        if (options.resume && prev != previous.end() && prev->second.hash == hash && outputs_exist) {
            record.status = "reused";
            record.details = prev->second.details;
            log("stage " + name + ": reused");
        } else {
            const auto start = std::chrono::steady_clock::now();
            try {
                record.details = body();
            } catch (Error& e) {
                e.add_context("stage " + name);
                throw;
            } catch (const std::exception& e) {
                throw Error(Errc::InvalidArgument, "stage " + name + ": " + e.what());
            }
            record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            record.status = "ran";
            char secs[32];
            std::snprintf(secs, sizeof(secs), "%.2f", record.seconds);
            log("stage " + name + ": ran in " + secs + " s");
        }
        current[name] = record;
        summary.stages.push_back(record);
        write_manifest();
    };

    try {
        corpus_digest = file_digest(config.corpus_path);
    } catch (Error& e) {
        e.add_context("stage ingest");
        throw;
    }

    corpus::CorpusHandle corpus;
    auto get_corpus = [&]() {
        if (!corpus) {
            corpus = corpus::load_corpus(config.corpus_path, config.strict);
        }
        return corpus;
    };

    const fs::path matrix_path = run_dir / files::matrix;

    // ingest
    const auto ingest_hash = stage_hash(json{{"corpus", corpus_digest}, {"strict", config.strict}});
    run_stage(Stage::ingest, ingest_hash, {std::string(files::stats)}, [&]() {
        const auto c = get_corpus();
        json stats = corpus::stats_to_json(corpus::corpus_stats(*c));
        json skipped = json::array();
        for (const auto& s : c->skipped()) {
            skipped.push_back(json{{"line", s.line}, {"field", s.field}, {"reason", s.reason}});
        }
        stats["skipped_records"] = skipped;
        stats["unknown_keys"] = c->unknown_keys();
        write_text(run_dir / files::stats, stats.dump(2) + "\n");
        return json{{"total_posts", c->size()}, {"skipped", c->skipped().size()}};
    });
    if (last == Stage::ingest) return summary;

    // template
    const auto template_hash =
        stage_hash(json{{"ingest", ingest_hash}, {"template", prompt::config_to_json(config.template_config)}});
    run_stage(Stage::template_preview, template_hash, {std::string(files::preview)}, [&]() {
        const auto c = get_corpus();
        std::string lines;
        const std::size_t count = std::min<std::size_t>(10, c->size());
        for (std::size_t i = 0; i < count; ++i) {
            lines += prompt::templated_to_json(prompt::render_template((*c)[i], config.template_config)).dump();
            lines += '\n';
        }
        write_text(run_dir / files::preview, lines);
        return json{{"previewed", count}};
    });
    if (last == Stage::template_preview) return summary;

    // embed
    const auto embed_hash =
        stage_hash(json{{"template", template_hash}, {"provider", embed::descriptor_to_json(config.provider)}});
    const std::string ids_name = std::string(files::matrix) + ".ids";
    run_stage(Stage::embed, embed_hash, {std::string(files::matrix), ids_name}, [&]() {
        const auto c = get_corpus();
        const fs::path marker = run_dir / (std::string(files::matrix) + ".hash");
        const bool can_resume = options.resume && fs::exists(matrix_path) && read_text(marker) == embed_hash;
        if (!can_resume) {
            std::error_code ec;
            fs::remove(matrix_path, ec);
            fs::remove(store::ids_path(matrix_path), ec);
        }
        write_text(marker, embed_hash);
        auto provider = embed::make_provider(config.provider);
        const auto result = embed::embed_corpus(*provider, *c, config.template_config, matrix_path,
                                                embed::EmbedCorpusOptions{config.embed_batch_size, can_resume, threads});
        if (result.truncated_posts > 0) {
            log("embed: " + std::to_string(result.truncated_posts) + " posts had images beyond the first dropped");
        }
        return json{{"rows", result.rows},
                    {"resumed_rows", result.resumed_rows},
                    {"provider_calls", result.provider_calls},
                    {"truncated_posts", result.truncated_posts},
                    {"dim", config.provider.dim}};
    });
    if (last == Stage::embed) return summary;

    // cluster
    const auto cluster_hash =
        stage_hash(json{{"embed", embed_hash}, {"kmeans", cluster::config_to_json(config.kmeans)}});
    run_stage(Stage::cluster, cluster_hash, {std::string(files::model), std::string(files::labels)}, [&]() {
        const auto reader = store::MatrixReader::open(matrix_path);
        const auto model = cluster::fit(reader.view(), config.kmeans, threads);
        cluster::save_model(run_dir / files::model, model);
        cluster::write_labels(run_dir / files::labels, model.labels);
        return json{{"inertia", model.inertia}, {"iterations", model.iterations}, {"algorithm", model.algorithm}};
    });
    if (last == Stage::cluster) return summary;

    // project
    const bool serial_layout = options.deterministic || threads == 1;
    const auto project_hash = stage_hash(json{{"embed", embed_hash},
                                              {"projection", project::config_to_json(config.projection)},
                                              {"serial", serial_layout}});
    run_stage(Stage::project, project_hash, {std::string(files::projection)}, [&]() {
        const auto reader = store::MatrixReader::open(matrix_path);
        const auto projection = project::project(reader.view(), config.projection, threads, serial_layout);
        project::write_projection_csv(run_dir / files::projection, projection);
        return json{{"points", projection.source_sample.size()}, {"curve_a", projection.curve.a},
                    {"curve_b", projection.curve.b}};
    });
    if (last == Stage::project) return summary;

    // report
    const auto report_hash = stage_hash(json{{"cluster", cluster_hash},
                                             {"project", project_hash},
                                             {"top_n", config.top_n},
                                             {"deterministic", options.deterministic}});
    run_stage(Stage::report, report_hash,
              {std::string(files::report_json), std::string(files::report_md), std::string(files::scatter_svg),
               std::string(files::scatter_csv)},
              [&]() {
                  const auto c = get_corpus();
                  const auto reader = store::MatrixReader::open(matrix_path);
                  const auto ids = reader.ids();
                  auto model = cluster::load_model(run_dir / files::model);
                  model.labels = cluster::read_labels(run_dir / files::labels);
                  const auto projection = project::read_projection_csv(run_dir / files::projection);
                  const auto curve = project::fit_curve(config.projection.min_dist);

                  json projection_meta = project::config_to_json(config.projection);
                  projection_meta["curve_a"] = curve.a;
                  projection_meta["curve_b"] = curve.b;

                  analyze::ReportInputs in;
                  in.corpus = c.get();
                  in.matrix = reader.view();
                  in.matrix_ids = ids;
                  in.model = &model;
                  in.projection = &projection;
                  in.top_n = config.top_n;
                  json identity = config_json;
                  identity.erase("output_dir");
                  in.run_metadata = json{{"run_id", fnv1a_hex(identity.dump())},
                                         {"seed", config.kmeans.seed},
                                         {"provider", embed::descriptor_to_json(config.provider)},
                                         {"template", prompt::config_to_json(config.template_config)},
                                         {"kmeans", cluster::config_to_json(config.kmeans)},
                                         {"projection", projection_meta},
                                         {"model", {{"inertia", model.inertia}, {"iterations", model.iterations}}}};
                  in.created_at = options.deterministic ? "1970-01-01T00:00:00Z" : utc_now();

                  const auto report = analyze::cluster_report(in);
                  write_text(run_dir / files::report_json, analyze::report_to_json(report).dump(2) + "\n");
                  write_text(run_dir / files::report_md, analyze::render_markdown(report));

                  const auto point_labels = analyze::labels_for_sample(model.labels, projection.source_sample);
                  analyze::scatter_export(projection, point_labels, run_dir / files::scatter_svg,
                                          analyze::ScatterFormat::svg, model.k);
                  analyze::scatter_export(projection, point_labels, run_dir / files::scatter_csv,
                                          analyze::ScatterFormat::csv, model.k);
                  return json{{"clusters", report.per_cluster.size()}};
              });
    return summary;
}

} // namespace vecfold::pipeline
