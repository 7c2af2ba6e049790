#ifndef VECFOLD_PIPELINE_HPP
#define VECFOLD_PIPELINE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vecfold/cluster.hpp"
#include "vecfold/embed.hpp"
#include "vecfold/project.hpp"
#include "vecfold/prompt.hpp"

namespace vecfold::pipeline {

struct PipelineConfig {
    std::string corpus_path;
    bool strict = false;
    prompt::TemplateConfig template_config;
    embed::ProviderDescriptor provider;
    std::size_t embed_batch_size = 64;
    cluster::KMeansConfig kmeans;
    project::ProjectionConfig projection;
    std::size_t top_n = 10;
    std::string output_dir;
};

/// Defaults: k = 20 with mini-batch fitting, 70,000-point projection sample, top 10 posts per cluster.
PipelineConfig default_config();

nlohmann::json config_to_json(const PipelineConfig& config);

/// Throws ConfigError on unknown keys, wrong types or invalid values.
PipelineConfig config_from_json(const nlohmann::json& j);

/**
 * Layer `overlay` onto `base`, rejecting keys `base` does not have.
 * Throws ConfigError naming the offending dotted key.
 */
void merge_config(nlohmann::json& base, const nlohmann::json& overlay, const std::string& prefix = "");

/// Apply one `dotted.key=value` override; the value is parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& config, std::string_view assignment);

/// Defaults, then the optional config file, then overrides; output_dir falls back to VECFOLD_OUTPUT_DIR.
PipelineConfig load_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);

enum class Stage { ingest, template_preview, embed, cluster, project, report };

std::string_view stage_name(Stage stage);

struct RunOptions {
    int threads = 1;
    bool resume = true;
    /// Single-threaded, fixed timestamps: reruns are byte-identical.
    bool deterministic = false;
    /// Progress lines; may be null.
    std::ostream* log = nullptr;
};

struct StageRecord {
    std::string name;
    std::string hash;
    /// "ran" or "reused".
    std::string status;
    double seconds = 0.0;
    std::vector<std::string> outputs;
    nlohmann::json details = nlohmann::json::object();
};

struct RunSummary {
    std::filesystem::path run_dir;
    std::vector<StageRecord> stages;
    nlohmann::json manifest;
};

/// Output file names inside a run directory.
namespace files {
inline constexpr std::string_view stats = "stats.json";
inline constexpr std::string_view preview = "templated_preview.jsonl";
inline constexpr std::string_view matrix = "embeddings.embm";
inline constexpr std::string_view model = "model.json";
inline constexpr std::string_view labels = "labels.klbl";
inline constexpr std::string_view projection = "projection.csv";
inline constexpr std::string_view scatter_svg = "scatter.svg";
inline constexpr std::string_view scatter_csv = "scatter.csv";
inline constexpr std::string_view report_json = "report.json";
inline constexpr std::string_view report_md = "report.md";
inline constexpr std::string_view manifest = "manifest.json";
inline constexpr std::string_view lock = "run.lock";
} // namespace files

/**
 * Run every stage up to and including `last`.
 *
 * A stage is skipped when the manifest records it with the same input hash
 * and all its outputs still exist. The hash of each stage covers its own
 * configuration and the hashes of the stages it consumes, so a changed
 * upstream input always forces a rerun downstream. A stage error aborts the
 * run with the stage name prepended and earlier artifacts left in place.
 */
RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options, Stage last = Stage::report);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

/// FNV-1a of a file's contents, hex encoded.
std::string file_digest(const std::filesystem::path& path);

} // namespace vecfold::pipeline

#endif
