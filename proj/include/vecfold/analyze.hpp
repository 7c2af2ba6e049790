#ifndef VECFOLD_ANALYZE_HPP
#define VECFOLD_ANALYZE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vecfold/cluster.hpp"
#include "vecfold/corpus.hpp"
#include "vecfold/project.hpp"

namespace vecfold::analyze {

inline constexpr std::size_t default_top_n = 10;
inline constexpr std::size_t excerpt_chars = 80;

struct RankedRow {
    std::size_t row;
    double distance;

    bool operator==(const RankedRow&) const = default;
};

/**
 * The `top_n` rows labelled `cluster_id` closest (Euclidean) to that
 * cluster's centroid, ascending, ties toward the lower row index.
 * Throws UnknownCluster when cluster_id >= k.
 */
std::vector<RankedRow> top_near_centroid(FloatView matrix, const cluster::KMeansModel& model, std::size_t cluster_id,
                                         std::size_t top_n);

struct TopPost {
    std::string post_id;
    std::size_t row = 0;
    double distance = 0.0;
    std::string title_excerpt;
    std::size_t image_count = 0;
};

struct ClusterSection {
    std::size_t cluster_id = 0;
    std::size_t size = 0;
    /// Points of this cluster present in the projection sample.
    std::size_t sample_points = 0;
    std::vector<TopPost> top_posts;
};

struct ClusterReport {
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t top_n = default_top_n;
    std::vector<ClusterSection> per_cluster;
    nlohmann::json run_metadata = nlohmann::json::object();
    std::string created_at;
};

struct ReportInputs {
    const corpus::Corpus* corpus = nullptr;
    FloatView matrix;
    /// Sidecar ids of `matrix`, row-aligned.
    std::span<const std::string> matrix_ids;
    const cluster::KMeansModel* model = nullptr;
    /// Optional.
    const project::Projection2D* projection = nullptr;
    std::size_t top_n = default_top_n;
    nlohmann::json run_metadata = nlohmann::json::object();
    std::string created_at;
};

/**
 * Assemble per-cluster sizes and centroid-nearest posts.
 * Throws RunMismatch when the inputs do not come from the same run: corpus
 * and matrix ids differ, or the model or projection do not fit the matrix.
 */
ClusterReport cluster_report(const ReportInputs& inputs);

nlohmann::json report_to_json(const ClusterReport& report);
ClusterReport report_from_json(const nlohmann::json& j);

/// Markdown rendering, clusters in descending size order.
std::string render_markdown(const ClusterReport& report);

/// First `max_chars` code points of the trimmed text, control whitespace flattened to spaces.
std::string excerpt(std::string_view text, std::size_t max_chars = excerpt_chars);

/// Labels of the projected points, picked out of the full label vector.
std::vector<std::uint32_t> labels_for_sample(std::span<const std::uint32_t> labels,
                                             std::span<const std::size_t> source_sample);

enum class ScatterFormat { csv, svg };

/// CSV: header `x,y,cluster`, one line per point.
std::string render_scatter_csv(const Matrix<double>& coords, std::span<const std::uint32_t> point_labels);

/// SVG: one circle per point colored from a fixed 20-color palette, with a legend of `k` entries.
std::string render_scatter_svg(const Matrix<double>& coords, std::span<const std::uint32_t> point_labels,
                               std::size_t k, std::string_view title = "k-means clusters");

/**
 * Write a scatter file. `point_labels` holds one label per projected point.
 * Throws LengthMismatch or UnwritablePath.
 */
void scatter_export(const project::Projection2D& projection, std::span<const std::uint32_t> point_labels,
                    const std::filesystem::path& out_path, ScatterFormat format, std::size_t k);

/// The 20 palette entries as #rrggbb.
std::span<const std::string_view> palette();

} // namespace vecfold::analyze

#endif
