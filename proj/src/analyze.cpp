#include "vecfold/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vecfold/error.hpp"

namespace vecfold::analyze {

using nlohmann::json;

namespace {

double euclidean(std::span<const float> x, std::span<const double> c) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double t = static_cast<double>(x[j]) - c[j];
        s += t * t;
    }
    return std::sqrt(s);
}

bool ranked_before(const RankedRow& a, const RankedRow& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.row < b.row);
}

void check_model(FloatView matrix, const cluster::KMeansModel& model) {
    if (model.centroids.cols() != matrix.cols() || model.labels.size() != matrix.rows()) {
        throw Error(Errc::DimensionMismatch, "model does not match matrix shape");
    }
}

} // namespace

std::vector<RankedRow> top_near_centroid(FloatView matrix, const cluster::KMeansModel& model, std::size_t cluster_id,
                                         std::size_t top_n) {
    if (cluster_id >= model.k) {
        throw Error(Errc::UnknownCluster, "cluster " + std::to_string(cluster_id) + " not in [0, " +
                                              std::to_string(model.k) + ")");
    }
    check_model(matrix, model);
    std::vector<RankedRow> rows;
    const auto centroid = model.centroids.row(cluster_id);
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
        if (model.labels[i] == cluster_id) {
            rows.push_back(RankedRow{i, euclidean(matrix.row(i), centroid)});
        }
    }
    const std::size_t keep = std::min(top_n, rows.size());
    std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(), ranked_before);
    rows.resize(keep);
    return rows;
}

std::string excerpt(std::string_view text, std::size_t max_chars) {
    std::string flat;
    flat.reserve(text.size());
    for (char c : text) {
        flat.push_back(c == '\n' || c == '\r' || c == '\t' ? ' ' : c);
    }
    std::string_view s(flat);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);

    std::size_t chars = 0;
    std::size_t pos = 0;
    while (pos < s.size() && chars < max_chars) {
        const auto lead = static_cast<unsigned char>(s[pos]);
        std::size_t len = 1;
        if (lead >= 0xF0) len = 4;
        else if (lead >= 0xE0) len = 3;
        else if (lead >= 0xC0) len = 2;
        pos = std::min(s.size(), pos + len);
        ++chars;
    }
    return std::string(s.substr(0, pos));
}

ClusterReport cluster_report(const ReportInputs& in) {
    if (!in.corpus || !in.model) {
        throw Error(Errc::InvalidArgument, "report needs a corpus and a model");
    }
    const auto& corpus = *in.corpus;
    const auto& model = *in.model;
    const std::size_t n = in.matrix.rows();

    if (in.matrix_ids.size() != n || corpus.size() != n) {
        throw Error(Errc::RunMismatch, "corpus has " + std::to_string(corpus.size()) + " posts but matrix has " +
                                           std::to_string(n) + " rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (corpus[i].id != in.matrix_ids[i]) {
            throw Error(Errc::RunMismatch, "matrix row " + std::to_string(i) + " is '" + in.matrix_ids[i] +
                                               "' but corpus post is '" + corpus[i].id + "'");
        }
    }
    if (model.labels.size() != n || model.centroids.cols() != in.matrix.cols() || model.centroids.rows() != model.k) {
        throw Error(Errc::RunMismatch, "clustering model does not match the embedding matrix");
    }
    for (auto label : model.labels) {
        if (label >= model.k) {
            throw Error(Errc::RunMismatch, "model label outside [0, k)");
        }
    }
    if (in.projection) {
        for (auto idx : in.projection->source_sample) {
            if (idx >= n) {
                throw Error(Errc::RunMismatch, "projection references row " + std::to_string(idx) + " beyond the matrix");
            }
        }
    }
    if (in.top_n == 0) {
        throw Error(Errc::InvalidArgument, "top_n must be at least 1");
    }

    ClusterReport report;
    report.k = model.k;
    report.n = n;
    report.top_n = in.top_n;
    report.run_metadata = in.run_metadata;
    report.created_at = in.created_at;

    // One pass: distance of every row to its own centroid, bucketed by cluster.
    std::vector<std::vector<RankedRow>> buckets(model.k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = model.labels[i];
        buckets[c].push_back(RankedRow{i, euclidean(in.matrix.row(i), model.centroids.row(c))});
    }
    std::vector<std::size_t> sampled(model.k, 0);
    if (in.projection) {
        for (auto idx : in.projection->source_sample) {
            ++sampled[model.labels[idx]];
        }
    }

    for (std::size_t c = 0; c < model.k; ++c) {
        auto& rows = buckets[c];
        ClusterSection section;
        section.cluster_id = c;
        section.size = rows.size();
        section.sample_points = sampled[c];
        const std::size_t keep = std::min(in.top_n, rows.size());
        std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end(), ranked_before);
        for (std::size_t r = 0; r < keep; ++r) {
            const auto& post = corpus[rows[r].row];
            section.top_posts.push_back(TopPost{post.id, rows[r].row, rows[r].distance,
                                                excerpt(post.title.empty() ? post.body : post.title),
                                                post.images.size()});
        }
        report.per_cluster.push_back(std::move(section));
    }
    return report;
}

json report_to_json(const ClusterReport& report) {
    json clusters = json::array();
    for (const auto& s : report.per_cluster) {
        json posts = json::array();
        for (const auto& p : s.top_posts) {
            posts.push_back(json{{"post_id", p.post_id},
                                 {"row", p.row},
                                 {"distance", p.distance},
                                 {"title_excerpt", p.title_excerpt},
                                 {"image_count", p.image_count}});
        }
        clusters.push_back(json{{"cluster_id", s.cluster_id},
                                {"size", s.size},
                                {"sample_points", s.sample_points},
                                {"top_posts", std::move(posts)}});
    }
    return json{{"k", report.k},
                {"n", report.n},
                {"top_n", report.top_n},
                {"per_cluster", std::move(clusters)},
                {"run_metadata", report.run_metadata},
                {"created_at", report.created_at}};
}

ClusterReport report_from_json(const json& j) {
    ClusterReport report;
    try {
        report.k = j.at("k").get<std::size_t>();
        report.n = j.at("n").get<std::size_t>();
        report.top_n = j.at("top_n").get<std::size_t>();
        report.run_metadata = j.at("run_metadata");
        report.created_at = j.at("created_at").get<std::string>();
        for (const auto& c : j.at("per_cluster")) {
            ClusterSection s;
            s.cluster_id = c.at("cluster_id").get<std::size_t>();
            s.size = c.at("size").get<std::size_t>();
            s.sample_points = c.at("sample_points").get<std::size_t>();
            for (const auto& p : c.at("top_posts")) {
                s.top_posts.push_back(TopPost{p.at("post_id").get<std::string>(), p.at("row").get<std::size_t>(),
                                              p.at("distance").get<double>(), p.at("title_excerpt").get<std::string>(),
                                              p.at("image_count").get<std::size_t>()});
            }
            report.per_cluster.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::FormatMismatch, std::string("report JSON: ") + e.what());
    }
    return report;
}

std::string render_markdown(const ClusterReport& report) {
    std::vector<const ClusterSection*> order;
    for (const auto& s : report.per_cluster) {
        order.push_back(&s);
    }
    std::stable_sort(order.begin(), order.end(), [](const ClusterSection* a, const ClusterSection* b) {
        return a->size > b->size;
    });

    auto cell = [](std::string_view text) {
        std::string out;
        for (char c : text) {
            if (c == '|') {
                out += "\\|";
            } else {
                out += c;
            }
        }
        return out;
    };

    std::ostringstream md;
    md << "# Cluster report\n\n";
    md << "- posts: " << report.n << "\n";
    md << "- clusters: " << report.k << "\n";
    md << "- top posts per cluster: " << report.top_n << "\n";
    if (!report.created_at.empty()) {
        md << "- created: " << report.created_at << "\n";
    }
    md << "\nClusters are listed largest first. Each table shows the posts nearest the centroid; "
          "naming the cluster is left to the reader.\n";

    for (const auto* s : order) {
        md << "\n## Cluster " << s->cluster_id << " (" << s->size << " posts";
        if (s->sample_points > 0) {
            md << ", " << s->sample_points << " plotted";
        }
        md << ")\n\n";
        if (s->top_posts.empty()) {
            md << "_empty cluster_\n";
            continue;
        }
        md << "| rank | post | distance | images | title |\n";
        md << "|---:|---|---:|---:|---|\n";
        for (std::size_t r = 0; r < s->top_posts.size(); ++r) {
            const auto& p = s->top_posts[r];
            char dist[32];
            std::snprintf(dist, sizeof(dist), "%.4f", p.distance);
            md << "| " << (r + 1) << " | " << cell(p.post_id) << " | " << dist << " | " << p.image_count << " | "
               << cell(p.title_excerpt) << " |\n";
        }
    }

    if (!report.run_metadata.empty()) {
        md << "\n## Run configuration\n\n```json\n" << report.run_metadata.dump(2) << "\n```\n";
    }
    return md.str();
}

std::vector<std::uint32_t> labels_for_sample(std::span<const std::uint32_t> labels,
                                             std::span<const std::size_t> source_sample) {
    std::vector<std::uint32_t> out;
    out.reserve(source_sample.size());
    for (auto idx : source_sample) {
        if (idx >= labels.size()) {
            throw Error(Errc::LengthMismatch, "sample row " + std::to_string(idx) + " has no label");
        }
        out.push_back(labels[idx]);
    }
    return out;
}

} // namespace vecfold::analyze
