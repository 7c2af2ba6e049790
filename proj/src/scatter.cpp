#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vecfold/analyze.hpp"
#include "vecfold/error.hpp"

namespace vecfold::analyze {

namespace {

// tab20
constexpr std::array<std::string_view, 20> colors = {
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728",
    "#ff9896", "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2",
    "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
};

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace

std::span<const std::string_view> palette() { return colors; }

std::string render_scatter_csv(const Matrix<double>& coords, std::span<const std::uint32_t> point_labels) {
    if (coords.rows() != point_labels.size()) {
        throw Error(Errc::LengthMismatch, "label count differs from projected point count");
    }
    std::string out = "x,y,cluster\n";
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        out += project::format_double(coords(i, 0));
        out += ',';
        out += project::format_double(coords(i, 1));
        out += ',';
        out += std::to_string(point_labels[i]);
        out += '\n';
    }
    return out;
}

std::string render_scatter_svg(const Matrix<double>& coords, std::span<const std::uint32_t> point_labels,
                               std::size_t k, std::string_view title) {
    if (coords.rows() != point_labels.size()) {
        throw Error(Errc::LengthMismatch, "label count differs from projected point count");
    }
    constexpr double plot_w = 800.0;
    constexpr double plot_h = 600.0;
    constexpr double margin = 40.0;
    constexpr double legend_w = 180.0;
    const double width = plot_w + legend_w;
    const double height = std::max(plot_h, margin * 2 + 18.0 * static_cast<double>(k));

    std::vector<std::size_t> counts(k, 0);
    for (auto l : point_labels) {
        if (l < k) {
            ++counts[l];
        }
    }

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        xmin = std::min(xmin, coords(i, 0));
        xmax = std::max(xmax, coords(i, 0));
        ymin = std::min(ymin, coords(i, 1));
        ymax = std::max(ymax, coords(i, 1));
    }
    if (coords.rows() == 0) {
        xmin = ymin = -1.0;
        xmax = ymax = 1.0;
    }
    if (xmax - xmin <= 0.0) { xmin -= 1.0; xmax += 1.0; }
    if (ymax - ymin <= 0.0) { ymin -= 1.0; ymax += 1.0; }
    const double sx = (plot_w - 2 * margin) / (xmax - xmin);
    const double sy = (plot_h - 2 * margin) / (ymax - ymin);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed2(width) << "\" height=\"" << fixed2(height)
        << "\" viewBox=\"0 0 " << fixed2(width) << ' ' << fixed2(height) << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << fixed2(width) << "\" height=\"" << fixed2(height)
        << "\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"" << fixed2(margin) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
        << escape_xml(title) << "</text>\n";
    svg << "<rect x=\"" << fixed2(margin) << "\" y=\"" << fixed2(margin) << "\" width=\"" << fixed2(plot_w - 2 * margin)
        << "\" height=\"" << fixed2(plot_h - 2 * margin) << "\" fill=\"none\" stroke=\"#444444\"/>\n";

    svg << "<g id=\"points\">\n";
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        const double px = margin + (coords(i, 0) - xmin) * sx;
        const double py = plot_h - margin - (coords(i, 1) - ymin) * sy;
        svg << "<circle cx=\"" << fixed2(px) << "\" cy=\"" << fixed2(py) << "\" r=\"2\" fill=\""
            << colors[point_labels[i] % colors.size()] << "\" fill-opacity=\"0.8\"/>\n";
    }
    svg << "</g>\n";
    if (coords.rows() == 0) {
        svg << "<text x=\"" << fixed2(plot_w / 2) << "\" y=\"" << fixed2(plot_h / 2)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">no points</text>\n";
    }

    svg << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t c = 0; c < k; ++c) {
        const double y = margin + 18.0 * static_cast<double>(c);
        svg << "<rect x=\"" << fixed2(plot_w) << "\" y=\"" << fixed2(y) << "\" width=\"12\" height=\"12\" fill=\""
            << colors[c % colors.size()] << "\"/>";
        svg << "<text x=\"" << fixed2(plot_w + 18) << "\" y=\"" << fixed2(y + 10) << "\">cluster " << c << " ("
            << counts[c] << ")</text>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

void scatter_export(const project::Projection2D& projection, std::span<const std::uint32_t> point_labels,
                    const std::filesystem::path& out_path, ScatterFormat format, std::size_t k) {
    if (projection.coords.rows() != point_labels.size()) {
        throw Error(Errc::LengthMismatch, "label count " + std::to_string(point_labels.size()) +
                                              " differs from projected point count " +
                                              std::to_string(projection.coords.rows()));
    }
    const std::string body = format == ScatterFormat::csv ? render_scatter_csv(projection.coords, point_labels)
                                                          : render_scatter_svg(projection.coords, point_labels, k);
    std::ofstream out(out_path, std::ios::binary);
    if (!out || !out.write(body.data(), static_cast<std::streamsize>(body.size()))) {
        throw Error(Errc::UnwritablePath, "cannot write " + out_path.string());
    }
}

} // namespace vecfold::analyze
