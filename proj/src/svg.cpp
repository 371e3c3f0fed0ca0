#include "evlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "evlab/evaluation.hpp"

namespace evlab {

namespace {

std::string fmt(double v, int prec = 2) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return std::string(buf);
}

std::string rect(double x, double y, double w, double h, const std::string& fill) {
    return "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(w) + "\" height=\"" +
           fmt(h) + "\" fill=\"" + fill + "\"/>\n";
}

std::string text(double x, double y, const std::string& s, int size = 11,
                 const std::string& anchor = "middle", const std::string& fill = "#222") {
    return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" + std::to_string(size) +
           "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + fill + "\">" +
           s + "</text>\n";
}

std::string header(int w, int h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
           "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
           std::to_string(h) + "\">\n" + rect(0, 0, w, h, "#ffffff");
}

// blue (low) -> red (high) ramp for rates in [0,1]
std::string heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    int r = static_cast<int>(std::lround(40 + 200 * v));
    int g = static_cast<int>(std::lround(80 - 40 * v));
    int b = static_cast<int>(std::lround(220 - 180 * v));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return std::string(buf);
}

}  // namespace

std::string svg_curve(const std::vector<CurvePoint>& points, const std::string& title) {
    const int W = 480, H = 320, ML = 56, MR = 20, MT = 36, MB = 44;
    std::string out = header(W, H);
    out += text(W / 2.0, 20, "detection rate vs N (" + title + ")", 13);
    const double px = ML, py = MT, pw = W - ML - MR, ph = H - MT - MB;
    out += "<rect x=\"" + fmt(px) + "\" y=\"" + fmt(py) + "\" width=\"" + fmt(pw) +
           "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double frac = i / 4.0;
        double y = py + ph * (1.0 - frac);
        out += text(px - 6, y + 4, fmt(frac), 10, "end");
    }
    if (!points.empty()) {
        int n_max = std::max(1, points.back().n);
        std::string poly;
        for (const CurvePoint& p : points) {
            double x = px + pw * static_cast<double>(p.n) / static_cast<double>(n_max);
            double y = py + ph * (1.0 - std::clamp(p.rate, 0.0, 1.0));
            poly += fmt(x) + "," + fmt(y) + " ";
            out += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) +
                   "\" r=\"3\" fill=\"#c33\"/>\n";
            out += text(x, py + ph + 16, std::to_string(p.n), 10);
        }
        out += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"#c33\" stroke-width=\"1.5\"/>\n";
    }
    out += text(W / 2.0, H - 8, "features manipulated (N)", 11);
    out += "</svg>\n";
    return out;
}

std::string svg_histogram(const std::map<int, int>& bins, double bin_width) {
    const int W = 480, H = 320, ML = 48, MR = 20, MT = 36, MB = 44;
    std::string out = header(W, H);
    out += text(W / 2.0, 20, "detectors per detection-rate drop bin (width " +
                                 fmt(bin_width, 0) + "pp)",
                12);
    const double px = ML, py = MT, pw = W - ML - MR, ph = H - MT - MB;
    int max_count = 1;
    for (const auto& [bin, count] : bins) max_count = std::max(max_count, count);
    const std::size_t n = std::max<std::size_t>(bins.size(), 1);
    double bw = pw / static_cast<double>(n);
    std::size_t i = 0;
    for (const auto& [bin, count] : bins) {
        double h = ph * static_cast<double>(count) / static_cast<double>(max_count);
        double x = px + bw * static_cast<double>(i) + 4;
        out += rect(x, py + ph - h, bw - 8, h, "#4a7");
        out += text(x + (bw - 8) / 2, py + ph + 16, std::to_string(bin), 10);
        out += text(x + (bw - 8) / 2, py + ph - h - 4, std::to_string(count), 10);
        ++i;
    }
    out += text(W / 2.0, H - 8, "drop bin (percentage points, upper edge)", 11);
    out += "</svg>\n";
    return out;
}

std::string svg_transfer_heatmap(const TransferMatrix& matrix) {
    const std::size_t n_gen = matrix.generator_names.size();
    const std::size_t n_tgt = matrix.target_names.size();
    const int cell = 96, ML = 110, MT = 70;
    const int W = ML + cell * static_cast<int>(n_tgt) + 24;
    const int H = MT + cell * static_cast<int>(n_gen) + 24;
    std::string out = header(W, H);
    out += text(W / 2.0, 20, "adversarial detection rate (cosine of top-k AMM)", 12);
    for (std::size_t j = 0; j < n_tgt; ++j) {
        out += text(ML + cell * (j + 0.5), MT - 10, matrix.target_names[j], 11);
    }
    for (std::size_t i = 0; i < n_gen; ++i) {
        out += text(ML - 8, MT + cell * (i + 0.5) + 4, matrix.generator_names[i], 11, "end");
        for (std::size_t j = 0; j < n_tgt; ++j) {
            double x = ML + cell * static_cast<double>(j);
            double y = MT + cell * static_cast<double>(i);
            out += rect(x + 1, y + 1, cell - 2, cell - 2, heat_color(matrix.rates[i][j]));
            out += text(x + cell / 2.0, y + cell / 2.0 - 2, fmt(matrix.rates[i][j]), 13, "middle",
                        "#fff");
            out += text(x + cell / 2.0, y + cell / 2.0 + 16,
                        "(" + fmt(matrix.cosine[i][j]) + ")", 11, "middle", "#fff");
        }
    }
    out += text(ML - 8, MT - 34, "generator \\ target", 10, "end");
    out += "</svg>\n";
    return out;
}

}  // namespace evlab
