#ifndef EVLAB_SVG_HPP
#define EVLAB_SVG_HPP

#include <map>
#include <string>
#include <vector>

namespace evlab {

struct CurvePoint;
struct TransferMatrix;

// Self-contained static SVG renderers. Output bytes depend only on the data.
std::string svg_curve(const std::vector<CurvePoint>& points, const std::string& title);
std::string svg_histogram(const std::map<int, int>& bins, double bin_width);
std::string svg_transfer_heatmap(const TransferMatrix& matrix);

}  // namespace evlab

#endif
