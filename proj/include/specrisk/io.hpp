#pragma once

#include <string>
#include <vector>

namespace specrisk {

// Writes `content` to `path` atomically: the bytes go to a sibling temp file
// which is then renamed over the target, so readers never observe a partial
// file. Parent directories are created as needed. Throws std::runtime_error
// on any filesystem failure.
void write_text_atomic(const std::string& path, const std::string& content);

// Lossless, locale-independent rendering of a double ('.' decimal separator,
// shortest round-trip form). Integral cells should be formatted by the caller.
std::string format_double(double value);

// CSV per RFC-ish conventions used across the artifact: ',' separator, LF
// line endings, mandatory header row. Cells are written verbatim (no quoting;
// callers only emit numbers and plain identifiers). Atomic like
// write_text_atomic. Throws std::invalid_argument on ragged rows.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// One plotted series: points (x, y) with optional symmetric error bars.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> yerr;  // empty, or one radius per point
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
};

// Renders a line chart with error bars to an SVG file. Plots are a courtesy:
// any failure (bad data, unwritable path) is swallowed and reported through
// the return value, never an exception.
bool write_svg_chart(const std::string& path, const PlotOptions& options,
                     const std::vector<PlotSeries>& series);

}  // namespace specrisk
