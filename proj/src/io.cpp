#include "specrisk/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <system_error>

namespace specrisk {

namespace {

namespace fs = std::filesystem;

std::string escape_xml(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
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

std::string short_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return buf;
}

// Tick positions at multiples of a 1/2/5 x 10^k step covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi, int target) {
  const double range = hi - lo;
  if (!(range > 0.0)) return {lo};
  const double raw = range / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * mult >= raw) {
      step = mag * mult;
      break;
    }
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * range; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * range ? 0.0 : t);
  }
  return ticks;
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create directory " + target.parent_path().string());
  }
  const fs::path temp = target.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + temp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + temp.string());
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw std::runtime_error("cannot rename " + temp.string() + " to " + path);
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (header.empty()) throw std::invalid_argument("CSV header row is mandatory");
  std::string content;
  auto append_row = [&content](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) content += ',';
      content += cells[i];
    }
    content += '\n';
  };
  append_row(header);
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("CSV row width does not match the header");
    }
    append_row(row);
  }
  write_text_atomic(path, content);
}

bool write_svg_chart(const std::string& path, const PlotOptions& options,
                     const std::vector<PlotSeries>& series) {
  try {
    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    constexpr int kColors = 8;

    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    bool any = false;
    for (const auto& s : series) {
      if (s.x.size() != s.y.size()) return false;
      if (!s.yerr.empty() && s.yerr.size() != s.y.size()) return false;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        double x = s.x[i];
        if (options.log_x) {
          if (!(x > 0.0)) return false;
          x = std::log10(x);
        }
        const double radius = s.yerr.empty() ? 0.0 : std::abs(s.yerr[i]);
        if (!std::isfinite(x) || !std::isfinite(s.y[i]) || !std::isfinite(radius)) return false;
        if (!any) {
          x_min = x_max = x;
          y_min = s.y[i] - radius;
          y_max = s.y[i] + radius;
          any = true;
        } else {
          x_min = std::min(x_min, x);
          x_max = std::max(x_max, x);
          y_min = std::min(y_min, s.y[i] - radius);
          y_max = std::max(y_max, s.y[i] + radius);
        }
      }
    }
    if (!any) return false;
    if (x_max - x_min < 1e-12) { x_min -= 1.0; x_max += 1.0; }
    if (y_max - y_min < 1e-12) { y_min -= 1.0; y_max += 1.0; }
    const double x_pad = 0.04 * (x_max - x_min), y_pad = 0.06 * (y_max - y_min);
    x_min -= x_pad; x_max += x_pad; y_min -= y_pad; y_max += y_pad;

    const double width = 860, height = 520;
    const double ml = 72, mr = 170, mt = 44, mb = 56;
    auto px = [&](double x) {
      if (options.log_x) x = std::log10(x);
      return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr);
    };
    auto px_linear = [&](double x) {
      return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr);
    };
    auto py = [&](double y) {
      return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb);
    };

    std::string svg;
    char buf[512];
    auto add = [&](const char* fmt, auto... args) {
      std::snprintf(buf, sizeof(buf), fmt, args...);
      svg += buf;
    };

    add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
        "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\" font-size=\"12\">\n",
        width, height, width, height);
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // Grid and tick labels. In log mode the tick values are exponents.
    for (double t : nice_ticks(x_min, x_max, 6)) {
      const double x = px_linear(t);
      add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#dddddd\"/>\n", x, mt,
          x, height - mb);
      const std::string label =
          options.log_x ? "1e" + short_number(t) : short_number(t);
      add("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n", x, height - mb + 16,
          label.c_str());
    }
    for (double t : nice_ticks(y_min, y_max, 6)) {
      const double y = py(t);
      add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#dddddd\"/>\n", ml, y,
          width - mr, y);
      add("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%s</text>\n", ml - 6, y + 4,
          short_number(t).c_str());
    }
    add("<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
        "stroke=\"#333333\"/>\n",
        ml, mt, width - ml - mr, height - mt - mb);

    add("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"15\">%s</text>\n",
        ml + (width - ml - mr) / 2, mt - 14, escape_xml(options.title).c_str());
    add("<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n",
        ml + (width - ml - mr) / 2, height - 12, escape_xml(options.x_label).c_str());
    add("<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">"
        "%s</text>\n",
        mt + (height - mt - mb) / 2, mt + (height - mt - mb) / 2,
        escape_xml(options.y_label).c_str());

    for (std::size_t s = 0; s < series.size(); ++s) {
      const char* color = kPalette[s % kColors];
      const auto& sr = series[s];
      if (!sr.yerr.empty()) {
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
          if (sr.yerr[i] == 0.0) continue;
          const double x = px(sr.x[i]);
          const double lo = py(sr.y[i] - sr.yerr[i]), hi = py(sr.y[i] + sr.yerr[i]);
          add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\"/>\n", x, lo, x,
              hi, color);
          add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\"/>\n", x - 3,
              lo, x + 3, lo, color);
          add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\"/>\n", x - 3,
              hi, x + 3, hi, color);
        }
      }
      if (sr.x.size() > 1) {
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
          add("%.1f,%.1f ", px(sr.x[i]), py(sr.y[i]));
        }
        svg += "\"/>\n";
      }
      for (std::size_t i = 0; i < sr.x.size(); ++i) {
        add("<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"%s\"/>\n", px(sr.x[i]),
            py(sr.y[i]), color);
      }
      const double ly = mt + 10 + 18.0 * static_cast<double>(s);
      add("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
          "stroke-width=\"2\"/>\n",
          width - mr + 10, ly, width - mr + 30, ly, color);
      add("<text x=\"%.1f\" y=\"%.1f\">%s</text>\n", width - mr + 36, ly + 4,
          escape_xml(sr.label).c_str());
    }
    svg += "</svg>\n";

    write_text_atomic(path, svg);
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace specrisk
