#pragma once

// Result tables and figures: summary rows aggregated per comparison kind and
// cut point, a CSV codec with shortest round-trip float formatting, and a
// self-contained SVG line chart with translucent confidence bands.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tml {

struct SummaryRow {
  std::string metric;  // stitch | cka
  std::string kind;    // pi-pi | pi-raw | raw-pi | raw-raw | self
  int cut = 0;
  double mean = 0.0;
  double half_width = 0.0;
  int n_pairs = 0;               // valid values entering the mean
  std::vector<double> values;    // raw per-pair values, nan marks missing

  bool operator==(const SummaryRow&) const = default;
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("csv: malformed number '" + s + "'");
  return v;
}

inline std::string summary_csv_text(const std::vector<SummaryRow>& rows) {
  std::string out =
      "metric,comparison_kind,cut_index,mean,ci_half_width,n_pairs,values\n";
  for (const auto& r : rows) {
    out += r.metric + "," + r.kind + "," + std::to_string(r.cut) + "," +
           format_double(r.mean) + "," + format_double(r.half_width) + "," +
           std::to_string(r.n_pairs) + ",";
    for (size_t i = 0; i < r.values.size(); ++i)
      out += (i ? ";" : "") + format_double(r.values[i]);
    out += "\n";
  }
  return out;
}

inline void write_summary_csv(const std::string& path,
                              const std::vector<SummaryRow>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot write " + path);
  auto text = summary_csv_text(rows);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f.good()) throw std::runtime_error("write failed for " + path);
}

inline std::vector<SummaryRow> parse_summary_csv_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) ||
      line !=
          "metric,comparison_kind,cut_index,mean,ci_half_width,n_pairs,values")
    throw std::invalid_argument("csv: missing or mismatched header");
  std::vector<SummaryRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (line.back() == ',') cols.push_back("");
    if (cols.size() != 7)
      throw std::invalid_argument("csv: expected 7 columns, got " +
                                  std::to_string(cols.size()));
    SummaryRow r;
    r.metric = cols[0];
    r.kind = cols[1];
    r.cut = static_cast<int>(std::stol(cols[2]));
    r.mean = parse_double(cols[3]);
    r.half_width = parse_double(cols[4]);
    r.n_pairs = static_cast<int>(std::stol(cols[5]));
    if (!cols[6].empty()) {
      std::istringstream vs(cols[6]);
      std::string v;
      while (std::getline(vs, v, ';')) r.values.push_back(parse_double(v));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<SummaryRow> parse_summary_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_summary_csv_text(ss.str());
}

namespace detail {

inline const std::vector<std::pair<std::string, std::string>>& kind_colors() {
  static const std::vector<std::pair<std::string, std::string>> colors = {
      {"pi-pi", "#1f77b4"},   {"pi-raw", "#ff7f0e"}, {"raw-pi", "#2ca02c"},
      {"raw-raw", "#d62728"}, {"self", "#7f7f7f"},
  };
  return colors;
}

}  // namespace detail

// 800x500 chart: one mean line and translucent CI band per comparison kind,
// x = cut index, y fixed to [0, 1]. Kinds without finite points are omitted.
inline std::string profile_svg_text(const std::vector<SummaryRow>& rows,
                                    const std::string& title,
                                    const std::string& y_label) {
  int max_cut = 1;
  for (const auto& r : rows) max_cut = std::max(max_cut, r.cut);
  const double ml = 70, mt = 50, pw = 700, ph = 390;
  auto xc = [&](int cut) {
    if (max_cut == 1) return ml + pw / 2;
    return ml + pw * (cut - 1) / static_cast<double>(max_cut - 1);
  };
  auto yc = [&](double v) {
    return mt + ph * (1.0 - std::min(1.0, std::max(0.0, v)));
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
  s << "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-size=\"18\" "
       "font-family=\"sans-serif\">" << title << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    double v = i / 4.0;
    s << "<line x1=\"" << format_double(ml) << "\" y1=\""
      << format_double(yc(v)) << "\" x2=\"" << format_double(ml + pw)
      << "\" y2=\"" << format_double(yc(v))
      << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    s << "<text x=\"" << format_double(ml - 10) << "\" y=\""
      << format_double(yc(v) + 4)
      << "\" text-anchor=\"end\" font-size=\"12\" "
         "font-family=\"sans-serif\">" << format_double(v) << "</text>\n";
  }
  for (int cut = 1; cut <= max_cut; ++cut)
    s << "<text x=\"" << format_double(xc(cut)) << "\" y=\""
      << format_double(mt + ph + 24)
      << "\" text-anchor=\"middle\" font-size=\"12\" "
         "font-family=\"sans-serif\">" << cut << "</text>\n";
  s << "<text x=\"400\" y=\"" << format_double(mt + ph + 44)
    << "\" text-anchor=\"middle\" font-size=\"13\" "
       "font-family=\"sans-serif\">cut index</text>\n";
  s << "<text x=\"20\" y=\"" << format_double(mt + ph / 2)
    << "\" text-anchor=\"middle\" font-size=\"13\" "
       "font-family=\"sans-serif\" transform=\"rotate(-90 20 "
    << format_double(mt + ph / 2) << ")\">" << y_label << "</text>\n";
  s << "<line x1=\"" << format_double(ml) << "\" y1=\"" << format_double(mt)
    << "\" x2=\"" << format_double(ml) << "\" y2=\"" << format_double(mt + ph)
    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  s << "<line x1=\"" << format_double(ml) << "\" y1=\""
    << format_double(mt + ph) << "\" x2=\"" << format_double(ml + pw)
    << "\" y2=\"" << format_double(mt + ph)
    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  int legend_at = 0;
  for (const auto& [kind, color] : detail::kind_colors()) {
    std::map<int, const SummaryRow*> by_cut;
    for (const auto& r : rows)
      if (r.kind == kind && std::isfinite(r.mean)) by_cut[r.cut] = &r;
    if (by_cut.empty()) continue;

    std::string band_upper, band_lower, line_pts;
    for (auto& [cut, r] : by_cut) {
      auto x = format_double(xc(cut));
      band_upper += x + "," + format_double(yc(r->mean + r->half_width)) + " ";
      line_pts += x + "," + format_double(yc(r->mean)) + " ";
    }
    for (auto it = by_cut.rbegin(); it != by_cut.rend(); ++it)
      band_lower += format_double(xc(it->first)) + "," +
                    format_double(yc(it->second->mean -
                                     it->second->half_width)) + " ";
    s << "<polygon points=\"" << band_upper << band_lower << "\" fill=\""
      << color << "\" opacity=\"0.18\"/>\n";
    s << "<polyline points=\"" << line_pts << "\" fill=\"none\" stroke=\""
      << color << "\" stroke-width=\"2\"/>\n";
    for (auto& [cut, r] : by_cut)
      s << "<circle cx=\"" << format_double(xc(cut)) << "\" cy=\""
        << format_double(yc(r->mean)) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";

    double ly = mt + 14 + 20 * legend_at++;
    s << "<rect x=\"" << format_double(ml + pw - 150) << "\" y=\""
      << format_double(ly - 9) << "\" width=\"14\" height=\"10\" fill=\""
      << color << "\"/>\n";
    s << "<text x=\"" << format_double(ml + pw - 130) << "\" y=\""
      << format_double(ly) << "\" font-size=\"12\" "
         "font-family=\"sans-serif\">" << kind << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

inline void write_profile_svg(const std::string& path,
                              const std::vector<SummaryRow>& rows,
                              const std::string& title,
                              const std::string& y_label) {
  std::ofstream f(path, std::ios::binary);
  if (!f.good()) throw std::runtime_error("cannot write " + path);
  auto text = profile_svg_text(rows, title, y_label);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f.good()) throw std::runtime_error("write failed for " + path);
}

}  // namespace tml
