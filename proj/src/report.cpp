#include "demos/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace demos {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double v = 0.0;
  auto res = std::from_chars(begin, s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return v;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                          "#bcbd22", "#17becf"};

// "Nice" tick spacing for a range.
double tick_step(double span, int target) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return mag * (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0);
}

void draw_chart(std::ostream& out, const Chart& chart, double x0, double y0,
                double w, double h, double font) {
  const double left = x0 + font * 4.2;
  const double right = x0 + w - font * 0.8;
  const double top = y0 + font * 1.8;
  const double bottom = y0 + h - font * 2.8;

  auto ty = [&](double v) { return chart.log_y ? std::log10(v) : v; };
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const auto& s : chart.series) {
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      const double yv = ty(s.y[k]);
      if (!std::isfinite(s.x[k]) || !std::isfinite(yv)) continue;
      xmin = std::min(xmin, s.x[k]);
      xmax = std::max(xmax, s.x[k]);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  }
  if (chart.hline && std::isfinite(ty(*chart.hline))) {
    ymin = std::min(ymin, ty(*chart.hline));
    ymax = std::max(ymax, ty(*chart.hline));
  }
  if (!std::isfinite(xmin)) {
    xmin = 0.0;
    xmax = 1.0;
    ymin = 0.0;
    ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (right - left); };
  auto py = [&](double y) { return bottom - (y - ymin) / (ymax - ymin) * (bottom - top); };

  out << "<g font-family=\"sans-serif\" font-size=\"" << fmt(font) << "\">\n";
  out << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << fmt(y0 + font * 1.2)
      << "\" text-anchor=\"middle\">" << escape(chart.title) << "</text>\n";
  out << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\""
      << fmt(right - left) << "\" height=\"" << fmt(bottom - top)
      << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"0.8\"/>\n";

  const double xs = tick_step(xmax - xmin, 5);
  for (double t = std::ceil(xmin / xs) * xs; t <= xmax + 1e-9 * xs; t += xs) {
    out << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << fmt(bottom) << "\" x2=\""
        << fmt(px(t)) << "\" y2=\"" << fmt(bottom + 3) << "\" stroke=\"#444\"/>"
        << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(bottom + font * 1.1)
        << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  const double ys = tick_step(ymax - ymin, 4);
  for (double t = std::ceil(ymin / ys) * ys; t <= ymax + 1e-9 * ys; t += ys) {
    const std::string label = chart.log_y ? fmt(std::pow(10.0, t), 2) : fmt(t);
    out << "<line x1=\"" << fmt(left - 3) << "\" y1=\"" << fmt(py(t)) << "\" x2=\""
        << fmt(left) << "\" y2=\"" << fmt(py(t)) << "\" stroke=\"#444\"/>"
        << "<text x=\"" << fmt(left - 4) << "\" y=\"" << fmt(py(t) + font * 0.35)
        << "\" text-anchor=\"end\">" << label << "</text>\n";
  }
  out << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << fmt(y0 + h - font * 0.4)
      << "\" text-anchor=\"middle\">" << escape(chart.x_label) << "</text>\n";
  out << "<text transform=\"translate(" << fmt(x0 + font) << ","
      << fmt((top + bottom) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(chart.y_label) << "</text>\n";

  if (chart.hline && std::isfinite(ty(*chart.hline))) {
    const double y = py(ty(*chart.hline));
    out << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\""
        << fmt(right) << "\" y2=\"" << fmt(y)
        << "\" stroke=\"#000\" stroke-dasharray=\"4,3\" stroke-width=\"0.8\"/>\n";
  }

  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const Series& series = chart.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    // NaN points break the polyline into segments.
    std::vector<std::string> segments(1);
    for (std::size_t k = 0; k < std::min(series.x.size(), series.y.size()); ++k) {
      const double yv = ty(series.y[k]);
      if (!std::isfinite(series.x[k]) || !std::isfinite(yv)) {
        if (!segments.back().empty()) segments.emplace_back();
        continue;
      }
      segments.back() += fmt(px(series.x[k]), 6) + "," + fmt(py(yv), 6) + " ";
    }
    for (const auto& pts : segments) {
      if (pts.empty()) continue;
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.2\" points=\"" << pts << "\"/>\n";
    }
    if (chart.series.size() > 1) {
      const double ly = top + font * (1.0 + 1.2 * static_cast<double>(s));
      out << "<line x1=\"" << fmt(right - font * 7) << "\" y1=\"" << fmt(ly - font * 0.3)
          << "\" x2=\"" << fmt(right - font * 5.8) << "\" y2=\"" << fmt(ly - font * 0.3)
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>"
          << "<text x=\"" << fmt(right - font * 5.5) << "\" y=\"" << fmt(ly) << "\">"
          << escape(series.name) << "</text>\n";
    }
  }
  out << "</g>\n";
}

std::string svg_open(double w, double h) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w)
    << "\" height=\"" << fmt(h) << "\" viewBox=\"0 0 " << fmt(w) << ' ' << fmt(h)
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

}  // namespace

void write_metrics_header(std::ostream& out) {
  out << "iteration,mean_reward,balance,gait,arm,torque_penalty,smooth_penalty,"
         "surrogate,value_loss,entropy,j_de,kl,learning_rate\n";
}

void write_metrics_row(std::ostream& out, const IterationMetrics& m) {
  const auto& t = m.mean_terms;
  const auto& u = m.update;
  out << m.iteration << ',' << format_double(m.mean_reward) << ','
      << format_double(t.balance) << ',' << format_double(t.gait) << ','
      << format_double(t.arm) << ',' << format_double(t.torque_penalty) << ','
      << format_double(t.smooth_penalty) << ',' << format_double(u.surrogate) << ','
      << format_double(u.value_loss) << ',' << format_double(u.entropy) << ','
      << format_double(-u.penalty) << ',' << format_double(u.kl) << ','
      << format_double(u.learning_rate) << '\n';
}

void write_timing_header(std::ostream& out) { out << "iteration,wall_time\n"; }

void write_timing_row(std::ostream& out, const IterationMetrics& m) {
  out << m.iteration << ',' << format_double(m.wall_time) << '\n';
}

void write_connection_header(std::ostream& out) { out << "iteration,i,j,relative\n"; }

void write_connection_rows(std::ostream& out, const ConnectionRecord& record) {
  const auto& r = record.relative;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      if (i == j) continue;
      out << record.iteration << ',' << i + 1 << ',' << j + 1 << ','
          << format_double(r(i, j)) << '\n';
    }
  }
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels) {
  if (row_labels.size() != static_cast<std::size_t>(m.rows()) ||
      col_labels.size() != static_cast<std::size_t>(m.cols())) {
    throw std::invalid_argument("matrix labels do not match its shape");
  }
  out << "row";
  for (const auto& c : col_labels) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format_double(m(i, j));
    out << '\n';
  }
}

void write_eval_header(std::ostream& out) {
  out << "label,malfunction,episodes,mean_return,std_return,balance,gait,arm,"
         "torque_penalty,smooth_penalty,legs\n";
}

void write_eval_row(std::ostream& out, const EvalRow& row) {
  const auto& r = row.result;
  const auto& t = r.mean_terms;
  out << row.label << ',' << row.malfunction << ',' << r.episodes << ','
      << format_double(r.mean_return) << ',' << format_double(r.std_return) << ','
      << format_double(t.balance) << ',' << format_double(t.gait) << ','
      << format_double(t.arm) << ',' << format_double(t.torque_penalty) << ','
      << format_double(t.smooth_penalty) << ',' << format_double(t.legs()) << '\n';
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numbers(std::size_t col) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    out.push_back(col < row.size() ? parse_double(row[col])
                                   : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_csv(in);
}

std::string render_svg(const Chart& chart, double width, double height) {
  std::ostringstream out;
  out << svg_open(width, height);
  draw_chart(out, chart, 0, 0, width, height, 12);
  out << "</svg>\n";
  return out.str();
}

std::string render_svg_grid(const std::vector<Chart>& charts, std::size_t cols,
                            const std::string& title, double cell_width,
                            double cell_height) {
  cols = std::max<std::size_t>(cols, 1);
  const std::size_t rows = (charts.size() + cols - 1) / cols;
  const double header = 24;
  const double w = cell_width * static_cast<double>(cols);
  const double h = header + cell_height * static_cast<double>(rows);
  std::ostringstream out;
  out << svg_open(w, h);
  out << "<text x=\"" << fmt(w / 2) << "\" y=\"17\" font-family=\"sans-serif\" "
      << "font-size=\"14\" text-anchor=\"middle\">" << escape(title) << "</text>\n";
  for (std::size_t k = 0; k < charts.size(); ++k) {
    const double x = cell_width * static_cast<double>(k % cols);
    const double y = header + cell_height * static_cast<double>(k / cols);
    draw_chart(out, charts[k], x, y, cell_width, cell_height, 9);
  }
  out << "</svg>\n";
  return out.str();
}

std::optional<Chart> reward_chart(
    const std::vector<std::pair<std::string, CsvTable>>& runs) {
  Chart chart;
  chart.title = "Training reward";
  chart.x_label = "iteration";
  chart.y_label = "mean reward per step";
  for (const auto& [name, table] : runs) {
    const auto it = table.column("iteration");
    const auto r = table.column("mean_reward");
    if (!it || !r || table.rows.empty()) continue;
    chart.series.push_back({name, table.numbers(*it), table.numbers(*r)});
  }
  if (chart.series.empty()) return std::nullopt;
  return chart;
}

std::vector<Chart> connection_charts(const CsvTable& connections, double eta) {
  const auto ci = connections.column("i");
  const auto cj = connections.column("j");
  const auto cit = connections.column("iteration");
  const auto cr = connections.column("relative");
  if (!ci || !cj || !cit || !cr) return {};
  const auto is = connections.numbers(*ci);
  const auto js = connections.numbers(*cj);
  const auto its = connections.numbers(*cit);
  const auto rs = connections.numbers(*cr);
  std::size_t n = 0;
  for (std::size_t k = 0; k < is.size(); ++k) {
    if (std::isfinite(is[k])) n = std::max(n, static_cast<std::size_t>(is[k]));
    if (std::isfinite(js[k])) n = std::max(n, static_cast<std::size_t>(js[k]));
  }
  std::vector<Chart> charts(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Chart& c = charts[i * n + j];
      c.title = "C" + std::to_string(i + 1) + std::to_string(j + 1) + "/C" +
                std::to_string(j + 1) + std::to_string(j + 1);
      c.x_label = "iteration";
      c.log_y = true;
      c.hline = eta;
      c.series.push_back({"relative", {}, {}});
    }
  }
  for (std::size_t k = 0; k < is.size(); ++k) {
    if (!std::isfinite(is[k]) || !std::isfinite(js[k]) || is[k] < 1 || js[k] < 1) continue;
    const auto i = static_cast<std::size_t>(is[k]) - 1;
    const auto j = static_cast<std::size_t>(js[k]) - 1;
    auto& s = charts[i * n + j].series[0];
    s.x.push_back(its[k]);
    // Zero strengths cannot be drawn on a log axis.
    s.y.push_back(rs[k] > 0.0 ? rs[k] : std::numeric_limits<double>::quiet_NaN());
  }
  for (std::size_t i = 0; i < n; ++i) {
    charts[i * n + i].title += " (self)";
    charts[i * n + i].series.clear();
    charts[i * n + i].hline.reset();
  }
  return charts;
}

std::optional<Chart> sweep_chart(const CsvTable& eval) {
  const auto cl = eval.column("label");
  const auto cm = eval.column("malfunction");
  const auto cr = eval.column("mean_return");
  if (!cl || !cm || !cr) return std::nullopt;
  const auto returns = eval.numbers(*cr);
  std::map<std::string, Series> groups;
  std::vector<std::string> order;
  for (std::size_t k = 0; k < eval.rows.size(); ++k) {
    const auto& row = eval.rows[k];
    if (*cm >= row.size() || *cl >= row.size()) continue;
    const std::string& mal = row[*cm];
    const auto colon = mal.rfind(':');
    if (colon == std::string::npos) continue;
    const double level = parse_double(mal.substr(colon + 1));
    if (!std::isfinite(level)) continue;
    const std::string key = row[*cl] + " " + mal.substr(0, colon);
    if (!groups.count(key)) order.push_back(key);
    Series& s = groups[key];
    s.name = key;
    s.x.push_back(level);
    s.y.push_back(returns[k]);
  }
  if (groups.empty()) return std::nullopt;
  Chart chart;
  chart.title = "Evaluation under malfunction";
  chart.x_label = "level";
  chart.y_label = "mean return";
  for (const auto& key : order) {
    Series s = groups[key];
    std::vector<std::size_t> idx(s.x.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
    Series sorted{s.name, {}, {}};
    for (auto k : idx) {
      sorted.x.push_back(s.x[k]);
      sorted.y.push_back(s.y[k]);
    }
    chart.series.push_back(std::move(sorted));
  }
  return chart;
}

}  // namespace demos
