#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "demos/policy.hpp"
#include "demos/training.hpp"

namespace demos {

/// Shortest decimal text that parses back to the same double; "nan" for NaN.
std::string format_double(double v);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const IterationMetrics& m);
/// Wall-clock times live in their own file so that metrics.csv stays
/// identical between runs with the same config and seed.
void write_timing_header(std::ostream& out);
void write_timing_row(std::ostream& out, const IterationMetrics& m);

/// iteration,i,j,relative with 1-based branch indices; the diagonal is skipped.
void write_connection_header(std::ostream& out);
void write_connection_rows(std::ostream& out, const ConnectionRecord& record);

/// Square or rectangular matrix with labelled rows and columns.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels);

struct EvalRow {
  std::string label;        // e.g. checkpoint name
  std::string malfunction;  // "none" or kind:motor:level
  EvalResult result;
};
void write_eval_header(std::ostream& out);
void write_eval_row(std::ostream& out, const EvalRow& row);

/// Minimal CSV table: header plus string cells. No quoting support, which
/// is enough for the files written above.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
  /// Numeric column; unparsable cells become NaN.
  std::vector<double> numbers(std::size_t col) const;
};
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<double> hline;  // dashed horizontal reference line
  bool log_y = false;
};

/// Single chart as a standalone SVG document.
std::string render_svg(const Chart& chart, double width = 640, double height = 400);
/// Charts laid out row-major in a grid with `cols` columns.
std::string render_svg_grid(const std::vector<Chart>& charts, std::size_t cols,
                            const std::string& title, double cell_width = 220,
                            double cell_height = 170);

/// Reward curves from one or more metrics.csv files, one series per run.
std::optional<Chart> reward_chart(const std::vector<std::pair<std::string, CsvTable>>& runs);
/// n x n grid of relative strength against iteration with the threshold drawn.
std::vector<Chart> connection_charts(const CsvTable& connections, double eta);
/// Mean return against malfunction level, one series per label and
/// malfunction kind/motor. Rows without a level are skipped.
std::optional<Chart> sweep_chart(const CsvTable& eval);

}  // namespace demos
