#pragma once

#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#ifndef DEMOS_DATA_DIR
#error "DEMOS_DATA_DIR must point at the data directory"
#endif

namespace demos::test {

inline std::filesystem::path data_dir() { return DEMOS_DATA_DIR; }
inline std::string robot_path(const std::string& name) {
  return (data_dir() / "robots" / (name + ".urdf")).string();
}

inline std::string joint_xml(const std::string& name, const std::string& parent,
                             const std::string& child,
                             const std::string& type = "revolute",
                             double effort = 3.0) {
  std::ostringstream s;
  s << "  <joint name=\"" << name << "\" type=\"" << type << "\">\n"
    << "    <parent link=\"" << parent << "\"/>\n"
    << "    <child link=\"" << child << "\"/>\n"
    << "    <axis xyz=\"0 1 0\"/>\n";
  if (type != "fixed") {
    s << "    <limit lower=\"-1.5\" upper=\"1.5\" effort=\"" << effort
      << "\" velocity=\"20\"/>\n";
  }
  s << "  </joint>\n";
  return s.str();
}

/// A torso with `chains` serial chains of the given lengths.
inline std::string star_urdf(const std::vector<int>& chains,
                             const std::string& name = "star") {
  std::ostringstream s;
  s << "<robot name=\"" << name << "\">\n  <link name=\"torso\"/>\n";
  for (std::size_t c = 0; c < chains.size(); ++c) {
    std::string parent = "torso";
    for (int k = 0; k < chains[c]; ++k) {
      const std::string link = "c" + std::to_string(c) + "_l" + std::to_string(k);
      s << "  <link name=\"" << link << "\"/>\n";
      s << joint_xml("c" + std::to_string(c) + "_j" + std::to_string(k), parent, link);
      parent = link;
    }
  }
  s << "</robot>\n";
  return s.str();
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

inline double rel_error(double a, double b) {
  const double d = std::abs(a - b);
  const double s = std::max(std::abs(a), std::abs(b));
  return s < 1e-8 ? d : d / s;
}

}  // namespace demos::test
