#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sda {

// Individual-level observations before aggregation.
struct MicroData {
  Eigen::MatrixXd rows;  // n x d
  std::vector<std::string> column_names;

  Eigen::Index n() const { return rows.rows(); }
  Eigen::Index d() const { return rows.cols(); }

  void validate() const;

  static MicroData from_csv(const std::string& path);
  void to_csv(const std::string& path) const;
};

// A random hyper-rectangle summary: bounds, counts, boundary points kept at
// full resolution, and points external to the box.
struct RectangleSymbol {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  long n_total = 0;
  Eigen::MatrixXd boundary_points;  // n_b x d
  Eigen::MatrixXd external_points;  // n_e x d
  double q = 0.0;

  Eigen::Index dim() const { return lower.size(); }
  long n_b() const { return boundary_points.rows(); }
  long n_e() const { return external_points.rows(); }
  long n_r() const { return n_total - n_b() - n_e(); }

  double volume() const;
  double log_volume() const;

  void validate() const;

  nlohmann::json to_json() const;
  static RectangleSymbol from_json(const nlohmann::json& j);
};

struct NormalMixture;  // models module

// Per-mixture-component rectangles over (response, predictors).
struct MixtureRectangleSet {
  struct Component {
    RectangleSymbol rectangle;
    double weight = 0.0;
    int component_index = 0;
  };
  std::vector<Component> components;

  long total_external() const;
  long total_rows() const;

  nlohmann::json to_json() const;
};

// Absolute tolerance for face/containment comparisons, scaled by the margin
// range so partitions replay deterministically.
inline constexpr double kFaceTolScale = 1e-12;

RectangleSymbol build_minmax_rectangle(const MicroData& data);

// Bounds are the marginal ceil(n*q)-th and floor(n*(1-q))-th order statistics
// (1-indexed). A row is external iff it falls outside the closed box in any
// margin (external test precedes the boundary test); boundary rows are the
// non-external rows touching a face.
RectangleSymbol build_quantile_rectangle(const MicroData& data, double q);

MixtureRectangleSet build_component_rectangles(
    const Eigen::VectorXd& responses, const MicroData& predictors,
    const NormalMixture& mixture, double q, long min_component_rows);

}  // namespace sda
