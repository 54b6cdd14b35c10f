#include "sda/symbols.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sda/models.hpp"

namespace sda {

namespace {

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(idx[i]);
  return out;
}

enum class RowClass { interior, boundary, external };

RowClass classify(const Eigen::VectorXd& row, const Eigen::VectorXd& lower,
                  const Eigen::VectorXd& upper, const Eigen::VectorXd& tol) {
  bool on_face = false;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (row[j] < lower[j] - tol[j] || row[j] > upper[j] + tol[j])
      return RowClass::external;
    if (std::abs(row[j] - lower[j]) <= tol[j] ||
        std::abs(row[j] - upper[j]) <= tol[j])
      on_face = true;
  }
  return on_face ? RowClass::boundary : RowClass::interior;
}

RectangleSymbol partition_into_rectangle(const Eigen::MatrixXd& rows,
                                         const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper,
                                         double q) {
  Eigen::VectorXd tol =
      kFaceTolScale * (upper - lower).cwiseMax(1.0).eval();
  std::vector<Eigen::Index> boundary, external;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    switch (classify(rows.row(i), lower, upper, tol)) {
      case RowClass::boundary: boundary.push_back(i); break;
      case RowClass::external: external.push_back(i); break;
      case RowClass::interior: break;
    }
  }
  RectangleSymbol sym;
  sym.lower = lower;
  sym.upper = upper;
  sym.n_total = rows.rows();
  sym.boundary_points = select_rows(rows, boundary);
  sym.external_points = select_rows(rows, external);
  sym.q = q;
  sym.validate();
  return sym;
}

}  // namespace

void MicroData::validate() const {
  if (rows.rows() < 1 || rows.cols() < 1)
    throw std::invalid_argument("MicroData: need n >= 1 and d >= 1");
  if (!rows.allFinite())
    throw std::invalid_argument("MicroData: non-finite entry");
}

MicroData MicroData::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> data;
  std::vector<std::string> names;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      first = false;
      // Header row is optional: treat as header if any cell fails to parse.
      bool numeric = true;
      for (const auto& c : cells) {
        try {
          std::size_t pos = 0;
          (void)std::stod(c, &pos);
          if (pos != c.size()) numeric = false;
        } catch (...) {
          numeric = false;
        }
      }
      if (!numeric) {
        names = cells;
        continue;
      }
    }
    for (const auto& c : cells) row.push_back(std::stod(c));
    data.push_back(std::move(row));
  }
  if (data.empty()) throw std::runtime_error("empty CSV: " + path);
  MicroData md;
  md.rows.resize(static_cast<Eigen::Index>(data.size()),
                 static_cast<Eigen::Index>(data[0].size()));
  for (Eigen::Index i = 0; i < md.rows.rows(); ++i) {
    if (static_cast<Eigen::Index>(data[i].size()) != md.rows.cols())
      throw std::runtime_error("ragged CSV: " + path);
    for (Eigen::Index j = 0; j < md.rows.cols(); ++j)
      md.rows(i, j) = data[i][j];
  }
  md.column_names = std::move(names);
  md.validate();
  return md;
}

void MicroData::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (!column_names.empty()) {
    for (std::size_t j = 0; j < column_names.size(); ++j)
      out << (j ? "," : "") << column_names[j];
    out << "\n";
  }
  out.precision(17);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j)
      out << (j ? "," : "") << rows(i, j);
    out << "\n";
  }
}

double RectangleSymbol::volume() const { return std::exp(log_volume()); }

double RectangleSymbol::log_volume() const {
  return (upper - lower).array().log().sum();
}

void RectangleSymbol::validate() const {
  if (lower.size() != upper.size())
    throw std::invalid_argument("RectangleSymbol: bound size mismatch");
  for (Eigen::Index j = 0; j < lower.size(); ++j)
    if (!(lower[j] < upper[j]))
      throw std::invalid_argument("RectangleSymbol: lower >= upper");
  if (n_r() < 0)
    throw std::invalid_argument("RectangleSymbol: negative interior count");
}

nlohmann::json RectangleSymbol::to_json() const {
  nlohmann::json j;
  j["lower"] = std::vector<double>(lower.begin(), lower.end());
  j["upper"] = std::vector<double>(upper.begin(), upper.end());
  j["n_total"] = n_total;
  j["q"] = q;
  auto dump = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      rows.emplace_back(m.row(i).begin(), m.row(i).end());
    return rows;
  };
  j["boundary_points"] = dump(boundary_points);
  j["external_points"] = dump(external_points);
  return j;
}

RectangleSymbol RectangleSymbol::from_json(const nlohmann::json& j) {
  RectangleSymbol s;
  auto lo = j.at("lower").get<std::vector<double>>();
  auto hi = j.at("upper").get<std::vector<double>>();
  s.lower = Eigen::Map<Eigen::VectorXd>(lo.data(), lo.size());
  s.upper = Eigen::Map<Eigen::VectorXd>(hi.data(), hi.size());
  s.n_total = j.at("n_total").get<long>();
  s.q = j.at("q").get<double>();
  auto load = [&](const char* key) {
    auto rows = j.at(key).get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), s.lower.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = rows[i][c];
    return m;
  };
  s.boundary_points = load("boundary_points");
  s.external_points = load("external_points");
  s.validate();
  return s;
}

long MixtureRectangleSet::total_external() const {
  long total = 0;
  for (const auto& c : components) total += c.rectangle.n_e();
  return total;
}

long MixtureRectangleSet::total_rows() const {
  long total = 0;
  for (const auto& c : components) total += c.rectangle.n_total;
  return total;
}

nlohmann::json MixtureRectangleSet::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : components) {
    nlohmann::json e;
    e["rectangle"] = c.rectangle.to_json();
    e["weight"] = c.weight;
    e["component_index"] = c.component_index;
    j.push_back(std::move(e));
  }
  return j;
}

RectangleSymbol build_minmax_rectangle(const MicroData& data) {
  data.validate();
  if (data.n() < 2)
    throw std::invalid_argument("build_minmax_rectangle: need n >= 2");
  return build_quantile_rectangle(data, 0.0);
}

RectangleSymbol build_quantile_rectangle(const MicroData& data, double q) {
  data.validate();
  if (!(q >= 0.0 && q < 0.5))
    throw std::invalid_argument("build_quantile_rectangle: q outside [0,0.5)");
  const Eigen::Index n = data.n(), d = data.d();
  if (n < 2) throw std::invalid_argument("build_quantile_rectangle: n < 2");

  // 1-indexed marginal order statistics ceil(nq) and floor(n(1-q)).
  long k_lo = static_cast<long>(std::ceil(q * static_cast<double>(n)));
  long k_hi = static_cast<long>(std::floor((1.0 - q) * static_cast<double>(n)));
  k_lo = std::max<long>(k_lo, 1);
  k_hi = std::min<long>(k_hi, n);
  if (k_lo >= k_hi)
    throw std::invalid_argument(
        "build_quantile_rectangle: n too small for requested quantiles");

  Eigen::VectorXd lower(d), upper(d);
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) column[i] = data.rows(i, j);
    std::sort(column.begin(), column.end());
    lower[j] = column[k_lo - 1];
    upper[j] = column[k_hi - 1];
    if (!(lower[j] < upper[j]))
      throw std::invalid_argument(
          "build_quantile_rectangle: degenerate margin " + std::to_string(j));
  }
  return partition_into_rectangle(data.rows, lower, upper, q);
}

MixtureRectangleSet build_component_rectangles(
    const Eigen::VectorXd& responses, const MicroData& predictors,
    const NormalMixture& mixture, double q, long min_component_rows) {
  predictors.validate();
  const Eigen::Index n = predictors.n(), dx = predictors.d();
  if (responses.size() != n)
    throw std::invalid_argument("build_component_rectangles: size mismatch");
  const int K = mixture.n_components();
  if (K < 1) throw std::invalid_argument("build_component_rectangles: K < 1");

  std::vector<std::vector<Eigen::Index>> assigned(K);
  for (Eigen::Index i = 0; i < n; ++i)
    assigned[mixture.hard_assign(predictors.rows.row(i))].push_back(i);

  MixtureRectangleSet set;
  for (int k = 0; k < K; ++k) {
    const auto& idx = assigned[k];
    if (static_cast<long>(idx.size()) < min_component_rows)
      throw std::invalid_argument(
          "build_component_rectangles: component " + std::to_string(k) +
          " below the minimum row count");
    MicroData comp;
    comp.rows = select_rows(predictors.rows, idx);
    RectangleSymbol xbox = build_quantile_rectangle(comp, q);

    // Response range over rows whose predictors lie inside the closed
    // predictor box, then the joint rectangle over (y, x).
    Eigen::VectorXd tol =
        kFaceTolScale * (xbox.upper - xbox.lower).cwiseMax(1.0).eval();
    double y_lo = std::numeric_limits<double>::infinity();
    double y_hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i : idx) {
      bool inside = true;
      for (Eigen::Index j = 0; j < dx; ++j) {
        double v = predictors.rows(i, j);
        if (v < xbox.lower[j] - tol[j] || v > xbox.upper[j] + tol[j]) {
          inside = false;
          break;
        }
      }
      if (inside) {
        y_lo = std::min(y_lo, responses[i]);
        y_hi = std::max(y_hi, responses[i]);
      }
    }
    if (!(y_lo < y_hi))
      throw std::invalid_argument(
          "build_component_rectangles: degenerate response range");

    Eigen::VectorXd lower(dx + 1), upper(dx + 1);
    lower[0] = y_lo;
    upper[0] = y_hi;
    lower.tail(dx) = xbox.lower;
    upper.tail(dx) = xbox.upper;

    Eigen::MatrixXd joint(static_cast<Eigen::Index>(idx.size()), dx + 1);
    for (Eigen::Index r = 0; r < joint.rows(); ++r) {
      joint(r, 0) = responses[idx[r]];
      joint.row(r).tail(dx) = predictors.rows.row(idx[r]);
    }
    MixtureRectangleSet::Component c;
    c.rectangle = partition_into_rectangle(joint, lower, upper, q);
    c.weight = mixture.weights[k];
    c.component_index = k;
    set.components.push_back(std::move(c));
  }
  return set;
}

}  // namespace sda
