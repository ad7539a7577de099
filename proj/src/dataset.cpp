#include "actscan/dataset.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace actscan {

double DiscreteDataset::max_norm() const {
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, l2_norm(p));
  return best;
}

std::vector<double> DiscreteDataset::mean_point() const {
  std::vector<double> m(dim(), 0.0);
  if (points.empty()) return m;
  for (const auto& p : points) {
    for (size_t i = 0; i < m.size(); ++i) m[i] += p[i];
  }
  for (auto& x : m) x /= static_cast<double>(points.size());
  return m;
}

void DiscreteDataset::validate() const {
  if (points.empty()) throw Error("dataset: no support points");
  if (conditions.empty()) throw Error("dataset: no conditions");
  if (priors.size() != conditions.size()) {
    throw ShapeMismatchError("dataset: priors/conditions count mismatch");
  }
  size_t d = points[0].size();
  if (d == 0) throw Error("dataset: zero-dimensional points");
  for (const auto& p : points) {
    if (p.size() != d) throw ShapeMismatchError("dataset: inconsistent point dims");
    for (double x : p) {
      if (!(x >= 0.0 && x <= 1.0)) throw Error("dataset: point entries must lie in [0,1]");
    }
  }
  for (const auto& prior : priors) {
    if (prior.size() != points.size()) {
      throw ShapeMismatchError("dataset: prior length != point count");
    }
    double sum = 0.0;
    for (double q : prior) {
      if (q < 0.0) throw Error("dataset: negative prior entry");
      sum += q;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("dataset: prior does not sum to 1");
    if (alpha_regular) {
      if (!(alpha > 0.0 && alpha < 0.5 + 1e-12)) {
        throw RegularityViolationError("dataset: alpha must lie in (0, 0.5]");
      }
      for (double q : prior) {
        if (q < alpha - 1e-12 || q > 1.0 - alpha + 1e-12) {
          throw RegularityViolationError("dataset: prior entry outside [alpha, 1-alpha]");
        }
      }
    }
  }
}

DiscreteDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  nlohmann::json j;
  in >> j;
  DiscreteDataset ds;
  ds.points = j.at("points").get<std::vector<std::vector<double>>>();
  ds.conditions = j.at("conditions").get<std::vector<std::string>>();
  ds.priors = j.at("priors").get<std::vector<std::vector<double>>>();
  ds.alpha_regular = j.value("alpha_regular", false);
  ds.alpha = j.value("alpha", 0.0);
  ds.validate();
  return ds;
}

void save_dataset(const DiscreteDataset& ds, const std::string& path) {
  nlohmann::json j;
  j["points"] = ds.points;
  j["conditions"] = ds.conditions;
  j["priors"] = ds.priors;
  j["alpha_regular"] = ds.alpha_regular;
  j["alpha"] = ds.alpha;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace actscan
