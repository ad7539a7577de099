#include "actscan/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace actscan {

namespace {

double max_weight(const std::vector<double>& w) {
  double m = 0.0;
  for (double x : w) m = std::max(m, x);
  return m;
}

std::vector<double> weighted_mean(const std::vector<double>& w,
                                  const DiscreteDataset& ds) {
  std::vector<double> h(ds.dim(), 0.0);
  for (size_t i = 0; i < w.size(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) h[j] += w[i] * ds.points[i][j];
  }
  return h;
}

}  // namespace

std::vector<std::pair<int, int>> all_condition_pairs(const DiscreteDataset& ds) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < ds.condition_count(); ++a) {
    for (int b = a + 1; b < ds.condition_count(); ++b) pairs.emplace_back(a, b);
  }
  return pairs;
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (n < 2 || lo <= 0.0 || hi <= lo) throw Error("log_spaced: invalid range");
  std::vector<double> v(n);
  double ratio = std::log(hi / lo);
  for (int i = 0; i < n; ++i) {
    v[i] = lo * std::exp(ratio * static_cast<double>(i) / (n - 1));
  }
  return v;
}

TheoremReport verify_theorem1(const DiscreteDataset& ds,
                              const std::vector<double>& sigma_grid,
                              const std::vector<std::pair<int, int>>& condition_pairs,
                              const std::vector<double>& epsilons,
                              uint64_t seed, int dataset_index) {
  ds.validate();
  if (!ds.alpha_regular) {
    throw RegularityViolationError("verify_theorem1: dataset lacks the alpha-regularity flag");
  }
  if (sigma_grid.empty()) throw Error("verify_theorem1: empty sigma grid");
  if (condition_pairs.empty()) throw Error("verify_theorem1: no condition pairs");
  for (auto [a, b] : condition_pairs) {
    if (a < 0 || a >= ds.condition_count() || b < 0 || b >= ds.condition_count()) {
      throw UnknownConditionError("verify_theorem1: pair condition out of range");
    }
  }

  std::vector<double> sigmas = sigma_grid;
  std::sort(sigmas.begin(), sigmas.end());

  // One consistent noise draw per dataset point, reused across the grid.
  Rng rng(seed);
  std::vector<std::vector<double>> z(ds.point_count());
  for (auto& zi : z) zi = rng.normal_vec(ds.dim());

  double c2 = ds.max_norm() * ds.max_norm();
  TheoremReport report;

  for (auto [a, b] : condition_pairs) {
    // lhs maximized over sample points, per grid sigma (ascending).
    std::vector<double> lhs_max(sigmas.size(), 0.0);
    std::vector<size_t> row_begin(sigmas.size(), 0);

    for (size_t si = 0; si < sigmas.size(); ++si) {
      double sigma = sigmas[si];
      row_begin[si] = report.rows.size();
      for (int j = 0; j < ds.point_count(); ++j) {
        std::vector<double> x_t(ds.dim());
        for (int d = 0; d < ds.dim(); ++d) x_t[d] = ds.points[j][d] + sigma * z[j][d];

        auto wa = posterior_weights_sigma(x_t, sigma, a, ds);
        auto wb = posterior_weights_sigma(x_t, sigma, b, ds);
        double eps_s = std::max(1.0 - max_weight(wa), 1.0 - max_weight(wb));
        auto ha = weighted_mean(wa, ds);
        auto hb = weighted_mean(wb, ds);
        double diff = l2_distance(ha, hb);
        double lhs = diff * diff;

        TheoremRow row;
        row.dataset_index = dataset_index;
        row.sigma = sigma;
        row.alpha = ds.alpha;
        row.lhs = lhs;
        row.eps_s = eps_s;
        row.bound = 3.0 * eps_s * c2;
        row.satisfied = lhs <= row.bound + 1e-9;
        row.eps_pred_diff = diff / sigma;
        row.pair_a = a;
        row.pair_b = b;
        row.sample_point = j;
        report.rows.push_back(row);

        report.all_satisfied = report.all_satisfied && row.satisfied;
        lhs_max[si] = std::max(lhs_max[si], lhs);
      }
    }

    for (double eps : epsilons) {
      CriticalRecord rec;
      rec.dataset_index = dataset_index;
      rec.pair_a = a;
      rec.pair_b = b;
      rec.epsilon = eps;
      rec.exists = false;
      rec.critical_sigma = std::numeric_limits<double>::quiet_NaN();
      for (size_t si = 0; si < sigmas.size(); ++si) {
        if (lhs_max[si] <= eps) {
          rec.exists = true;
          rec.critical_sigma = sigmas[si];
        } else {
          break;  // prefix property: every smaller sigma must qualify
        }
      }
      report.criticals.push_back(rec);
      report.all_critical_exist = report.all_critical_exist && rec.exists;
    }

    // Stamp the pair's critical sigma (first epsilon) onto its rows.
    if (!epsilons.empty()) {
      const auto& rec = report.criticals[report.criticals.size() - epsilons.size()];
      for (size_t r = row_begin[0]; r < report.rows.size(); ++r) {
        if (report.rows[r].pair_a == a && report.rows[r].pair_b == b) {
          report.rows[r].critical_sigma = rec.critical_sigma;
        }
      }
    }
  }
  return report;
}

std::vector<TheoremAuditCase> builtin_theorem_grid() {
  std::vector<TheoremAuditCase> cases;

  {
    TheoremAuditCase c;
    c.name = "pair-1d-a05";
    c.ds.points = {{0.1}, {0.9}};
    c.ds.conditions = {"cond-a", "cond-b"};
    c.ds.priors = {{0.95, 0.05}, {0.80, 0.20}};
    c.ds.alpha_regular = true;
    c.ds.alpha = 0.05;
    cases.push_back(std::move(c));
  }
  {
    TheoremAuditCase c;
    c.name = "quad-2d-a20";
    c.ds.points = {{0.2, 0.2}, {0.8, 0.2}, {0.2, 0.8}, {0.8, 0.8}};
    c.ds.conditions = {"cond-a", "cond-b"};
    c.ds.priors = {{0.40, 0.20, 0.20, 0.20}, {0.34, 0.26, 0.20, 0.20}};
    c.ds.alpha_regular = true;
    c.ds.alpha = 0.20;
    cases.push_back(std::move(c));
  }
  {
    TheoremAuditCase c;
    c.name = "penta-3d-a05";
    c.ds.points = {{0.1, 0.1, 0.1},
                   {0.9, 0.1, 0.2},
                   {0.2, 0.9, 0.3},
                   {0.8, 0.8, 0.8},
                   {0.5, 0.4, 0.9}};
    c.ds.conditions = {"cond-a", "cond-b", "cond-c"};
    c.ds.priors = {{0.60, 0.10, 0.10, 0.10, 0.10},
                   {0.40, 0.30, 0.10, 0.10, 0.10},
                   {0.50, 0.05, 0.15, 0.15, 0.15}};
    c.ds.alpha_regular = true;
    c.ds.alpha = 0.05;
    cases.push_back(std::move(c));
  }
  {
    TheoremAuditCase c;
    c.name = "octo-4d-a05";
    c.ds.points = {{0.1, 0.1, 0.1, 0.1}, {0.9, 0.1, 0.1, 0.2},
                   {0.1, 0.9, 0.2, 0.1}, {0.1, 0.2, 0.9, 0.1},
                   {0.2, 0.1, 0.1, 0.9}, {0.9, 0.9, 0.1, 0.1},
                   {0.1, 0.9, 0.9, 0.2}, {0.9, 0.2, 0.9, 0.9}};
    c.ds.conditions = {"cond-a", "cond-b"};
    c.ds.priors = {{0.30, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10},
                   {0.25, 0.15, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10}};
    c.ds.alpha_regular = true;
    c.ds.alpha = 0.05;
    cases.push_back(std::move(c));
  }
  {
    TheoremAuditCase c;
    c.name = "uniform-pair-1d-a50";
    c.ds.points = {{0.25}, {0.75}};
    c.ds.conditions = {"cond-a", "cond-b"};
    c.ds.priors = {{0.5, 0.5}, {0.5, 0.5}};
    c.ds.alpha_regular = true;
    c.ds.alpha = 0.50;
    cases.push_back(std::move(c));
  }
  return cases;
}

void write_theorem_csv(const std::vector<std::pair<std::string, TheoremReport>>& reports,
                       const std::string& path, const std::string& header_meta) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write theorem report: " + path);
  out << "# " << header_meta << '\n';
  out << "sigma,alpha,lhs,eps_s,bound,satisfied,critical_sigma\n";
  char buf[256];
  for (const auto& [name, report] : reports) {
    out << "# dataset " << name << '\n';
    for (const auto& r : report.rows) {
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.10g\n",
                    r.sigma, r.alpha, r.lhs, r.eps_s, r.bound,
                    r.satisfied ? 1 : 0, r.critical_sigma);
      out << buf;
    }
  }
}

}  // namespace actscan
