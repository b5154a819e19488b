#pragma once

#include <functional>
#include <string>
#include <vector>

#include "geomlab/params.hpp"

namespace geomlab {

struct GradCheckRow {
  std::string name;
  double max_rel = 0.0;  // worst relative error across elements
  double max_abs = 0.0;  // worst absolute error
  int64_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 0.0;
  bool pass = true;

  double worst() const {
    double w = 0.0;
    for (const auto& r : rows) w = std::max(w, r.max_rel);
    return w;
  }
};

// Central-difference gradient check, 64-bit only. `loss` must rebuild its
// graph from the ParamSet on every call; when `with_grad` is true it must
// also run backward so grads land in the ParamSet.
//
// An element passes if |analytic - numeric| < abs_floor or the error relative
// to max(|analytic|, |numeric|) is below `tol`.
inline GradCheckReport grad_check(ParamSet<double>& ps,
                                  const std::function<double(ParamSet<double>&, bool)>& loss,
                                  double tol = 1e-4, double h = 1e-5,
                                  double abs_floor = 1e-8) {
  GradCheckReport report;
  report.tolerance = tol;

  ps.zero_grads();
  loss(ps, true);
  std::vector<std::vector<double>> analytic;
  for (auto& e : ps.entries())
    analytic.push_back(e.value.has_grad() ? e.value.grad : std::vector<double>(e.value.data.size(), 0.0));

  for (size_t pi = 0; pi < ps.entries().size(); ++pi) {
    auto& e = ps.entries()[pi];
    if (!e.trainable) continue;
    GradCheckRow row;
    row.name = e.name;
    for (size_t i = 0; i < e.value.data.size(); ++i) {
      const double orig = e.value.data[i];
      e.value.data[i] = orig + h;
      const double up = loss(ps, false);
      e.value.data[i] = orig - h;
      const double dn = loss(ps, false);
      e.value.data[i] = orig;
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[pi][i];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      const double rel = abs_err < abs_floor ? 0.0 : abs_err / std::max(scale, 1e-12);
      row.max_abs = std::max(row.max_abs, abs_err);
      row.max_rel = std::max(row.max_rel, rel);
      ++row.checked;
    }
    if (row.max_rel >= tol) report.pass = false;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace geomlab
