// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <vector>

#include "pgtk/rng.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {

struct GradCheckIssue {
  int64_t index;
  double analytic, numeric, rel_err;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  std::vector<GradCheckIssue> failures;
  bool ok = true;
};

// Central-difference check of an analytic gradient.  f evaluates the scalar
// loss at a perturbed copy of x; analytic is d loss / d x at the unperturbed
// point.  When max_coords > 0 a random subset of coordinates is probed so
// large compositions stay affordable.  Gradients are compared with
// rel = |a - n| / (|a| + |n| + 1e-12), which also flags sign flips.
inline GradCheckReport grad_check(const std::function<double(const Tensor<double>&)>& f,
                                  const Tensor<double>& x,
                                  const Tensor<double>& analytic,
                                  double step, double tol,
                                  int64_t max_coords = 0, uint64_t seed = 7) {
  check(x.same_shape(analytic), "grad_check: gradient shape mismatch");
  GradCheckReport report;
  const int64_t n = x.numel();
  std::vector<int64_t> coords;
  if (max_coords > 0 && max_coords < n) {
    Rng rng(seed);
    coords.reserve(size_t(max_coords));
    std::vector<int64_t> all(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) all[size_t(i)] = i;
    rng.shuffle(all.begin(), all.end());
    coords.assign(all.begin(), all.begin() + max_coords);
  } else {
    coords.resize(size_t(n));
    for (int64_t i = 0; i < n; ++i) coords[size_t(i)] = i;
  }

  Tensor<double> probe = x;
  for (int64_t i : coords) {
    const double keep = probe[i];
    probe[i] = keep + step;
    const double up = f(probe);
    probe[i] = keep - step;
    const double down = f(probe);
    probe[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
    ++report.coords_checked;
    if (rel > report.max_rel_err) report.max_rel_err = rel;
    if (rel > tol) {
      report.ok = false;
      if (report.failures.size() < 16) report.failures.push_back({i, a, numeric, rel});
    }
  }
  return report;
}

}  // namespace pgtk
