// Copyright 2026 The mpstat-twin Authors
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


#include "mpstat/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpstat/errors.hpp"

namespace mpstat {

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw RangeError("fit_line needs two or more paired points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw RangeError("fit_line: x has no spread");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i)
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(y[i] - (fit.slope * x[i] + fit.intercept)));
  return fit;
}

std::vector<double> moving_average(std::span<const double> y, int window) {
  const auto n = static_cast<long>(y.size());
  const long half = std::max(window, 1) / 2;
  std::vector<double> out(y.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half);
    const long hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (long j = lo; j <= hi; ++j) s += y[j];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

namespace {

// Prominence of a maximum at [a, b] with value v (scipy-style: the lowest
// point on each side before terrain rises above v, taking the higher base).
double prominence_of_max(std::span<const double> y, std::size_t a, std::size_t b) {
  const double v = y[a];
  double left_min = v;
  for (std::size_t i = a; i-- > 0;) {
    if (y[i] > v) break;
    left_min = std::min(left_min, y[i]);
  }
  double right_min = v;
  for (std::size_t i = b + 1; i < y.size(); ++i) {
    if (y[i] > v) break;
    right_min = std::min(right_min, y[i]);
  }
  return v - std::max(left_min, right_min);
}

void collect(std::span<const double> y, bool maxima, double min_prom, std::vector<Extremum>& out) {
  std::vector<double> s(y.begin(), y.end());
  if (!maxima)
    for (auto& v : s) v = -v;
  std::size_t i = 1;
  while (i + 1 < s.size()) {
    if (!(s[i] > s[i - 1])) {
      ++i;
      continue;
    }
    std::size_t b = i;
    while (b + 1 < s.size() && s[b + 1] == s[i]) ++b;
    if (b + 1 < s.size() && s[b + 1] < s[i]) {
      const double prom = prominence_of_max(s, i, b);
      if (prom >= min_prom) out.push_back({(i + b) / 2, y[(i + b) / 2], maxima, prom});
    }
    i = b + 1;
  }
}

}  // namespace

std::vector<Extremum> find_extrema(std::span<const double> y, double min_prominence) {
  std::vector<Extremum> out;
  collect(y, true, min_prominence, out);
  collect(y, false, min_prominence, out);
  std::sort(out.begin(), out.end(), [](const Extremum& a, const Extremum& b) { return a.index < b.index; });
  return out;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw RangeError("correlation needs two or more paired points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

}  // namespace mpstat
