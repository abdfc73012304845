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


#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mpstat {

/// Ordinary least squares y = slope * x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_abs_residual = 0.0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Centered moving average; the window shrinks at the ends.
std::vector<double> moving_average(std::span<const double> y, int window);

struct Extremum {
  std::size_t index = 0;
  double value = 0.0;
  bool is_max = true;
  double prominence = 0.0;
};

/// Interior local maxima and minima (plateaus report their middle) whose
/// topographic prominence is at least `min_prominence`.
std::vector<Extremum> find_extrema(std::span<const double> y, double min_prominence);

/// Fractional ranks, ties share their average rank (1-based).
std::vector<double> ranks(std::span<const double> v);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace mpstat
