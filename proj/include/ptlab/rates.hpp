#pragma once

#include <utility>
#include <vector>

namespace ptlab {

struct SlopeFit {
    double slope = 0.0;
    double std_error = 0.0;
};

// Ordinary least squares on (log x, log y). Needs at least three points with
// strictly positive coordinates.
SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

}  // namespace ptlab
