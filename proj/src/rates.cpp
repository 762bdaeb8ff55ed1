#include "ptlab/rates.hpp"

#include <cmath>
#include <stdexcept>

namespace ptlab {

SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
    const std::size_t n = points.size();
    if (n < 3) throw std::invalid_argument("fit_loglog_slope: need at least 3 points");
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0))
            throw std::invalid_argument("fit_loglog_slope: coordinates must be positive");
        sx += std::log(x);
        sy += std::log(y);
    }
    const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
        const double dx = std::log(x) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y) - my);
    }
    if (sxx <= 0.0) throw std::invalid_argument("fit_loglog_slope: x values are all equal");
    SlopeFit fit;
    fit.slope = sxy / sxx;
    double rss = 0.0;
    for (const auto& [x, y] : points) {
        const double r = (std::log(y) - my) - fit.slope * (std::log(x) - mx);
        rss += r * r;
    }
    fit.std_error = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
    return fit;
}

}  // namespace ptlab
