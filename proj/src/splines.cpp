#include "peee/splines.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace peee {

SplineBasis::SplineBasis(int order, std::vector<double> internal_knots, double lo, double hi)
    : order_(order), internal_(std::move(internal_knots)), lo_(lo), hi_(hi) {
    if (order_ < 1)
        throw ConfigError(fmt::format("spline order must be >= 1, got {}", order_));
    if (!(lo_ < hi_))
        throw ConfigError(fmt::format("spline boundary [{}, {}] is empty", lo_, hi_));
    if (!std::is_sorted(internal_.begin(), internal_.end()))
        throw ConfigError("internal knots must be sorted");
    for (double k : internal_)
        if (!(k > lo_ && k < hi_))
            throw ConfigError(fmt::format("internal knot {} not strictly inside ({}, {})", k, lo_, hi_));
    knots_.assign(static_cast<std::size_t>(order_), lo_);
    knots_.insert(knots_.end(), internal_.begin(), internal_.end());
    knots_.insert(knots_.end(), static_cast<std::size_t>(order_), hi_);
}

SplineBasis SplineBasis::from_quantiles(std::span<const double> values, int n_internal, int order) {
    if (values.empty())
        throw ConfigError("cannot place spline knots on an empty column");
    if (n_internal < 0)
        throw ConfigError("number of internal knots must be non-negative");
    std::vector<double> v(values.begin(), values.end());
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn;
    const double hi = *mx;
    std::vector<double> internal;
    for (int k = 1; k <= n_internal; ++k)
        internal.push_back(sample_quantile(v, static_cast<double>(k) / (n_internal + 1)));
    return SplineBasis(order, std::move(internal), lo, hi);
}

void SplineBasis::eval(double x, std::span<double> out) const {
    const int dim = dimension();
    std::fill(out.begin(), out.end(), 0.0);
    x = std::clamp(x, lo_, hi_);

    // Knot span t[mu] <= x < t[mu+1]; the right boundary belongs to the last span.
    const int n_knots = static_cast<int>(knots_.size());
    int mu = order_ - 1;
    if (x >= hi_) {
        mu = dim - 1;
    } else {
        while (mu + 1 < n_knots && knots_[static_cast<std::size_t>(mu + 1)] <= x)
            ++mu;
    }

    // Cox-de Boor triangle: b[j] holds B_{mu-k+j, k+1}(x).
    std::vector<double> b(static_cast<std::size_t>(order_), 0.0);
    b[0] = 1.0;
    const auto t = [&](int i) { return knots_[static_cast<std::size_t>(i)]; };
    for (int k = 1; k < order_; ++k) {
        double saved = 0.0;
        for (int j = 0; j < k; ++j) {
            const int left = mu - k + 1 + j;
            const int right = mu + 1 + j;
            const double denom = t(right) - t(left);
            const double term = denom > 0.0 ? b[static_cast<std::size_t>(j)] / denom : 0.0;
            b[static_cast<std::size_t>(j)] = saved + (t(right) - x) * term;
            saved = (x - t(left)) * term;
        }
        b[static_cast<std::size_t>(k)] = saved;
    }
    for (int j = 0; j < order_; ++j) {
        const int idx = mu - order_ + 1 + j;
        if (idx >= 0 && idx < dim)
            out[static_cast<std::size_t>(idx)] = b[static_cast<std::size_t>(j)];
    }
}

Eigen::MatrixXd eval_basis(const SplineBasis& basis, std::span<const double> x) {
    const int dim = basis.dimension();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), dim);
    std::vector<double> row(static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < x.size(); ++i) {
        basis.eval(x[i], row);
        for (int j = 0; j < dim; ++j)
            out(static_cast<Eigen::Index>(i), j) = row[static_cast<std::size_t>(j)];
    }
    return out;
}

double sample_quantile(std::vector<double> values, double p) {
    if (values.empty())
        throw ConfigError("quantile of empty data");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - std::floor(h)) * (values[hi] - values[lo]);
}

}  // namespace peee
