#pragma once

#include <span>
#include <vector>

namespace retino::robust {

/// Result of a robust straight-line fit y = intercept + slope * t.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    int n = 0;
    bool valid = false;

    double eval(double t) const { return intercept + slope * t; }
};

/// Huber line fit via iteratively reweighted least squares
/// (tuning constant 1.345, 20 iterations by default).
LineFit huber_line_fit(std::span<const double> t, std::span<const double> y,
                       double tuning = 1.345, int iterations = 20);

/// Median (by copy); throws EmptyInput on an empty range.
double median(std::vector<double> values);

}  // namespace retino::robust
