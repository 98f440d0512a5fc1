#include "retino/robust.hpp"

#include <algorithm>
#include <cmath>

#include "retino/error.hpp"

namespace retino::robust {

double median(std::vector<double> values) {
    if (values.empty()) raise(Err::EmptyInput, "median of empty range");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double hi = values[mid];
    if (values.size() % 2 == 1) return hi;
    std::nth_element(values.begin(), values.begin() + mid - 1, values.begin() + mid);
    return 0.5 * (values[mid - 1] + hi);
}

LineFit huber_line_fit(std::span<const double> t, std::span<const double> y,
                       double tuning, int iterations) {
    LineFit fit;
    if (t.size() != y.size() || t.size() < 2) return fit;
    const std::size_t n = t.size();

    std::vector<double> w(n, 1.0);
    double a = 0.0, b = 0.0;
    for (int iter = 0; iter < iterations; ++iter) {
        double sw = 0.0, st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sw += w[i];
            st += w[i] * t[i];
            sy += w[i] * y[i];
            stt += w[i] * t[i] * t[i];
            sty += w[i] * t[i] * y[i];
        }
        const double den = sw * stt - st * st;
        if (std::abs(den) < 1e-12 * std::max(1.0, sw * stt)) {
            if (iter == 0) return fit;  // all t identical
            break;
        }
        b = (sw * sty - st * sy) / den;
        a = (sy - b * st) / sw;

        std::vector<double> abs_res(n);
        for (std::size_t i = 0; i < n; ++i) abs_res[i] = std::abs(y[i] - (a + b * t[i]));
        const double scale = 1.4826 * median(abs_res);
        if (scale < 1e-12) break;  // residuals negligible
        const double k = tuning * scale;
        for (std::size_t i = 0; i < n; ++i)
            w[i] = abs_res[i] <= k ? 1.0 : k / abs_res[i];
    }

    fit.intercept = a;
    fit.slope = b;
    fit.n = static_cast<int>(n);
    fit.valid = true;
    return fit;
}

}  // namespace retino::robust
