#include "retino/optics.hpp"

#include <cmath>

namespace retino::optics {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kSingularityEps = 1e-9;
constexpr double kZeroRatioEps = 1e-12;
}  // namespace

OpticalSetup OpticalSetup::from_camera(double u_m, double d_m, double focal_length_m,
                                       double sensor_width_m, double sensor_height_m,
                                       int image_width_px, int image_height_px) {
    OpticalSetup s;
    s.u_m = u_m;
    s.d_m = d_m;
    s.focal_length_m = focal_length_m;
    s.sensor_width_m = sensor_width_m;
    s.sensor_height_m = sensor_height_m;
    s.image_width_px = image_width_px;
    s.image_height_px = image_height_px;
    if (sensor_width_m <= 0.0 || image_width_px < 1)
        raise(Err::ConfigInvalid, "camera constants must be positive");
    s.focal_length_px = focal_length_m / (sensor_width_m / image_width_px);
    s.validate();
    return s;
}

void OpticalSetup::validate() const {
    if (!(u_m > 0.0)) raise(Err::ConfigInvalid, "effective source distance u must be > 0");
    if (!(d_m > 0.0)) raise(Err::ConfigInvalid, "working distance d must be > 0");
    if (!(focal_length_px > 0.0)) raise(Err::ConfigInvalid, "focal_length_px must be > 0");
    if (image_width_px < 1 || image_height_px < 1)
        raise(Err::ConfigInvalid, "image dimensions must be >= 1");
    if (focal_length_m > 0.0 && sensor_width_m > 0.0) {
        const double derived = focal_length_m / (sensor_width_m / image_width_px);
        if (std::abs(derived - focal_length_px) > 1e-3 * derived)
            raise(Err::ConfigInvalid, "focal_length_px inconsistent with camera constants");
    }
}

void Prescription::validate() const {
    if (!(axis_deg >= 0.0 && axis_deg < 180.0))
        raise(Err::ConfigInvalid, "axis must lie in [0, 180)");
    if (!std::isfinite(sphere_d) || !std::isfinite(cylinder_d) || !std::isfinite(axis_deg))
        raise(Err::ConfigInvalid, "prescription fields must be finite");
}

const char* screening_class_name(ScreeningClass c) {
    switch (c) {
        case ScreeningClass::HighHyperopia: return "high_hyperopia";
        case ScreeningClass::ModerateHyperopia: return "moderate_hyperopia";
        case ScreeningClass::Normal: return "normal";
        case ScreeningClass::ModerateMyopia: return "moderate_myopia";
        case ScreeningClass::HighMyopia: return "high_myopia";
    }
    return "?";
}

const char* movement_name(Movement m) {
    switch (m) {
        case Movement::With: return "with";
        case Movement::Against: return "against";
        case Movement::Neutral: return "neutral";
    }
    return "?";
}

double far_point_m(NetPower p) {
    if (p.value_d == 0.0) raise(Err::ZeroPower, "emmetropic eye: far point at infinity");
    return -1.0 / p.value_d;
}

MovementRatio forward_ratio(NetPower p, const OpticalSetup& s) {
    const double denom = 1.0 + s.d_m * p.value_d;
    if (std::abs(denom) < kSingularityEps)
        raise(Err::Singularity, "power at the neutralization singularity -1/d");
    return MovementRatio{s.u_m / ((s.u_m + s.d_m) * denom)};
}

NetPower estimate_power(MovementRatio ratio, const OpticalSetup& s) {
    if (std::abs(ratio.r) < kZeroRatioEps)
        raise(Err::ZeroRatio, "ratio too small to invert");
    const double ud = s.u_m + s.d_m;
    return NetPower{(s.u_m - ud * ratio.r) / (ratio.r * s.d_m * ud), 0.0};
}

double gross_to_net(double p_gross_d, double d_m) {
    if (!(d_m > 0.0)) raise(Err::ConfigInvalid, "working distance must be > 0");
    return p_gross_d - 1.0 / d_m;
}

NetPower net_meridional_power(const Prescription& rx, double meridian_deg) {
    rx.validate();
    if (!(meridian_deg >= 0.0 && meridian_deg < 180.0))
        raise(Err::ConfigInvalid, "meridian must lie in [0, 180)");
    const double delta = (rx.axis_deg - meridian_deg) * kPi / 180.0;
    const double sin_term = std::sin(delta);
    return NetPower{rx.sphere_d + rx.cylinder_d * sin_term * sin_term, meridian_deg};
}

Movement movement_direction(MovementRatio ratio, double neutral_threshold) {
    if (ratio.r == 0.0) raise(Err::ZeroRatio, "zero ratio has no direction");
    if (std::abs(ratio.r) > neutral_threshold) return Movement::Neutral;
    return ratio.r > 0.0 ? Movement::With : Movement::Against;
}

Screening classify(NetPower p) {
    const double v = p.value_d;
    Screening out;
    // Boundary values belong to the less severe class.
    if (v > 4.0) {
        out.cls = ScreeningClass::HighHyperopia;
    } else if (v > 1.0) {
        out.cls = ScreeningClass::ModerateHyperopia;
    } else if (v >= -1.0) {
        out.cls = ScreeningClass::Normal;
    } else if (v >= -4.0) {
        out.cls = ScreeningClass::ModerateMyopia;
    } else {
        out.cls = ScreeningClass::HighMyopia;
    }
    out.refer = (v > 1.0 || v < -1.0);
    return out;
}

double singularity_power(double d_m) { return -1.0 / d_m; }

std::vector<CurveSample> operating_curve(const OpticalSetup& s, double p_min, double p_max,
                                         int n, double exclusion_d) {
    if (n < 2) raise(Err::ConfigInvalid, "operating_curve needs n >= 2");
    if (!(p_max > p_min)) raise(Err::ConfigInvalid, "empty power range");
    const double p_star = singularity_power(s.d_m);
    std::vector<CurveSample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double p = p_min + (p_max - p_min) * i / (n - 1);
        CurveSample sample;
        sample.power_d = p;
        if (std::abs(p - p_star) < exclusion_d) {
            sample.singular = true;
        } else {
            sample.ratio = forward_ratio(NetPower{p, 0.0}, s).r;
        }
        out.push_back(sample);
    }
    return out;
}

}  // namespace retino::optics
