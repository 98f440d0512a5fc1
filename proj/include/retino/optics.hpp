#pragma once

#include <string>
#include <vector>

#include "retino/error.hpp"

namespace retino::optics {

/// Physical constants of one retinoscopy session: effective source distance,
/// working distance, and the camera intrinsics needed to convert between
/// image pixels and metric positions on the paper-frame plane.
struct OpticalSetup {
    double u_m = 0.40;   ///< effective source distance (vergence-sleeve dependent)
    double d_m = 0.35;   ///< working distance, camera to eye apex
    double focal_length_px = 0.0;
    int image_width_px = 0;
    int image_height_px = 0;
    double focal_length_m = 0.0;  ///< 0 when only focal_length_px is known
    double sensor_width_m = 0.0;
    double sensor_height_m = 0.0;

    /// Build from physical camera constants; focal_length_px is derived as
    /// focal_length_m / (sensor_width_m / image_width_px).
    static OpticalSetup from_camera(double u_m, double d_m, double focal_length_m,
                                    double sensor_width_m, double sensor_height_m,
                                    int image_width_px, int image_height_px);

    /// Checks u > 0, d > 0, focal_length_px > 0, and (when the physical
    /// constants are present) that focal_length_px matches them within 0.1%.
    void validate() const;
};

struct Prescription {
    double sphere_d = 0.0;
    double cylinder_d = 0.0;
    double axis_deg = 0.0;  ///< in [0, 180)

    void validate() const;
};

/// Net refractive power along a stated meridian.
struct NetPower {
    double value_d = 0.0;
    double meridian_deg = 0.0;
};

/// Ratio of reflex displacement to beam displacement on the image plane.
struct MovementRatio {
    double r = 0.0;
};

enum class ScreeningClass {
    HighHyperopia,
    ModerateHyperopia,
    Normal,
    ModerateMyopia,
    HighMyopia,
};

const char* screening_class_name(ScreeningClass c);

struct Screening {
    ScreeningClass cls = ScreeningClass::Normal;
    bool refer = false;
};

enum class Movement { With, Against, Neutral };

const char* movement_name(Movement m);

/// Far point distance f = -1/P (signed; negative = virtual far point behind
/// the eye). Throws ZeroPower for an emmetropic eye (far point at infinity).
double far_point_m(NetPower p);

/// Movement ratio r = u / ((u+d)(1+dP)) predicted for a given net power.
/// Throws Singularity within 1e-9 of the neutralization point P = -1/d.
MovementRatio forward_ratio(NetPower p, const OpticalSetup& s);

/// Net power from a measured ratio: P = (u - (u+d) r) / (r d (u+d)).
/// Exact inverse of forward_ratio away from the singularity.
NetPower estimate_power(MovementRatio ratio, const OpticalSetup& s);

/// Working-distance correction: net = gross - 1/d.
double gross_to_net(double p_gross_d, double d_m);

/// sphere + cylinder * sin^2(axis - meridian); meridian 0 recovers the
/// horizontal-meridian form.
NetPower net_meridional_power(const Prescription& rx, double meridian_deg);

/// With/Against from the sign of r; Neutral when |r| exceeds the threshold
/// (reflex fills the pupil near f = d). Throws ZeroRatio for r = 0.
Movement movement_direction(MovementRatio ratio, double neutral_threshold);

/// Table-based severity classes with exact boundary values assigned to the
/// less severe class; refer = outside [-1, +1] D.
Screening classify(NetPower p);

struct CurveSample {
    double power_d = 0.0;
    double ratio = 0.0;    ///< meaningless when singular
    bool singular = false; ///< within the exclusion band around P = -1/d
};

/// Power at which the ratio diverges: P = -1/d.
double singularity_power(double d_m);

/// n samples of forward_ratio over [p_min, p_max]; samples within
/// `exclusion_d` (default 0.05 D) of -1/d are flagged singular and carry no
/// ratio.
std::vector<CurveSample> operating_curve(const OpticalSetup& s, double p_min, double p_max,
                                         int n, double exclusion_d = 0.05);

}  // namespace retino::optics
