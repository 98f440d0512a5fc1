#pragma once

#include "retino/synthcam.hpp"

namespace testutil {

/// Compact session used across pipeline tests: 960x540, Pixel-4A-like
/// camera, d = 0.35 m, u = 0.40 m.
inline retino::synth::SceneConfig test_scene(double power_d, int width = 960, int height = 540) {
    retino::synth::SceneConfig cfg;
    cfg.true_power_d = power_d;
    cfg.setup =
        retino::optics::OpticalSetup::from_camera(0.40, 0.35, 0.0044, 0.0056, 0.0042, width, height);
    cfg.camera_yaw_deg = 12.0;
    cfg.seed = 20240601;
    return cfg;
}

/// Two fast passes (about 100 frames at 30 fps).
inline retino::synth::SceneConfig short_session(double power_d) {
    auto cfg = test_scene(power_d);
    cfg.passes = 2;
    cfg.sweep_speed_mps = 0.021;
    return cfg;
}

}  // namespace testutil
