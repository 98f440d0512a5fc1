#pragma once

#include <string>
#include <vector>

#include "retino/evalstats.hpp"
#include "retino/pipeline.hpp"
#include "retino/synthcam.hpp"

namespace retino::io {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

pipeline::SessionManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const pipeline::SessionManifest& manifest);

void write_report(const std::string& path, const pipeline::AnalysisReport& report);

/// One row per frame with every FrameDetections field; missing values stay
/// empty.
void write_detections_csv(const std::string& path,
                          const std::vector<pipeline::FrameDetections>& frames);

void write_ground_truth(const std::string& path, const synth::GroundTruth& truth);
synth::GroundTruth read_ground_truth(const std::string& path);

void write_metrics(const std::string& path, const eval::MetricsReport& metrics,
                   bool sample_std);
void write_bland_altman_csv(const std::string& path, const std::vector<eval::DatasetRow>& rows);

/// Resolved configuration + tool version, written next to every output so a
/// run can be reproduced bit-identically.
void write_run_meta(const std::string& path, const std::string& subcommand,
                    const std::string& resolved_config_json, int jobs);

/// frames/%06d.png listing in index order; throws Io when none exist.
std::vector<std::string> list_frame_paths(const std::string& session_dir);

}  // namespace retino::io
