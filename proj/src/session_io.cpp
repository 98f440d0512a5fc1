#include "retino/session_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace retino::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Err::Io, "cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        raise(Err::ParseError, path + ": " + e.what());
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Err::Io, "cannot write: " + path);
    out << text;
    if (!out) raise(Err::Io, "short write: " + path);
}

void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

json setup_to_json(const optics::OpticalSetup& s) {
    json j;
    j["u_m"] = s.u_m;
    j["d_m"] = s.d_m;
    j["focal_length_px"] = s.focal_length_px;
    j["image_width_px"] = s.image_width_px;
    j["image_height_px"] = s.image_height_px;
    if (s.focal_length_m > 0.0) {
        j["focal_length_m"] = s.focal_length_m;
        j["sensor_width_m"] = s.sensor_width_m;
        j["sensor_height_m"] = s.sensor_height_m;
    }
    return j;
}

optics::OpticalSetup setup_from_json(const json& j) {
    optics::OpticalSetup s;
    s.u_m = j.at("u_m").get<double>();
    s.d_m = j.at("d_m").get<double>();
    s.image_width_px = j.at("image_width_px").get<int>();
    s.image_height_px = j.at("image_height_px").get<int>();
    if (j.contains("focal_length_m")) {
        s.focal_length_m = j.at("focal_length_m").get<double>();
        s.sensor_width_m = j.at("sensor_width_m").get<double>();
        s.sensor_height_m = j.value("sensor_height_m", 0.0);
        s.focal_length_px = s.focal_length_m / (s.sensor_width_m / s.image_width_px);
    }
    if (j.contains("focal_length_px")) s.focal_length_px = j.at("focal_length_px").get<double>();
    s.validate();
    return s;
}

}  // namespace

pipeline::SessionManifest read_manifest(const std::string& path) {
    const json j = read_json_file(path);
    pipeline::SessionManifest m;
    try {
        m.schema_version = j.value("schema_version", 1);
        m.fps = j.at("fps").get<double>();
        m.size_code = pipeline::PaperFrameSpec::parse_size_code(
            j.at("frame_size_code").get<std::string>());
        m.setup = setup_from_json(j.at("setup"));
        m.meridian_deg = j.value("meridian_deg", 0.0);
        m.eye = j.value("eye", "left");
    } catch (const json::exception& e) {
        raise(Err::ParseError, path + ": " + e.what());
    }
    return m;
}

void write_manifest(const std::string& path, const pipeline::SessionManifest& manifest) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["fps"] = manifest.fps;
    j["frame_size_code"] = pipeline::frame_size_name(manifest.size_code);
    j["setup"] = setup_to_json(manifest.setup);
    j["meridian_deg"] = manifest.meridian_deg;
    j["eye"] = manifest.eye;
    write_json_file(path, j);
}

void write_report(const std::string& path, const pipeline::AnalysisReport& report) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["net_power_d"] = report.net_power_d ? json(*report.net_power_d) : json(nullptr);
    j["working_distance_m"] = report.working_distance_m;
    if (report.movement) j["movement"] = optics::movement_name(*report.movement);
    else j["movement"] = nullptr;
    if (report.screening) {
        j["screening"] = {{"class", optics::screening_class_name(report.screening->cls)},
                          {"refer", report.screening->refer}};
    } else {
        j["screening"] = nullptr;
    }
    json passes = json::array();
    for (const auto& p : report.passes) {
        json pj;
        pj["first_frame"] = p.segment.first_frame;
        pj["last_frame"] = p.segment.last_frame;
        pj["direction"] =
            p.segment.direction == pipeline::PassDirection::LeftToRight ? "left_to_right"
                                                                        : "right_to_left";
        pj["valid"] = p.valid;
        if (p.valid) {
            pj["t1"] = p.stamps.t1;
            pj["t2"] = p.stamps.t2;
            pj["tracked_edge"] = p.stamps.edge == pipeline::TrackedEdge::Left ? "left" : "right";
            pj["ratio"] = p.ratio;
            pj["power_d"] = p.power_d;
        } else {
            pj["failure"] = p.failure;
        }
        passes.push_back(pj);
    }
    j["passes"] = passes;
    j["diagnostics"] = {{"frames_total", report.diagnostics.frames_total},
                        {"roi_failed", report.diagnostics.roi_failed},
                        {"fiducial_failed", report.diagnostics.fiducial_failed},
                        {"beam_absent", report.diagnostics.beam_absent},
                        {"pupil_failed", report.diagnostics.pupil_failed},
                        {"reflex_failed", report.diagnostics.reflex_failed},
                        {"pupil_too_small", report.diagnostics.pupil_too_small},
                        {"wd_source", report.diagnostics.wd_source}};
    if (report.error.empty()) {
        j["error"] = nullptr;
    } else {
        j["error"] = {{"code", report.error}, {"message", report.error_message}};
    }
    write_json_file(path, j);
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void write_detections_csv(const std::string& path,
                          const std::vector<pipeline::FrameDetections>& frames) {
    std::ostringstream os;
    os << "frame_index";
    for (int k = 0; k < 5; ++k)
        os << ",fid" << k << "_x,fid" << k << "_y,fid" << k << "_detected";
    os << ",beam_left,beam_right,pupil_cx,pupil_cy,pupil_r,reflex_left,reflex_right,"
          "working_distance_m,drop_reason\n";
    for (const auto& f : frames) {
        os << f.frame_index;
        for (int k = 0; k < 5; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            if (f.fiducial_present[idx]) {
                os << ',' << fmt(f.fiducials_px[idx].x) << ',' << fmt(f.fiducials_px[idx].y)
                   << ',' << (f.fiducial_detected[idx] ? 1 : 0);
            } else {
                os << ",,,";
            }
        }
        os << ',' << opt_fmt(f.beam.left_px) << ',' << opt_fmt(f.beam.right_px);
        if (f.pupil)
            os << ',' << fmt(f.pupil->cx) << ',' << fmt(f.pupil->cy) << ',' << fmt(f.pupil->radius);
        else
            os << ",,,";
        os << ',' << opt_fmt(f.reflex.left_px) << ',' << opt_fmt(f.reflex.right_px);
        os << ',' << opt_fmt(f.working_distance_m);
        os << ',' << f.drop_reason << '\n';
    }
    write_text_file(path, os.str());
}

void write_ground_truth(const std::string& path, const synth::GroundTruth& truth) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["true_power_d"] = truth.true_power_d;
    j["ratio_true"] = truth.ratio_true;
    j["pupil_radius_m"] = truth.pupil_radius_m;
    j["pupil_center_m"] = {truth.pupil_center_m.x, truth.pupil_center_m.y};
    j["reflex_width_m"] = truth.reflex_width_m;
    j["beam_width_m"] = truth.beam_width_m;
    json frames = json::array();
    for (const auto& f : truth.frames) {
        json fj;
        fj["i"] = f.frame_index;
        fj["beam_center_rel_m"] = f.beam_center_rel_m;
        fj["reflex_center_rel_m"] = f.reflex_center_rel_m;
        fj["reflex_visible"] = f.reflex_visible;
        fj["beam_left_px"] = f.beam_left_px;
        fj["beam_right_px"] = f.beam_right_px;
        fj["reflex_left_px"] = f.reflex_left_px;
        fj["reflex_right_px"] = f.reflex_right_px;
        json fids = json::array();
        for (const auto& p : f.fiducials_px) fids.push_back({p.x, p.y});
        fj["fiducials_px"] = fids;
        fj["pupil_center_px"] = {f.pupil_center_px.x, f.pupil_center_px.y};
        fj["jitter_px"] = {f.jitter_x_px, f.jitter_y_px};
        frames.push_back(fj);
    }
    j["frames"] = frames;
    write_json_file(path, j);
}

synth::GroundTruth read_ground_truth(const std::string& path) {
    const json j = read_json_file(path);
    synth::GroundTruth truth;
    try {
        truth.true_power_d = j.at("true_power_d").get<double>();
        truth.ratio_true = j.at("ratio_true").get<double>();
        truth.pupil_radius_m = j.at("pupil_radius_m").get<double>();
        truth.pupil_center_m = {j.at("pupil_center_m")[0].get<double>(),
                                j.at("pupil_center_m")[1].get<double>()};
        truth.reflex_width_m = j.at("reflex_width_m").get<double>();
        truth.beam_width_m = j.at("beam_width_m").get<double>();
        for (const auto& fj : j.at("frames")) {
            synth::FrameTruth f;
            f.frame_index = fj.at("i").get<int>();
            f.beam_center_rel_m = fj.at("beam_center_rel_m").get<double>();
            f.reflex_center_rel_m = fj.at("reflex_center_rel_m").get<double>();
            f.reflex_visible = fj.at("reflex_visible").get<bool>();
            f.beam_left_px = fj.at("beam_left_px").get<double>();
            f.beam_right_px = fj.at("beam_right_px").get<double>();
            f.reflex_left_px = fj.at("reflex_left_px").get<double>();
            f.reflex_right_px = fj.at("reflex_right_px").get<double>();
            for (int k = 0; k < 5; ++k)
                f.fiducials_px[static_cast<std::size_t>(k)] = {
                    fj.at("fiducials_px")[static_cast<std::size_t>(k)][0].get<double>(),
                    fj.at("fiducials_px")[static_cast<std::size_t>(k)][1].get<double>()};
            f.pupil_center_px = {fj.at("pupil_center_px")[0].get<double>(),
                                 fj.at("pupil_center_px")[1].get<double>()};
            f.jitter_x_px = fj.at("jitter_px")[0].get<double>();
            f.jitter_y_px = fj.at("jitter_px")[1].get<double>();
            truth.frames.push_back(f);
        }
    } catch (const json::exception& e) {
        raise(Err::ParseError, path + ": " + e.what());
    }
    return truth;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void write_metrics(const std::string& path, const eval::MetricsReport& metrics, bool sample_std) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["n"] = metrics.n;
    j["std_convention"] = sample_std ? "sample" : "population";
    j["mae"] = metrics.mae.mae;
    j["mae_std"] = metrics.mae.stddev;
    j["pearson_r"] = std::isnan(metrics.pearson_r) ? json(nullptr) : json(metrics.pearson_r);
    j["bland_altman"] = {{"mean_diff", metrics.bland_altman.mean_diff},
                         {"sd_diff", metrics.bland_altman.sd_diff},
                         {"loa_low", metrics.bland_altman.loa_low},
                         {"loa_high", metrics.bland_altman.loa_high}};
    j["pct_within_0_5"] = metrics.pct_within_0_5;
    j["pct_within_1_0"] = metrics.pct_within_1_0;

    json classes = json::object();
    for (int c = 0; c < 5; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        classes[optics::screening_class_name(static_cast<optics::ScreeningClass>(c))] = {
            {"sensitivity", optional_json(metrics.classes.sensitivity[idx])},
            {"specificity", optional_json(metrics.classes.specificity[idx])}};
    }
    j["classes"] = classes;
    json confusion = json::array();
    for (const auto& row : metrics.classes.confusion) {
        json r = json::array();
        for (int v : row) r.push_back(v);
        confusion.push_back(r);
    }
    j["confusion"] = confusion;
    j["binary"] = {{"sensitivity", optional_json(metrics.classes.binary_sensitivity)},
                   {"specificity", optional_json(metrics.classes.binary_specificity)}};
    write_json_file(path, j);
}

void write_bland_altman_csv(const std::string& path, const std::vector<eval::DatasetRow>& rows) {
    std::ostringstream os;
    os << "session_id,eye,mean,diff\n";
    for (const auto& r : rows) {
        const double mean = 0.5 * (r.predicted_power_d + r.subjective_power_d);
        const double diff = r.predicted_power_d - r.subjective_power_d;
        os << r.record.session_id << ',' << r.record.eye << ',' << fmt(mean) << ',' << fmt(diff)
           << '\n';
    }
    write_text_file(path, os.str());
}

void write_run_meta(const std::string& path, const std::string& subcommand,
                    const std::string& resolved_config_json, int jobs) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool_version"] = kToolVersion;
    j["subcommand"] = subcommand;
    j["jobs"] = jobs;
    try {
        j["config"] = json::parse(resolved_config_json);
    } catch (const json::exception&) {
        j["config"] = resolved_config_json;
    }
    write_json_file(path, j);
}

std::vector<std::string> list_frame_paths(const std::string& session_dir) {
    const fs::path frames_dir = fs::path(session_dir) / "frames";
    std::vector<std::string> paths;
    for (int i = 0;; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.png", i);
        const fs::path p = frames_dir / name;
        if (!fs::exists(p)) break;
        paths.push_back(p.string());
    }
    if (paths.empty()) raise(Err::Io, "no frames under " + frames_dir.string());
    return paths;
}

}  // namespace retino::io
