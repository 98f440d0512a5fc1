#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "retino/evalstats.hpp"
#include "retino/optics.hpp"
#include "retino/pipeline.hpp"
#include "retino/session_io.hpp"
#include "retino/synthcam.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retino;

namespace {

json default_scene_json() {
    return json{
        {"true_power_d", 0.0},
        {"setup",
         {{"u_m", 0.40},
          {"d_m", 0.35},
          {"focal_length_m", 0.0044},
          {"sensor_width_m", 0.0056},
          {"sensor_height_m", 0.0042},
          {"image_width_px", 3840},
          {"image_height_px", 2160}}},
        {"frame_size_code", "medium"},
        {"camera_yaw_deg", 12.0},
        {"fps", 30.0},
        {"passes", 4},
        {"sweep_speed_mps", 0.014},
        {"sweep_half_span_m", 0.0},
        {"sweep_center_offset_m", 0.0},
        {"pupil_radius_m", 0.004},
        {"iris_radius_m", 0.0065},
        {"beam_width_m", 0.004},
        {"reflex_width_m", 0.0024},
        {"reflex_blur_px", 1.0},
        {"noise", {{"sensor_sigma", 0.0}, {"jitter_px", 0.0}}},
        {"purkinje",
         {{"enabled", false}, {"radius_m", 0.0004}, {"offset_x_m", 0.0012}, {"offset_y_m", -0.0008}}},
        {"glare_enabled", false},
        {"distractor_frame", -1},
        {"seed", 1},
        {"levels",
         {{"beam", 0.95}, {"reflex", 0.62}, {"background", 0.04}, {"paper", 0.20}}},
    };
}

optics::OpticalSetup setup_from_config(const json& j) {
    optics::OpticalSetup s;
    s.u_m = j.at("u_m").get<double>();
    s.d_m = j.at("d_m").get<double>();
    s.image_width_px = j.at("image_width_px").get<int>();
    s.image_height_px = j.at("image_height_px").get<int>();
    if (j.contains("focal_length_m") && j.at("focal_length_m").get<double>() > 0.0) {
        s.focal_length_m = j.at("focal_length_m").get<double>();
        s.sensor_width_m = j.at("sensor_width_m").get<double>();
        s.sensor_height_m = j.value("sensor_height_m", 0.0);
        s.focal_length_px = s.focal_length_m / (s.sensor_width_m / s.image_width_px);
    }
    if (j.contains("focal_length_px")) s.focal_length_px = j.at("focal_length_px").get<double>();
    s.validate();
    return s;
}

synth::SceneConfig scene_from_json(const json& j) {
    synth::SceneConfig cfg;
    cfg.true_power_d = j.at("true_power_d").get<double>();
    cfg.setup = setup_from_config(j.at("setup"));
    cfg.frame_spec = pipeline::PaperFrameSpec::standard(
        pipeline::PaperFrameSpec::parse_size_code(j.at("frame_size_code").get<std::string>()));
    cfg.camera_yaw_deg = j.value("camera_yaw_deg", 12.0);
    cfg.fps = j.value("fps", 30.0);
    cfg.passes = j.value("passes", 4);
    cfg.sweep_speed_mps = j.value("sweep_speed_mps", 0.014);
    cfg.sweep_half_span_m = j.value("sweep_half_span_m", 0.0);
    cfg.sweep_center_offset_m = j.value("sweep_center_offset_m", 0.0);
    cfg.pupil_radius_m = j.value("pupil_radius_m", 0.004);
    cfg.iris_radius_m = j.value("iris_radius_m", 0.0065);
    cfg.beam_width_m = j.value("beam_width_m", 0.004);
    cfg.reflex_width_m = j.value("reflex_width_m", 0.0024);
    cfg.reflex_blur_px = j.value("reflex_blur_px", 1.0);
    if (j.contains("noise")) {
        cfg.noise.sensor_sigma = j.at("noise").value("sensor_sigma", 0.0);
        cfg.noise.jitter_px = j.at("noise").value("jitter_px", 0.0);
    }
    if (j.contains("purkinje")) {
        const auto& p = j.at("purkinje");
        cfg.purkinje_enabled = p.value("enabled", false);
        cfg.purkinje_radius_m = p.value("radius_m", 0.0004);
        cfg.purkinje_offset_x_m = p.value("offset_x_m", 0.0012);
        cfg.purkinje_offset_y_m = p.value("offset_y_m", -0.0008);
    }
    cfg.glare_enabled = j.value("glare_enabled", false);
    cfg.distractor_frame = j.value("distractor_frame", -1);
    cfg.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("levels")) {
        const auto& l = j.at("levels");
        cfg.beam_level = l.value("beam", 0.95);
        cfg.reflex_level = l.value("reflex", 0.62);
        cfg.background_level = l.value("background", 0.04);
        cfg.paper_level = l.value("paper", 0.20);
    }
    cfg.validate();
    return cfg;
}

json default_pipeline_json() {
    const pipeline::PipelineConfig d;
    return json{
        {"pixels_per_meter", d.pixels_per_meter},
        {"median_kernel", d.median_kernel},
        {"clahe_tile_px", d.clahe.tile_px},
        {"clahe_clip", d.clahe.clip_limit},
        {"canny_lo_ratio", d.canny_lo_ratio},
        {"beam_intensity_floor", d.beam_intensity_floor},
        {"reflex_column_fraction", d.reflex_column_fraction},
        {"reflex_min_contrast", d.reflex_min_contrast},
        {"upsample_factor", d.upsample_factor},
        {"neutral_threshold", d.neutral_threshold},
        {"huber_tuning", d.huber_tuning},
        {"huber_iterations", d.huber_iterations},
        {"min_pass_frames", d.min_pass_frames},
        {"min_beam_frames", d.min_beam_frames},
        {"velocity_window", d.velocity_window},
        {"scan_lines", d.scan_lines},
        {"pupil_hist_bin_px", d.pupil_hist_bin_px},
        {"pupil_gate_px", d.pupil_gate_px},
        {"pupil_r_min_m", d.pupil_r_min_m},
        {"pupil_r_max_m", d.pupil_r_max_m},
        {"pupil_min_radius_m", d.pupil_min_radius_m},
        {"wd_min_m", d.wd_min_m},
        {"wd_max_m", d.wd_max_m},
        {"min_beam_disp_px", d.min_beam_disp_px},
        {"fiducial_history", d.fiducial_history},
    };
}

pipeline::PipelineConfig pipeline_from_json(const json& j, int jobs) {
    pipeline::PipelineConfig cfg;
    cfg.pixels_per_meter = j.value("pixels_per_meter", cfg.pixels_per_meter);
    cfg.median_kernel = j.value("median_kernel", cfg.median_kernel);
    cfg.clahe.tile_px = j.value("clahe_tile_px", cfg.clahe.tile_px);
    cfg.clahe.clip_limit = j.value("clahe_clip", cfg.clahe.clip_limit);
    cfg.canny_lo_ratio = j.value("canny_lo_ratio", cfg.canny_lo_ratio);
    cfg.beam_intensity_floor = j.value("beam_intensity_floor", cfg.beam_intensity_floor);
    cfg.reflex_column_fraction = j.value("reflex_column_fraction", cfg.reflex_column_fraction);
    cfg.reflex_min_contrast = j.value("reflex_min_contrast", cfg.reflex_min_contrast);
    cfg.upsample_factor = j.value("upsample_factor", cfg.upsample_factor);
    cfg.neutral_threshold = j.value("neutral_threshold", cfg.neutral_threshold);
    cfg.huber_tuning = j.value("huber_tuning", cfg.huber_tuning);
    cfg.huber_iterations = j.value("huber_iterations", cfg.huber_iterations);
    cfg.min_pass_frames = j.value("min_pass_frames", cfg.min_pass_frames);
    cfg.min_beam_frames = j.value("min_beam_frames", cfg.min_beam_frames);
    cfg.velocity_window = j.value("velocity_window", cfg.velocity_window);
    cfg.scan_lines = j.value("scan_lines", cfg.scan_lines);
    cfg.pupil_hist_bin_px = j.value("pupil_hist_bin_px", cfg.pupil_hist_bin_px);
    cfg.pupil_gate_px = j.value("pupil_gate_px", cfg.pupil_gate_px);
    cfg.pupil_r_min_m = j.value("pupil_r_min_m", cfg.pupil_r_min_m);
    cfg.pupil_r_max_m = j.value("pupil_r_max_m", cfg.pupil_r_max_m);
    cfg.pupil_min_radius_m = j.value("pupil_min_radius_m", cfg.pupil_min_radius_m);
    cfg.wd_min_m = j.value("wd_min_m", cfg.wd_min_m);
    cfg.wd_max_m = j.value("wd_max_m", cfg.wd_max_m);
    cfg.min_beam_disp_px = j.value("min_beam_disp_px", cfg.min_beam_disp_px);
    cfg.fiducial_history = j.value("fiducial_history", cfg.fiducial_history);
    cfg.jobs = jobs;
    return cfg;
}

/// Apply "a.b.c=value" overrides onto a JSON document. Unknown keys are
/// rejected so typos cannot silently disable an option.
void apply_overrides(json& doc, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);

        json* node = &doc;
        std::stringstream ss(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        if (parts.empty()) throw CLI::ValidationError("--set has an empty key");
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            if (!node->contains(parts[i]))
                throw CLI::ValidationError("unknown config key: " + key);
            node = &(*node)[parts[i]];
        }
        const std::string& leaf = parts.back();
        if (!node->contains(leaf)) throw CLI::ValidationError("unknown config key: " + key);

        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;  // bare string
        }
        (*node)[leaf] = parsed;
    }
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("cannot open config: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw CLI::ValidationError(std::string("bad JSON config: ") + e.what());
    }
}

int run_synth(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& sets, int jobs) {
    json doc = default_scene_json();
    if (!config_path.empty()) doc.merge_patch(load_json_file(config_path));
    apply_overrides(doc, sets);
    const synth::SceneConfig cfg = scene_from_json(doc);

    synth::render_sequence(cfg, out_dir, jobs);
    io::write_run_meta((fs::path(out_dir) / "run_meta.json").string(), "synth", doc.dump(), jobs);
    std::cout << "rendered " << cfg.frame_count() << " frames to " << out_dir << "\n";
    return 0;
}

int run_analyze(const std::string& session_dir, const std::string& out_path,
                const std::vector<std::string>& sets, int jobs) {
    json doc = default_pipeline_json();
    apply_overrides(doc, sets);
    const pipeline::PipelineConfig cfg = pipeline_from_json(doc, jobs);

    std::vector<pipeline::FrameDetections> detections;
    const pipeline::AnalysisReport report = pipeline::analyze_session(session_dir, cfg, &detections);

    const fs::path out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_report(out_path, report);
    const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
    io::write_detections_csv((base / "detections.csv").string(), detections);
    io::write_run_meta((base / "run_meta.json").string(), "analyze", doc.dump(), jobs);

    if (!report.error.empty()) {
        std::cerr << "analysis failed: " << report.error << " (" << report.error_message << ")\n";
        return 2;
    }
    std::cout << "net power: " << *report.net_power_d << " D ("
              << optics::screening_class_name(report.screening->cls) << ")\n";
    return 0;
}

int run_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& out_path, bool sample_std) {
    std::vector<eval::DatasetRow> rows;
    if (truth_path.empty()) {
        rows = eval::load_dataset(pred_path);
    } else {
        rows = eval::load_split_dataset(truth_path, pred_path);
    }
    const eval::MetricsReport metrics = eval::compute_metrics(rows, sample_std);

    const fs::path out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_metrics(out_path, metrics, sample_std);
    const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
    io::write_bland_altman_csv((base / "bland_altman.csv").string(), rows);
    json meta{{"pred", pred_path}, {"truth", truth_path}, {"sample_std", sample_std}};
    io::write_run_meta((base / "run_meta.json").string(), "eval", meta.dump(), 1);

    std::cout << "n=" << metrics.n << " mae=" << metrics.mae.mae << " +/- " << metrics.mae.stddev
              << " D\n";
    return 0;
}

int run_sweep(double u, const std::vector<double>& ds, const std::string& range_spec, int n,
              const std::string& out_path) {
    double p_min = -6.0, p_max = 3.0;
    {
        const auto colon = range_spec.find(':');
        if (colon == std::string::npos)
            throw CLI::ValidationError("--range expects min:max");
        p_min = std::stod(range_spec.substr(0, colon));
        p_max = std::stod(range_spec.substr(colon + 1));
        if (!(p_max > p_min)) throw CLI::ValidationError("--range must satisfy min < max");
    }

    std::ostringstream os;
    os << "# retino sweep\n";
    os << "# schema_version " << io::kSchemaVersion << "\n";
    os << "# u_m " << u << "\n";
    os << "# samples within +/-0.05 D of the singularity -1/d are flagged 'singular' and carry "
          "no ratio\n";
    char line[96];
    for (double d : ds) {
        std::snprintf(line, sizeof(line), "# d=%.3f singularity_power_d=%.3f\n", d,
                      optics::singularity_power(d));
        os << line;
    }
    os << "d_m,power_d,ratio,flag\n";
    for (double d : ds) {
        optics::OpticalSetup setup;
        setup.u_m = u;
        setup.d_m = d;
        setup.focal_length_px = 3017.14;  // irrelevant to the curve, kept valid
        setup.image_width_px = 3840;
        setup.image_height_px = 2160;
        const auto samples = optics::operating_curve(setup, p_min, p_max, n);
        for (const auto& s : samples) {
            os << d << ',' << s.power_d << ',';
            if (s.singular) os << ",singular\n";
            else os << s.ratio << ",ok\n";
        }
    }

    const fs::path out(out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw CLI::ValidationError("cannot write " + out_path);
    f << os.str();
    const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
    json meta{{"u_m", u}, {"d_m", ds}, {"range", range_spec}, {"n", n}};
    io::write_run_meta((base / "run_meta.json").string(), "sweep", meta.dump(), 1);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"retinoscopy video analysis toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, session_dir, out_path, pred_path, truth_path, range_spec;
    std::vector<std::string> sets;
    std::vector<double> ds{0.2, 0.4, 0.66};
    double u = 0.4;
    int jobs = 1;
    int n = 181;
    bool sample_std = false;

    auto* synth = app.add_subcommand("synth", "render a synthetic retinoscopy session");
    synth->add_option("--config", config_path, "scene config JSON");
    synth->add_option("--out", out_dir, "output session directory")->required();
    synth->add_option("--set", sets, "override config keys (a.b=value)");
    synth->add_option("--jobs", jobs, "parallel workers");

    auto* analyze = app.add_subcommand("analyze", "estimate net refractive power from a session");
    analyze->add_option("--session", session_dir, "session directory")->required();
    analyze->add_option("--out", out_path, "report JSON path")->required();
    analyze->add_option("--set", sets, "override pipeline keys");
    analyze->add_option("--jobs", jobs, "parallel workers");

    auto* evalc = app.add_subcommand("eval", "screening metrics against ground truth");
    evalc->add_option("--pred", pred_path, "predictions CSV (or combined dataset)")->required();
    evalc->add_option("--truth", truth_path, "subjective refraction CSV");
    evalc->add_option("--out", out_path, "metrics JSON path")->required();
    evalc->add_flag("--sample-std", sample_std, "sample (n-1) std instead of population");

    auto* sweep = app.add_subcommand("sweep", "operating-curve samples of the optical model");
    sweep->add_option("--u", u, "effective source distance (m)");
    sweep->add_option("--d", ds, "working distances (m)")->delimiter(',');
    sweep->add_option("--range", range_spec, "power range min:max (D)")->required();
    sweep->add_option("--n", n, "samples per distance");
    sweep->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(config_path, out_dir, sets, jobs);
        if (analyze->parsed()) return run_analyze(session_dir, out_path, sets, jobs);
        if (evalc->parsed()) return run_eval(pred_path, truth_path, out_path, sample_std);
        if (sweep->parsed()) return run_sweep(u, ds, range_spec, n, out_path);
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
