#include "retino/evalstats.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace retino::eval {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s, int row, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        raise(Err::ParseError,
              "row " + std::to_string(row) + ": bad " + what + " value '" + s + "'");
    }
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(std::span<const double> v, double mean, bool sample) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    const double denom = sample ? static_cast<double>(v.size()) - 1.0
                                : static_cast<double>(v.size());
    return denom > 0.0 ? std::sqrt(s / denom) : 0.0;
}

}  // namespace

std::vector<DatasetRow> load_dataset(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) raise(Err::Io, "cannot open dataset: " + csv_path);

    std::vector<DatasetRow> rows;
    std::string line;
    int row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row_no == 1 && line.rfind("session_id", 0) == 0) continue;  // header
        const auto f = split_csv_line(line);
        if (f.size() < 6)
            raise(Err::ParseError, "row " + std::to_string(row_no) + ": expected >= 6 fields");

        DatasetRow row;
        row.record.session_id = f[0];
        row.record.eye = f[1];
        if (row.record.eye != "left" && row.record.eye != "right")
            raise(Err::ParseError, "row " + std::to_string(row_no) + ": eye must be left/right");
        row.record.subjective.sphere_d = parse_double(f[2], row_no, "sph");
        row.record.subjective.cylinder_d = parse_double(f[3], row_no, "cyl");
        row.record.subjective.axis_deg = parse_double(f[4], row_no, "axis");
        try {
            row.record.subjective.validate();
        } catch (const Error& e) {
            raise(Err::ParseError, "row " + std::to_string(row_no) + ": " + e.what());
        }
        row.predicted_power_d = parse_double(f[5], row_no, "pred_power");

        auto opt_rx = [&](std::size_t base) -> std::optional<optics::Prescription> {
            if (f.size() <= base + 2 || (f[base].empty() && f[base + 1].empty() && f[base + 2].empty()))
                return std::nullopt;
            optics::Prescription rx;
            rx.sphere_d = parse_double(f[base], row_no, "sph");
            rx.cylinder_d = parse_double(f[base + 1], row_no, "cyl");
            rx.axis_deg = parse_double(f[base + 2], row_no, "axis");
            return rx;
        };
        row.record.autorefractor = opt_rx(6);
        row.record.retinoscopy = opt_rx(9);
        if (f.size() > 12 && !f[12].empty())
            row.record.age_years = parse_double(f[12], row_no, "age");
        if (f.size() > 13 && !f[13].empty()) row.record.dilated = f[13] == "1" || f[13] == "true";

        row.subjective_power_d =
            optics::net_meridional_power(row.record.subjective, 0.0).value_d;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<DatasetRow> load_split_dataset(const std::string& truth_csv_path,
                                           const std::string& pred_csv_path) {
    std::ifstream pin(pred_csv_path);
    if (!pin) raise(Err::Io, "cannot open predictions: " + pred_csv_path);
    std::map<std::pair<std::string, std::string>, double> preds;
    std::string line;
    int row_no = 0;
    while (std::getline(pin, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row_no == 1 && line.rfind("session_id", 0) == 0) continue;
        const auto f = split_csv_line(line);
        if (f.size() < 3)
            raise(Err::ParseError,
                  "pred row " + std::to_string(row_no) + ": expected session_id,eye,pred_power");
        preds[{f[0], f[1]}] = parse_double(f[2], row_no, "pred_power");
    }

    std::ifstream tin(truth_csv_path);
    if (!tin) raise(Err::Io, "cannot open truth: " + truth_csv_path);
    std::vector<DatasetRow> rows;
    row_no = 0;
    while (std::getline(tin, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (row_no == 1 && line.rfind("session_id", 0) == 0) continue;
        const auto f = split_csv_line(line);
        if (f.size() < 5)
            raise(Err::ParseError, "truth row " + std::to_string(row_no) + ": expected >= 5 fields");
        DatasetRow row;
        row.record.session_id = f[0];
        row.record.eye = f[1];
        row.record.subjective.sphere_d = parse_double(f[2], row_no, "sph");
        row.record.subjective.cylinder_d = parse_double(f[3], row_no, "cyl");
        row.record.subjective.axis_deg = parse_double(f[4], row_no, "axis");
        const auto it = preds.find({row.record.session_id, row.record.eye});
        if (it == preds.end())
            raise(Err::ParseError, "truth row " + std::to_string(row_no) + ": no prediction for " +
                                       row.record.session_id + "/" + row.record.eye);
        row.predicted_power_d = it->second;
        row.subjective_power_d =
            optics::net_meridional_power(row.record.subjective, 0.0).value_d;
        rows.push_back(std::move(row));
    }
    return rows;
}

MaeStats mae_stats(std::span<const double> pred, std::span<const double> truth, bool sample_std) {
    if (pred.empty() || pred.size() != truth.size())
        raise(Err::EmptyInput, "mae_stats needs equal-length nonempty inputs");
    std::vector<double> abs_err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) abs_err[i] = std::abs(pred[i] - truth[i]);
    MaeStats out;
    out.mae = mean_of(abs_err);
    out.stddev = std_of(abs_err, out.mae, sample_std);
    return out;
}

BlandAltman bland_altman(std::span<const double> pred, std::span<const double> truth,
                         bool sample_std) {
    if (pred.size() != truth.size() || pred.size() < 2)
        raise(Err::EmptyInput, "bland_altman needs >= 2 pairs");
    std::vector<double> diff(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) diff[i] = pred[i] - truth[i];
    BlandAltman out;
    out.mean_diff = mean_of(diff);
    out.sd_diff = std_of(diff, out.mean_diff, sample_std);
    out.loa_low = out.mean_diff - 1.96 * out.sd_diff;
    out.loa_high = out.mean_diff + 1.96 * out.sd_diff;
    return out;
}

double pearson(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size() || pred.size() < 2)
        raise(Err::EmptyInput, "pearson needs >= 2 pairs");
    const double mx = mean_of(pred);
    const double my = mean_of(truth);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        sxy += (pred[i] - mx) * (truth[i] - my);
        sxx += (pred[i] - mx) * (pred[i] - mx);
        syy += (truth[i] - my) * (truth[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0)
        raise(Err::DegenerateVariance, "a series has no variance");
    return sxy / std::sqrt(sxx * syy);
}

ClassMetrics class_metrics(std::span<const optics::ScreeningClass> pred,
                           std::span<const optics::ScreeningClass> truth) {
    if (pred.size() != truth.size() || pred.empty())
        raise(Err::EmptyInput, "class_metrics needs equal-length nonempty inputs");
    ClassMetrics out;
    for (auto& row : out.confusion) row.fill(0);
    for (std::size_t i = 0; i < pred.size(); ++i)
        ++out.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];

    for (int c = 0; c < 5; ++c) {
        int tp = 0, fn = 0, fp = 0, tn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool is_truth = static_cast<int>(truth[i]) == c;
            const bool is_pred = static_cast<int>(pred[i]) == c;
            tp += is_truth && is_pred;
            fn += is_truth && !is_pred;
            fp += !is_truth && is_pred;
            tn += !is_truth && !is_pred;
        }
        // Metrics for a class with no positives (or no negatives) stay
        // undefined, mirroring the "--" convention for empty classes.
        if (tp + fn > 0)
            out.sensitivity[static_cast<std::size_t>(c)] =
                100.0 * tp / static_cast<double>(tp + fn);
        if (tn + fp > 0)
            out.specificity[static_cast<std::size_t>(c)] =
                100.0 * tn / static_cast<double>(tn + fp);
    }

    int tp = 0, fn = 0, fp = 0, tn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool truth_refer = truth[i] != optics::ScreeningClass::Normal;
        const bool pred_refer = pred[i] != optics::ScreeningClass::Normal;
        tp += truth_refer && pred_refer;
        fn += truth_refer && !pred_refer;
        fp += !truth_refer && pred_refer;
        tn += !truth_refer && !pred_refer;
    }
    if (tp + fn > 0) out.binary_sensitivity = 100.0 * tp / static_cast<double>(tp + fn);
    if (tn + fp > 0) out.binary_specificity = 100.0 * tn / static_cast<double>(tn + fp);
    return out;
}

MetricsReport compute_metrics(const std::vector<DatasetRow>& rows, bool sample_std) {
    if (rows.empty()) raise(Err::EmptyInput, "empty dataset");
    MetricsReport report;
    report.n = static_cast<int>(rows.size());

    std::vector<double> pred, truth;
    std::vector<optics::ScreeningClass> pred_cls, truth_cls;
    int within05 = 0, within10 = 0;
    pred.reserve(rows.size());
    truth.reserve(rows.size());
    for (const auto& row : rows) {
        pred.push_back(row.predicted_power_d);
        truth.push_back(row.subjective_power_d);
        pred_cls.push_back(optics::classify({row.predicted_power_d, 0.0}).cls);
        truth_cls.push_back(optics::classify({row.subjective_power_d, 0.0}).cls);
        const double err = std::abs(row.predicted_power_d - row.subjective_power_d);
        within05 += err <= 0.5;
        within10 += err <= 1.0;
    }

    report.mae = mae_stats(pred, truth, sample_std);
    report.bland_altman = rows.size() >= 2 ? bland_altman(pred, truth, sample_std) : BlandAltman{};
    try {
        report.pearson_r = pearson(pred, truth);
    } catch (const Error&) {
        report.pearson_r = std::numeric_limits<double>::quiet_NaN();
    }
    report.pct_within_0_5 = 100.0 * within05 / static_cast<double>(rows.size());
    report.pct_within_1_0 = 100.0 * within10 / static_cast<double>(rows.size());
    report.classes = class_metrics(pred_cls, truth_cls);
    return report;
}

}  // namespace retino::eval
