#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retino/optics.hpp"

namespace retino::eval {

struct GroundTruthRecord {
    std::string session_id;
    std::string eye;  ///< "left" or "right"
    optics::Prescription subjective;
    std::optional<optics::Prescription> autorefractor;
    std::optional<optics::Prescription> retinoscopy;
    std::optional<double> age_years;
    std::optional<bool> dilated;
};

struct DatasetRow {
    GroundTruthRecord record;
    double predicted_power_d = 0.0;
    double subjective_power_d = 0.0;  ///< horizontal net power of the subjective Rx
};

/// CSV schema:
/// session_id,eye,sph,cyl,axis,pred_power[,ar_sph,ar_cyl,ar_axis,ret_sph,ret_cyl,ret_axis,age,dilated]
/// Throws ParseError naming the offending row.
std::vector<DatasetRow> load_dataset(const std::string& csv_path);

/// Split form: truth CSV `session_id,eye,sph,cyl,axis[,...]` joined with a
/// predictions CSV `session_id,eye,pred_power` on (session_id, eye).
std::vector<DatasetRow> load_split_dataset(const std::string& truth_csv_path,
                                           const std::string& pred_csv_path);

struct MaeStats {
    double mae = 0.0;
    double stddev = 0.0;  ///< of |pred - truth|; population by default
};

MaeStats mae_stats(std::span<const double> pred, std::span<const double> truth,
                   bool sample_std = false);

struct BlandAltman {
    double mean_diff = 0.0;
    double sd_diff = 0.0;
    double loa_low = 0.0;   ///< mean - 1.96 sd
    double loa_high = 0.0;  ///< mean + 1.96 sd
};

BlandAltman bland_altman(std::span<const double> pred, std::span<const double> truth,
                         bool sample_std = false);

/// Sample Pearson correlation; throws DegenerateVariance when either series
/// has no spread.
double pearson(std::span<const double> pred, std::span<const double> truth);

/// One-vs-all metrics over the 5 screening classes plus binary screen
/// metrics from the refer flag. Metrics for a class absent from the truth
/// (or with no true negatives) stay unset, never zero.
struct ClassMetrics {
    std::array<std::optional<double>, 5> sensitivity{};
    std::array<std::optional<double>, 5> specificity{};
    std::array<std::array<int, 5>, 5> confusion{};  ///< [truth][pred]
    std::optional<double> binary_sensitivity;
    std::optional<double> binary_specificity;
};

ClassMetrics class_metrics(std::span<const optics::ScreeningClass> pred,
                           std::span<const optics::ScreeningClass> truth);

struct MetricsReport {
    int n = 0;
    MaeStats mae;
    double pearson_r = 0.0;
    BlandAltman bland_altman;
    double pct_within_0_5 = 0.0;
    double pct_within_1_0 = 0.0;
    ClassMetrics classes;
};

MetricsReport compute_metrics(const std::vector<DatasetRow>& rows, bool sample_std = false);

}  // namespace retino::eval
