#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "retino/evalstats.hpp"

using namespace retino;
using namespace retino::eval;
using optics::ScreeningClass;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << text;
    return path;
}

}  // namespace

TEST_CASE("mae stats") {
    const std::vector<double> zero = {1.0, 2.0, 3.0};
    const auto same = mae_stats(zero, zero);
    CHECK(same.mae == 0.0);
    CHECK(same.stddev == 0.0);

    const std::vector<double> pred1 = {1.0, -1.0}, truth1 = {0.0, 0.0};
    const auto a = mae_stats(pred1, truth1);
    CHECK(a.mae == doctest::Approx(1.0));
    CHECK(a.stddev == doctest::Approx(0.0));

    const std::vector<double> pred2 = {0.0, 2.0}, truth2 = {0.0, 0.0};
    const auto b = mae_stats(pred2, truth2);
    CHECK(b.mae == doctest::Approx(1.0));
    CHECK(b.stddev == doctest::Approx(1.0));

    // Symmetry.
    const auto c = mae_stats(truth2, pred2);
    CHECK(c.mae == b.mae);
    CHECK(c.stddev == b.stddev);

    CHECK_THROWS_AS(mae_stats({}, {}), Error);
}

TEST_CASE("bland-altman") {
    const std::vector<double> same = {1.0, 2.0, 3.0};
    const auto zero = bland_altman(same, same);
    CHECK(zero.mean_diff == 0.0);
    CHECK(zero.sd_diff == 0.0);
    CHECK(zero.loa_low == 0.0);
    CHECK(zero.loa_high == 0.0);

    const std::vector<double> pred = {2.0, 4.0}, truth = {1.0, 3.0};
    const auto ones = bland_altman(pred, truth);
    CHECK(ones.mean_diff == doctest::Approx(1.0));
    CHECK(ones.sd_diff == doctest::Approx(0.0));
    CHECK(ones.loa_low == doctest::Approx(1.0));
    CHECK(ones.loa_high == doctest::Approx(1.0));

    // Mean difference 0.5 with sd 0.9 reproduces the published limits of
    // agreement (-1.26 D, 2.26 D) within rounding.
    const std::vector<double> p2 = {-0.4, 1.4}, t2 = {0.0, 0.0};
    const auto ba = bland_altman(p2, t2);
    CHECK(ba.mean_diff == doctest::Approx(0.5));
    CHECK(ba.sd_diff == doctest::Approx(0.9));
    CHECK(ba.loa_low == doctest::Approx(-1.264));
    CHECK(ba.loa_high == doctest::Approx(2.264));
    CHECK(std::abs(ba.loa_low - (-1.26)) < 0.005);
    CHECK(std::abs(ba.loa_high - 2.26) < 0.005);

    // Width identity: 2 * 1.96 * sd.
    CHECK(ba.loa_high - ba.loa_low == doctest::Approx(2.0 * 1.96 * ba.sd_diff));
}

TEST_CASE("pearson") {
    const std::vector<double> x = {0.0, 1.0, 2.0};
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    const std::vector<double> neg = {0.0, -1.0, -2.0};
    CHECK(pearson(x, neg) == doctest::Approx(-1.0));
    const std::vector<double> y = {0.0, 2.0, 1.0};
    CHECK(pearson(x, y) == doctest::Approx(0.5));
    const std::vector<double> flat = {1.0, 1.0, 1.0};
    CHECK_THROWS_AS(pearson(x, flat), Error);
}

TEST_CASE("class metrics") {
    SUBCASE("perfect predictions") {
        const std::vector<ScreeningClass> truth = {
            ScreeningClass::Normal, ScreeningClass::ModerateMyopia, ScreeningClass::HighMyopia,
            ScreeningClass::ModerateHyperopia};
        const auto m = class_metrics(truth, truth);
        for (int c = 0; c < 5; ++c) {
            const auto idx = static_cast<std::size_t>(c);
            if (m.sensitivity[idx]) CHECK(*m.sensitivity[idx] == doctest::Approx(100.0));
            if (m.specificity[idx]) CHECK(*m.specificity[idx] == doctest::Approx(100.0));
        }
        CHECK(*m.binary_sensitivity == doctest::Approx(100.0));
        CHECK(*m.binary_specificity == doctest::Approx(100.0));
    }
    SUBCASE("hand-counted 2x2") {
        const std::vector<ScreeningClass> truth = {
            ScreeningClass::Normal, ScreeningClass::Normal, ScreeningClass::Normal,
            ScreeningClass::ModerateMyopia};
        const std::vector<ScreeningClass> pred = {
            ScreeningClass::Normal, ScreeningClass::Normal, ScreeningClass::ModerateMyopia,
            ScreeningClass::ModerateMyopia};
        const auto m = class_metrics(pred, truth);
        const auto n = static_cast<std::size_t>(ScreeningClass::Normal);
        REQUIRE(m.sensitivity[n]);
        CHECK(*m.sensitivity[n] == doctest::Approx(66.6666667));
        REQUIRE(m.specificity[n]);
        CHECK(*m.specificity[n] == doctest::Approx(100.0));
    }
    SUBCASE("absent class stays undefined") {
        const std::vector<ScreeningClass> truth = {ScreeningClass::Normal,
                                                   ScreeningClass::Normal};
        const auto m = class_metrics(truth, truth);
        CHECK_FALSE(m.sensitivity[static_cast<std::size_t>(ScreeningClass::HighHyperopia)]);
        // No refer-positive in truth: binary sensitivity undefined too.
        CHECK_FALSE(m.binary_sensitivity);
    }
    SUBCASE("order of pairs does not matter") {
        const std::vector<ScreeningClass> truth = {
            ScreeningClass::Normal, ScreeningClass::HighMyopia, ScreeningClass::ModerateMyopia,
            ScreeningClass::Normal};
        const std::vector<ScreeningClass> pred = {
            ScreeningClass::ModerateMyopia, ScreeningClass::HighMyopia, ScreeningClass::Normal,
            ScreeningClass::Normal};
        const auto a = class_metrics(pred, truth);
        const std::vector<ScreeningClass> truth_shuf = {truth[2], truth[0], truth[3], truth[1]};
        const std::vector<ScreeningClass> pred_shuf = {pred[2], pred[0], pred[3], pred[1]};
        const auto b = class_metrics(pred_shuf, truth_shuf);
        for (std::size_t c = 0; c < 5; ++c) {
            CHECK(a.sensitivity[c].has_value() == b.sensitivity[c].has_value());
            if (a.sensitivity[c]) CHECK(*a.sensitivity[c] == doctest::Approx(*b.sensitivity[c]));
        }
    }
}

TEST_CASE("dataset loading") {
    const auto path = write_temp("retino_eval_ds.csv",
                                 "session_id,eye,sph,cyl,axis,pred_power\n"
                                 "s1,left,-1.0,-0.5,90,-1.4\n"
                                 "s1,right,0.5,0.0,0,0.2\n");
    const auto rows = load_dataset(path.string());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].record.session_id == "s1");
    CHECK(rows[0].subjective_power_d == doctest::Approx(-1.5));
    CHECK(rows[0].predicted_power_d == doctest::Approx(-1.4));
    CHECK(rows[1].subjective_power_d == doctest::Approx(0.5));
    std::filesystem::remove(path);

    const auto bad = write_temp("retino_eval_bad.csv",
                                "session_id,eye,sph,cyl,axis,pred_power\n"
                                "s1,left,-1.0,-0.5,90,-1.4\n"
                                "s2,left,oops,-0.5,90,-1.4\n");
    try {
        load_dataset(bad.string());
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Err::ParseError);
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
    std::filesystem::remove(bad);
}

TEST_CASE("split dataset join") {
    const auto truth = write_temp("retino_eval_truth.csv",
                                  "session_id,eye,sph,cyl,axis\n"
                                  "s1,left,-2.0,0.0,0\n"
                                  "s1,right,1.0,-0.5,90\n");
    const auto pred = write_temp("retino_eval_pred.csv",
                                 "session_id,eye,pred_power\n"
                                 "s1,right,0.4\n"
                                 "s1,left,-2.2\n");
    const auto rows = load_split_dataset(truth.string(), pred.string());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].predicted_power_d == doctest::Approx(-2.2));
    CHECK(rows[1].subjective_power_d == doctest::Approx(0.5));
    std::filesystem::remove(truth);
    std::filesystem::remove(pred);
}

TEST_CASE("metrics report invariants") {
    std::vector<DatasetRow> rows;
    const double preds[] = {-2.1, -0.2, 1.4, 0.1, -4.5};
    const double truths[] = {-2.0, 0.3, 2.0, 0.0, -5.1};
    for (int i = 0; i < 5; ++i) {
        DatasetRow r;
        r.record.session_id = "s" + std::to_string(i);
        r.record.eye = "left";
        r.predicted_power_d = preds[i];
        r.subjective_power_d = truths[i];
        rows.push_back(r);
    }
    const auto report = compute_metrics(rows);
    CHECK(report.n == 5);
    CHECK(report.pct_within_0_5 <= report.pct_within_1_0);
    CHECK(report.bland_altman.loa_low <= report.bland_altman.loa_high);
}
