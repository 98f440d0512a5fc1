#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "retino/imgproc.hpp"

namespace retino::img {

Point2 Homography::apply(Point2 p) const {
    const double wq = m[6] * p.x + m[7] * p.y + m[8];
    if (std::abs(wq) < 1e-15) raise(Err::SingularHomography, "point maps to infinity");
    return Point2{(m[0] * p.x + m[1] * p.y + m[2]) / wq,
                  (m[3] * p.x + m[4] * p.y + m[5]) / wq};
}

double Homography::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const double d = det();
    if (std::abs(d) < 1e-12) raise(Err::SingularHomography, "homography not invertible");
    Homography inv;
    inv.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    inv.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    inv.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    inv.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    inv.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    inv.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    inv.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    inv.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    inv.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    if (std::abs(inv.m[8]) > 1e-12) {
        const double s = inv.m[8];
        for (auto& v : inv.m) v /= s;
    }
    return inv;
}

namespace {

struct Normalization {
    Eigen::Matrix3d t;
    std::vector<Point2> pts;
};

Normalization normalize_points(std::span<const Point2> pts) {
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double mean_dist = 0.0;
    for (const auto& p : pts) mean_dist += std::hypot(p.x - mx, p.y - my);
    mean_dist /= static_cast<double>(pts.size());
    const double s = mean_dist < 1e-12 ? 1.0 : std::sqrt(2.0) / mean_dist;

    Normalization n;
    n.t << s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0;
    n.pts.reserve(pts.size());
    for (const auto& p : pts) n.pts.push_back(Point2{s * (p.x - mx), s * (p.y - my)});
    return n;
}

}  // namespace

Homography estimate_homography(std::span<const Point2> src, std::span<const Point2> dst) {
    if (src.size() != dst.size())
        raise(Err::ConfigInvalid, "correspondence count mismatch");
    if (src.size() < 4) raise(Err::DegenerateConfig, "need >= 4 correspondences");

    const Normalization ns = normalize_points(src);
    const Normalization nd = normalize_points(dst);

    const auto n = static_cast<Eigen::Index>(src.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = ns.pts[static_cast<std::size_t>(i)].x;
        const double y = ns.pts[static_cast<std::size_t>(i)].y;
        const double u = nd.pts[static_cast<std::size_t>(i)].x;
        const double v = nd.pts[static_cast<std::size_t>(i)].y;
        a.row(2 * i) << -x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u;
        a.row(2 * i + 1) << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
    }

    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // The system must have rank 8 for a unique (up to scale) solution.
    if (sv(0) <= 0.0 || sv(sv.size() - 2) / sv(0) < 1e-10)
        raise(Err::DegenerateConfig, "rank-deficient correspondence set");

    const Eigen::VectorXd hv = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);

    Eigen::Matrix3d hm = nd.t.inverse() * hn * ns.t;
    if (std::abs(hm(2, 2)) < 1e-12)
        raise(Err::DegenerateConfig, "homography has vanishing scale term");
    hm /= hm(2, 2);

    Homography out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.m[static_cast<std::size_t>(r) * 3 + c] = hm(r, c);
    if (std::abs(out.det()) < 1e-12)
        raise(Err::DegenerateConfig, "estimated homography is singular");
    return out;
}

ImageGray warp_perspective(const ImageGray& src, const Homography& h, int out_w, int out_h) {
    if (std::abs(h.det()) < 1e-12) raise(Err::SingularHomography, "cannot warp");
    const Homography inv = h.inverse();
    ImageGray out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const Point2 p = inv.apply(Point2{static_cast<double>(x), static_cast<double>(y)});
            out.at(x, y) = static_cast<std::uint8_t>(
                std::clamp(std::lround(src.sample(p.x, p.y)), 0L, 255L));
        }
    }
    return out;
}

}  // namespace retino::img
