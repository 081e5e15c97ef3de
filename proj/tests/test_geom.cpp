#include <doctest.h>

#include <gprloc/geom.hpp>

#include <random>

using namespace gprloc;

namespace {

std::mt19937_64 rng(42);

Vec3 random_vec3(double scale) {
    std::normal_distribution<double> n(0.0, scale);
    return Vec3(n(rng), n(rng), n(rng));
}

Vec6 random_tangent(double rot_scale, double trans_scale) {
    Vec6 xi;
    Vec3 w = random_vec3(rot_scale);
    if (w.norm() > M_PI - 0.1) w *= (M_PI - 0.1) / w.norm();
    xi.head<3>() = w;
    xi.tail<3>() = random_vec3(trans_scale);
    return xi;
}

Pose3 random_pose() { return Pose3::exp(random_tangent(0.8, 2.0)); }

} // namespace

TEST_CASE("rotation exp/log basics") {
    CHECK(Rot3::exp(Vec3::Zero()).isApprox(Rot3::identity()));

    Vec3 w(0.1, -0.3, 0.4);
    w *= 0.5 / w.norm();
    CHECK((Rot3::exp(w).log() - w).norm() < 1e-9);

    // quaternion stays unit through long products
    Rot3 r;
    for (int i = 0; i < 1000; ++i) r = r * Rot3::exp(Vec3(0.01, 0.02, -0.03));
    CHECK(std::abs(r.quaternion().norm() - 1.0) < 1e-9);
    CHECK((r * r.inverse()).isApprox(Rot3::identity()));
}

TEST_CASE("pose compose identity and inverse") {
    const Pose3 p = random_pose();
    CHECK((Pose3::identity() * p).isApprox(p));
    CHECK((p * p.inverse()).isApprox(Pose3::identity()));
}

TEST_CASE("rigid transform chain acts on a point") {
    // translate 1m along x, then rotate 90 deg about z, applied to (1,0,0)
    const Pose3 tx = translate_x(1.0);
    const Pose3 rz = Pose3(Rot3::exp(Vec3(0, 0, M_PI / 2)), Vec3::Zero());
    const Vec3 out = (tx * rz) * Vec3(1, 0, 0);
    CHECK((out - Vec3(1, 1, 0)).norm() < 1e-12);
}

TEST_CASE("group axioms on random poses") {
    for (int i = 0; i < 1000; ++i) {
        const Pose3 a = random_pose(), b = random_pose(), c = random_pose();
        CHECK(((a * b) * c).isApprox(a * (b * c), 1e-9));
        CHECK((a * Pose3::identity()).isApprox(a, 1e-9));
        CHECK((a * a.inverse()).isApprox(Pose3::identity(), 1e-9));
    }
}

TEST_CASE("se3 exp/log roundtrip") {
    CHECK(Pose3::exp(Vec6::Zero()).isApprox(Pose3::identity()));

    const Pose3 rz90 = Pose3::exp((Vec6() << 0, 0, M_PI / 2, 0, 0, 0).finished());
    CHECK(rz90.rotation().isApprox(Rot3::exp(Vec3(0, 0, M_PI / 2))));
    CHECK(rz90.translation().norm() < 1e-12);

    for (int i = 0; i < 1000; ++i) {
        const Vec6 xi = random_tangent(1.0, 3.0);
        CHECK((Pose3::exp(xi).log() - xi).norm() < 1e-9);
    }
}

TEST_CASE("boxminus trivial cases") {
    const Pose3 p = random_pose();
    CHECK(boxminus(p, p).norm() < 1e-12);

    const Vec6 d = boxminus(translate_x(2.0), translate_x(1.0));
    CHECK((d - (Vec6() << 0, 0, 0, 1, 0, 0).finished()).norm() < 1e-12);
}

TEST_CASE("boxplus/boxminus roundtrip") {
    for (int i = 0; i < 1000; ++i) {
        const Pose3 p = random_pose(), q = random_pose();
        CHECK(boxplus(q, boxminus(p, q)).isApprox(p, 1e-9));
        const Vec6 xi = random_tangent(0.8, 2.0);
        CHECK((boxminus(boxplus(q, xi), q) - xi).norm() < 1e-9);
    }
}

TEST_CASE("boxminus jacobians match central differences") {
    const double h = 1e-6;
    for (int i = 0; i < 100; ++i) {
        const Pose3 a = random_pose(), b = random_pose();
        Mat6 ja, jb;
        boxminus_jacobians(a, b, &ja, &jb);

        Mat6 ja_num, jb_num;
        for (int k = 0; k < 6; ++k) {
            Vec6 e = Vec6::Zero();
            e[k] = h;
            ja_num.col(k) = (boxminus(boxplus(a, e), b) - boxminus(boxplus(a, -e), b)) / (2 * h);
            jb_num.col(k) = (boxminus(a, boxplus(b, e)) - boxminus(a, boxplus(b, -e))) / (2 * h);
        }
        CHECK((ja - ja_num).norm() / ja_num.norm() < 1e-5);
        CHECK((jb - jb_num).norm() / jb_num.norm() < 1e-5);
    }
}

TEST_CASE("so3 jacobian identities") {
    for (int i = 0; i < 100; ++i) {
        Vec6 xi = random_tangent(1.0, 1.0);
        const Vec3 w = xi.head<3>();
        CHECK((so3_right_jacobian(w) * so3_right_jacobian_inverse(w) - Mat3::Identity()).norm() < 1e-9);
        CHECK((se3_left_jacobian(xi) * se3_left_jacobian_inverse(xi) - Mat6::Identity()).norm() < 1e-9);
    }
}
