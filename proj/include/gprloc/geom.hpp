#pragma once

// Minimal SO(3)/SE(3) layer: composition, inversion, exp/log and the
// manifold difference used by relative factors. Tangent ordering is
// [omega (rad), rho (m)].

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace gprloc {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return m;
}

// Angle below which Taylor branches replace the trigonometric closed forms.
constexpr double kSmallAngle = 1e-6;

class Rot3 {
public:
    Rot3() : q_(1, 0, 0, 0) {}
    explicit Rot3(const Eigen::Quaterniond& q) : q_(q.normalized()) {}
    explicit Rot3(const Mat3& m) : q_(Eigen::Quaterniond(m).normalized()) {}

    static Rot3 identity() { return Rot3(); }

    static Rot3 exp(const Vec3& omega) {
        const double theta = omega.norm();
        if (theta < kSmallAngle) {
            // first-order quaternion, renormalized
            Eigen::Quaterniond q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
            return Rot3(q);
        }
        const Vec3 axis = omega / theta;
        return Rot3(Eigen::Quaterniond(Eigen::AngleAxisd(theta, axis)));
    }

    // Branch at pi: the quaternion is flipped to positive scalar part first.
    Vec3 log() const {
        Eigen::Quaterniond q = q_;
        if (q.w() < 0) q.coeffs() *= -1.0;
        const double vn = q.vec().norm();
        if (vn < kSmallAngle) return 2.0 * q.vec();
        const double theta = 2.0 * std::atan2(vn, q.w());
        return (theta / vn) * q.vec();
    }

    Rot3 inverse() const { return Rot3(q_.conjugate()); }

    Rot3 operator*(const Rot3& o) const { return Rot3(q_ * o.q_); }
    Vec3 operator*(const Vec3& v) const { return q_ * v; }

    Mat3 matrix() const { return q_.toRotationMatrix(); }
    const Eigen::Quaterniond& quaternion() const { return q_; }

    bool isApprox(const Rot3& o, double tol = 1e-9) const {
        return (matrix() - o.matrix()).norm() <= tol;
    }

private:
    Eigen::Quaterniond q_;
};

// Right Jacobian of SO(3): Exp(omega + d) ~= Exp(omega) Exp(Jr d).
inline Mat3 so3_right_jacobian(const Vec3& omega) {
    const double theta = omega.norm();
    const Mat3 W = skew(omega);
    if (theta < kSmallAngle) return Mat3::Identity() - 0.5 * W + W * W / 6.0;
    const double t2 = theta * theta;
    return Mat3::Identity()
        - (1.0 - std::cos(theta)) / t2 * W
        + (theta - std::sin(theta)) / (t2 * theta) * W * W;
}

inline Mat3 so3_right_jacobian_inverse(const Vec3& omega) {
    const double theta = omega.norm();
    const Mat3 W = skew(omega);
    if (theta < kSmallAngle) return Mat3::Identity() + 0.5 * W + W * W / 12.0;
    const double t2 = theta * theta;
    const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    return Mat3::Identity() + 0.5 * W + c * W * W;
}

inline Mat3 so3_left_jacobian(const Vec3& omega) { return so3_right_jacobian(-omega); }
inline Mat3 so3_left_jacobian_inverse(const Vec3& omega) { return so3_right_jacobian_inverse(-omega); }

class Pose3 {
public:
    Pose3() : t_(Vec3::Zero()) {}
    Pose3(const Rot3& r, const Vec3& t) : r_(r), t_(t) {}

    static Pose3 identity() { return Pose3(); }

    const Rot3& rotation() const { return r_; }
    const Vec3& translation() const { return t_; }

    Pose3 inverse() const {
        const Rot3 ri = r_.inverse();
        return Pose3(ri, -(ri * t_));
    }

    Pose3 operator*(const Pose3& o) const {
        return Pose3(r_ * o.r_, t_ + r_ * o.t_);
    }

    Vec3 operator*(const Vec3& p) const { return r_ * p + t_; }

    // SE(3) exponential; tangent is [omega, rho].
    static Pose3 exp(const Vec6& xi) {
        const Vec3 omega = xi.head<3>();
        const Vec3 rho = xi.tail<3>();
        return Pose3(Rot3::exp(omega), so3_left_jacobian(omega) * rho);
    }

    Vec6 log() const {
        const Vec3 omega = r_.log();
        Vec6 xi;
        xi.head<3>() = omega;
        xi.tail<3>() = so3_left_jacobian_inverse(omega) * t_;
        return xi;
    }

    // Adjoint mapping tangents between frames: Exp(Ad_T xi) T = T Exp(xi).
    Mat6 adjoint() const {
        const Mat3 R = r_.matrix();
        Mat6 ad = Mat6::Zero();
        ad.topLeftCorner<3, 3>() = R;
        ad.bottomRightCorner<3, 3>() = R;
        ad.bottomLeftCorner<3, 3>() = skew(t_) * R;
        return ad;
    }

    bool isApprox(const Pose3& o, double tol = 1e-9) const {
        return r_.isApprox(o.r_, tol) && (t_ - o.t_).norm() <= tol;
    }

private:
    Rot3 r_;
    Vec3 t_;
};

namespace detail {

// Q block of the SE(3) left Jacobian (Barfoot's formulation, adapted to
// [omega, rho] ordering).
inline Mat3 se3_left_jacobian_q(const Vec3& omega, const Vec3& rho) {
    const double theta = omega.norm();
    const Mat3 W = skew(omega);
    const Mat3 P = skew(rho);
    const Mat3 WP = W * P, PW = P * W, WPW = W * P * W;

    double c1, c2, c3;
    if (theta < 1e-3) {
        const double t2 = theta * theta;
        c1 = 1.0 / 6.0 - t2 / 120.0;
        c2 = 1.0 / 24.0 - t2 / 720.0;
        c3 = 1.0 / 120.0 - t2 / 2520.0;
    } else {
        const double t2 = theta * theta;
        const double t4 = t2 * t2;
        const double s = std::sin(theta), c = std::cos(theta);
        c1 = (theta - s) / (t2 * theta);
        c2 = (t2 / 2.0 + c - 1.0) / t4;
        c3 = (theta - s - theta * t2 / 6.0) / (-t4 * theta);
    }
    return 0.5 * P
        + c1 * (WP + PW + WPW)
        + c2 * (W * WP + PW * W - 3.0 * WPW)
        + 0.5 * (c2 - 3.0 * c3) * (WPW * W + W * WPW);
}

} // namespace detail

inline Mat6 se3_left_jacobian(const Vec6& xi) {
    const Vec3 omega = xi.head<3>();
    const Vec3 rho = xi.tail<3>();
    const Mat3 J = so3_left_jacobian(omega);
    Mat6 out = Mat6::Zero();
    out.topLeftCorner<3, 3>() = J;
    out.bottomRightCorner<3, 3>() = J;
    out.bottomLeftCorner<3, 3>() = detail::se3_left_jacobian_q(omega, rho);
    return out;
}

inline Mat6 se3_left_jacobian_inverse(const Vec6& xi) {
    const Vec3 omega = xi.head<3>();
    const Vec3 rho = xi.tail<3>();
    const Mat3 Jinv = so3_left_jacobian_inverse(omega);
    const Mat3 Q = detail::se3_left_jacobian_q(omega, rho);
    Mat6 out = Mat6::Zero();
    out.topLeftCorner<3, 3>() = Jinv;
    out.bottomRightCorner<3, 3>() = Jinv;
    out.bottomLeftCorner<3, 3>() = -Jinv * Q * Jinv;
    return out;
}

inline Mat6 se3_right_jacobian(const Vec6& xi) { return se3_left_jacobian(-xi); }
inline Mat6 se3_right_jacobian_inverse(const Vec6& xi) { return se3_left_jacobian_inverse(-xi); }

// Right-difference convention: a (-) b = log(b^-1 a).
inline Vec6 boxminus(const Pose3& a, const Pose3& b) {
    return (b.inverse() * a).log();
}

inline Pose3 boxplus(const Pose3& p, const Vec6& delta) {
    return p * Pose3::exp(delta);
}

// Jacobians of boxminus(a, b) w.r.t. right perturbations of a and b.
inline void boxminus_jacobians(const Pose3& a, const Pose3& b,
                               Mat6* jac_a, Mat6* jac_b) {
    const Vec6 r = boxminus(a, b);
    if (jac_a) *jac_a = se3_right_jacobian_inverse(r);
    if (jac_b) *jac_b = -se3_right_jacobian_inverse(r) * (b.inverse() * a).inverse().adjoint();
}

// Convenience constructors used across tests and the simulator.
inline Pose3 make_pose_xyz_yaw(double x, double y, double z, double yaw) {
    return Pose3(Rot3::exp(Vec3(0, 0, yaw)), Vec3(x, y, z));
}

inline Pose3 translate_x(double x) { return Pose3(Rot3(), Vec3(x, 0, 0)); }

inline double yaw_of(const Pose3& p) {
    const Mat3 R = p.rotation().matrix();
    return std::atan2(R(1, 0), R(0, 0));
}

} // namespace gprloc
