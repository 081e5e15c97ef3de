#pragma once

// Factor graph over full states x_t = [pose, velocity, imu bias]:
// relative SE(3) factors (GPR loop closures and wheel odometry),
// preintegrated IMU factors, and priors. Residuals are whitened by the
// solver; factors expose raw residuals plus analytic Jacobians.

#include <gprloc/geom.hpp>

#include <Eigen/Cholesky>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gprloc {

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

// State tangent layout: [pose (omega, rho) 0..5 | velocity 6..8 | bias 9..14].
// Bias layout: [accel 0..2, gyro 3..5].
struct State {
    Pose3 pose;
    Vec3 velocity = Vec3::Zero();
    Vec6 bias = Vec6::Zero();

    static constexpr int kDim = 15;

    State retract(const Vec15& delta) const {
        State out;
        out.pose = boxplus(pose, delta.head<6>());
        out.velocity = velocity + delta.segment<3>(6);
        out.bias = bias + delta.tail<6>();
        return out;
    }

    Vec3 accel_bias() const { return bias.head<3>(); }
    Vec3 gyro_bias() const { return bias.tail<3>(); }
};

class NoiseModel {
public:
    NoiseModel() = default;
    explicit NoiseModel(const MatX& covariance) : cov_(covariance) {
        Eigen::LLT<MatX> llt(cov_);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("NoiseModel: covariance is not positive definite");
        sqrt_cov_ = llt.matrixL();
    }

    static NoiseModel from_sigmas(const VecX& sigmas) {
        return NoiseModel(MatX(sigmas.array().square().matrix().asDiagonal()));
    }

    int dim() const { return static_cast<int>(cov_.rows()); }
    const MatX& covariance() const { return cov_; }

    // r_w = Sigma^{-1/2} r
    VecX whiten(const VecX& r) const {
        return sqrt_cov_.triangularView<Eigen::Lower>().solve(r);
    }
    MatX whiten_jacobian(const MatX& j) const {
        return sqrt_cov_.triangularView<Eigen::Lower>().solve(j);
    }

    double mahalanobis(const VecX& r) const { return whiten(r).squaredNorm(); }

private:
    MatX cov_;
    MatX sqrt_cov_;
};

enum class FactorKind { prior, gpr, wheel, imu };

inline const char* factor_kind_name(FactorKind k) {
    switch (k) {
        case FactorKind::prior: return "prior";
        case FactorKind::gpr: return "gpr";
        case FactorKind::wheel: return "wheel";
        case FactorKind::imu: return "imu";
    }
    return "?";
}

class Factor {
public:
    Factor(FactorKind kind, std::vector<int> keys, NoiseModel noise)
        : kind_(kind), keys_(std::move(keys)), noise_(std::move(noise)) {}
    virtual ~Factor() = default;

    FactorKind kind() const { return kind_; }
    const std::vector<int>& keys() const { return keys_; }
    const NoiseModel& noise() const { return noise_; }
    int dim() const { return noise_.dim(); }

    virtual VecX residual(const std::vector<State>& states) const = 0;
    // One 15-column block per connected variable, same order as keys().
    virtual std::vector<MatX> jacobians(const std::vector<State>& states) const = 0;
    virtual std::string describe() const = 0;

    // Optional Huber loss on the whitened residual norm; delta <= 0 keeps
    // the plain quadratic cost.
    void set_robust(double delta) { robust_delta_ = delta; }
    double robust_delta() const { return robust_delta_; }

    double cost(const std::vector<State>& states) const {
        const double s2 = noise_.mahalanobis(residual(states));
        if (robust_delta_ <= 0) return s2;
        const double rn = std::sqrt(s2);
        if (rn <= robust_delta_) return s2;
        return robust_delta_ * (2.0 * rn - robust_delta_);
    }

private:
    FactorKind kind_;
    std::vector<int> keys_;
    NoiseModel noise_;
    double robust_delta_ = 0;
};

// Full-state prior: [pose boxminus, velocity delta, bias delta].
class PriorFactor final : public Factor {
public:
    PriorFactor(int key, State prior, NoiseModel noise)
        : Factor(FactorKind::prior, {key}, std::move(noise)), prior_(std::move(prior)) {}

    VecX residual(const std::vector<State>& states) const override {
        const State& x = states[keys()[0]];
        Vec15 r;
        r.head<6>() = boxminus(x.pose, prior_.pose);
        r.segment<3>(6) = x.velocity - prior_.velocity;
        r.tail<6>() = x.bias - prior_.bias;
        return r;
    }

    std::vector<MatX> jacobians(const std::vector<State>& states) const override {
        const State& x = states[keys()[0]];
        Mat15 j = Mat15::Identity();
        Mat6 jp;
        boxminus_jacobians(x.pose, prior_.pose, &jp, nullptr);
        j.topLeftCorner<6, 6>() = jp;
        return {j};
    }

    std::string describe() const override {
        std::ostringstream os;
        const Vec6 xi = prior_.pose.log();
        os << "prior key=" << keys()[0] << " pose_log=" << xi.transpose();
        return os.str();
    }

private:
    State prior_;
};

// Relative pose factor between states {i = t-k, j = t} with measurement z
// of s_j^-1 s_i. Residual: (s_j^-1 s_i) boxminus z. Used for both GPR loop
// closures and wheel odometry.
class RelativePoseFactor final : public Factor {
public:
    RelativePoseFactor(FactorKind kind, int key_from, int key_to, Pose3 z, NoiseModel noise)
        : Factor(kind, {key_from, key_to}, std::move(noise)), z_(std::move(z)) {}

    const Pose3& measurement() const { return z_; }

    VecX residual(const std::vector<State>& states) const override {
        const Pose3& si = states[keys()[0]].pose;
        const Pose3& sj = states[keys()[1]].pose;
        return boxminus(sj.inverse() * si, z_);
    }

    std::vector<MatX> jacobians(const std::vector<State>& states) const override {
        const Pose3& si = states[keys()[0]].pose;
        const Pose3& sj = states[keys()[1]].pose;
        const Pose3 rel = sj.inverse() * si;
        const Vec6 r = boxminus(rel, z_);
        const Mat6 jr_inv = se3_right_jacobian_inverse(r);

        MatX ji = MatX::Zero(6, State::kDim);
        MatX jj = MatX::Zero(6, State::kDim);
        ji.leftCols<6>() = jr_inv;
        jj.leftCols<6>() = -jr_inv * rel.inverse().adjoint();
        return {ji, jj};
    }

    std::string describe() const override {
        std::ostringstream os;
        os << factor_kind_name(kind()) << " keys=" << keys()[0] << "," << keys()[1]
           << " z_log=" << z_.log().transpose();
        return os.str();
    }

private:
    Pose3 z_;
};

struct ImuSample {
    double timestamp = 0;  // s
    Vec3 accel = Vec3::Zero();  // m/s^2, specific force in body frame
    Vec3 gyro = Vec3::Zero();   // rad/s, body frame
};

struct ImuNoiseSpec {
    double accel_noise_density = 1e-3;   // m/s^2/sqrt(Hz)
    double gyro_noise_density = 1e-4;    // rad/s/sqrt(Hz)
    double accel_bias_sigma = 1e-3;      // per-interval random walk, m/s^2
    double gyro_bias_sigma = 1e-4;       // rad/s
};

// Preintegrated IMU measurement between two states (Forster-style on-manifold
// integration with first-order bias Jacobians).
class PreintegratedImu {
public:
    explicit PreintegratedImu(Vec6 linearization_bias = Vec6::Zero(),
                              ImuNoiseSpec noise = ImuNoiseSpec{})
        : bias_lin_(std::move(linearization_bias)), noise_(noise) {}

    void integrate(const Vec3& accel, const Vec3& gyro, double dt) {
        if (dt <= 0) throw std::invalid_argument("PreintegratedImu: dt must be positive");
        const Vec3 a = accel - bias_lin_.head<3>();
        const Vec3 w = gyro - bias_lin_.tail<3>();
        const Mat3 dR = delta_r_.matrix();
        const Rot3 incr = Rot3::exp(w * dt);
        const Mat3 r_mid = (delta_r_ * Rot3::exp(w * dt * 0.5)).matrix();

        // covariance propagation, tangent order [phi, v, p]
        Mat9 A = Mat9::Identity();
        A.block<3, 3>(0, 0) = incr.matrix().transpose();
        A.block<3, 3>(3, 0) = -dR * skew(a) * dt;
        A.block<3, 3>(6, 0) = -0.5 * dR * skew(a) * dt * dt;
        A.block<3, 3>(6, 3) = Mat3::Identity() * dt;
        Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
        B.block<3, 3>(0, 0) = so3_right_jacobian(w * dt) * dt;
        B.block<3, 3>(3, 3) = dR * dt;
        B.block<3, 3>(6, 3) = 0.5 * dR * dt * dt;
        Mat6 meas_cov = Mat6::Zero();
        meas_cov.topLeftCorner<3, 3>() =
            Mat3::Identity() * noise_.gyro_noise_density * noise_.gyro_noise_density / dt;
        meas_cov.bottomRightCorner<3, 3>() =
            Mat3::Identity() * noise_.accel_noise_density * noise_.accel_noise_density / dt;
        cov_ = A * cov_ * A.transpose() + B * meas_cov * B.transpose();

        // first-order bias Jacobians (accumulate before advancing the state)
        dp_dba_ += dv_dba_ * dt - 0.5 * dR * dt * dt;
        dp_dbg_ += dv_dbg_ * dt - 0.5 * dR * skew(a) * dr_dbg_ * dt * dt;
        dv_dba_ -= dR * dt;
        dv_dbg_ -= dR * skew(a) * dr_dbg_ * dt;
        dr_dbg_ = incr.matrix().transpose() * dr_dbg_ - so3_right_jacobian(w * dt) * dt;

        delta_p_ += delta_v_ * dt + 0.5 * r_mid * a * dt * dt;
        delta_v_ += r_mid * a * dt;
        delta_r_ = delta_r_ * incr;
        delta_t_ += dt;
    }

    // Integrates samples covering [t_start, t_end]; each sample is held
    // constant until the next timestamp (the last one until t_end).
    void integrate_samples(const std::vector<ImuSample>& samples, double t_end) {
        for (size_t i = 0; i < samples.size(); ++i) {
            const double t1 = (i + 1 < samples.size()) ? samples[i + 1].timestamp : t_end;
            if (t1 <= samples[i].timestamp)
                throw std::invalid_argument("PreintegratedImu: non-increasing timestamps");
            integrate(samples[i].accel, samples[i].gyro, t1 - samples[i].timestamp);
        }
    }

    const Rot3& delta_r() const { return delta_r_; }
    const Vec3& delta_v() const { return delta_v_; }
    const Vec3& delta_p() const { return delta_p_; }
    double delta_t() const { return delta_t_; }
    const Mat9& covariance() const { return cov_; }
    const Vec6& linearization_bias() const { return bias_lin_; }
    const ImuNoiseSpec& noise_spec() const { return noise_; }
    const Mat3& dr_dbg() const { return dr_dbg_; }
    const Mat3& dv_dba() const { return dv_dba_; }
    const Mat3& dv_dbg() const { return dv_dbg_; }
    const Mat3& dp_dba() const { return dp_dba_; }
    const Mat3& dp_dbg() const { return dp_dbg_; }

private:
    Vec6 bias_lin_;
    ImuNoiseSpec noise_;
    Rot3 delta_r_;
    Vec3 delta_v_ = Vec3::Zero();
    Vec3 delta_p_ = Vec3::Zero();
    double delta_t_ = 0;
    Mat9 cov_ = Mat9::Identity() * 1e-12;
    Mat3 dr_dbg_ = Mat3::Zero();
    Mat3 dv_dba_ = Mat3::Zero();
    Mat3 dv_dbg_ = Mat3::Zero();
    Mat3 dp_dba_ = Mat3::Zero();
    Mat3 dp_dbg_ = Mat3::Zero();
};

// 15-dim residual: [r_dR (3), r_dv (3), r_dp (3), r_bias (6)].
class ImuFactor final : public Factor {
public:
    ImuFactor(int key_i, int key_j, PreintegratedImu pim, const Vec3& gravity)
        : Factor(FactorKind::imu, {key_i, key_j}, make_noise(pim)),
          pim_(std::move(pim)), gravity_(gravity) {}

    VecX residual(const std::vector<State>& states) const override {
        const State& xi = states[keys()[0]];
        const State& xj = states[keys()[1]];
        const Mat3 ri_t = xi.pose.rotation().matrix().transpose();
        const double dt = pim_.delta_t();
        const Vec6 db = xi.bias - pim_.linearization_bias();
        const Vec3 dba = db.head<3>(), dbg = db.tail<3>();

        const Rot3 dr_hat = pim_.delta_r() * Rot3::exp(pim_.dr_dbg() * dbg);
        const Vec3 dv_hat = pim_.delta_v() + pim_.dv_dba() * dba + pim_.dv_dbg() * dbg;
        const Vec3 dp_hat = pim_.delta_p() + pim_.dp_dba() * dba + pim_.dp_dbg() * dbg;

        Vec15 r;
        r.head<3>() = (dr_hat.inverse() * xi.pose.rotation().inverse() * xj.pose.rotation()).log();
        r.segment<3>(3) = ri_t * (xj.velocity - xi.velocity - gravity_ * dt) - dv_hat;
        r.segment<3>(6) = ri_t * (xj.pose.translation() - xi.pose.translation()
                                  - xi.velocity * dt - 0.5 * gravity_ * dt * dt) - dp_hat;
        r.tail<6>() = xj.bias - xi.bias;
        return r;
    }

    std::vector<MatX> jacobians(const std::vector<State>& states) const override {
        const State& xi = states[keys()[0]];
        const State& xj = states[keys()[1]];
        const Mat3 ri = xi.pose.rotation().matrix();
        const Mat3 rj = xj.pose.rotation().matrix();
        const Mat3 ri_t = ri.transpose();
        const double dt = pim_.delta_t();
        const Vec6 db = xi.bias - pim_.linearization_bias();
        const Vec3 dbg = db.tail<3>();

        const Vec15 r = residual(states);
        const Vec3 r_dr = r.head<3>();
        const Mat3 jr_inv = so3_right_jacobian_inverse(r_dr);
        const Mat3 exp_r_t = Rot3::exp(r_dr).matrix().transpose();

        const Vec3 u_v = ri_t * (xj.velocity - xi.velocity - gravity_ * dt);
        const Vec3 u_p = ri_t * (xj.pose.translation() - xi.pose.translation()
                                 - xi.velocity * dt - 0.5 * gravity_ * dt * dt);

        MatX ji = MatX::Zero(15, State::kDim);
        MatX jj = MatX::Zero(15, State::kDim);

        // r_dR
        ji.block<3, 3>(0, 0) = -jr_inv * rj.transpose() * ri;
        jj.block<3, 3>(0, 0) = jr_inv;
        const Vec3 psi = pim_.dr_dbg() * dbg;
        ji.block<3, 3>(0, 12) = -jr_inv * exp_r_t * so3_right_jacobian(psi) * pim_.dr_dbg();

        // r_dv
        ji.block<3, 3>(3, 0) = skew(u_v);
        ji.block<3, 3>(3, 6) = -ri_t;
        jj.block<3, 3>(3, 6) = ri_t;
        ji.block<3, 3>(3, 9) = -pim_.dv_dba();
        ji.block<3, 3>(3, 12) = -pim_.dv_dbg();

        // r_dp (translation perturbed in body frame: p' = p + R*drho)
        ji.block<3, 3>(6, 0) = skew(u_p);
        ji.block<3, 3>(6, 3) = -Mat3::Identity();
        jj.block<3, 3>(6, 3) = ri_t * rj;
        ji.block<3, 3>(6, 6) = -ri_t * dt;
        ji.block<3, 3>(6, 9) = -pim_.dp_dba();
        ji.block<3, 3>(6, 12) = -pim_.dp_dbg();

        // r_bias
        ji.block<6, 6>(9, 9) = -Mat6::Identity();
        jj.block<6, 6>(9, 9) = Mat6::Identity();
        return {ji, jj};
    }

    std::string describe() const override {
        std::ostringstream os;
        os << "imu keys=" << keys()[0] << "," << keys()[1]
           << " dt=" << pim_.delta_t()
           << " dp=" << pim_.delta_p().transpose();
        return os.str();
    }

    const PreintegratedImu& preintegrated() const { return pim_; }

private:
    static NoiseModel make_noise(const PreintegratedImu& pim) {
        Mat15 cov = Mat15::Identity();
        cov.topLeftCorner<9, 9>() = pim.covariance();
        const double sa = pim.noise_spec().accel_bias_sigma;
        const double sg = pim.noise_spec().gyro_bias_sigma;
        cov.block<3, 3>(9, 9) = Mat3::Identity() * sa * sa;
        cov.block<3, 3>(12, 12) = Mat3::Identity() * sg * sg;
        return NoiseModel(cov);
    }

    PreintegratedImu pim_;
    Vec3 gravity_;
};

class FactorGraph {
public:
    int add_variable(const State& initial) {
        states_.push_back(initial);
        return static_cast<int>(states_.size()) - 1;
    }

    void add_factor(std::unique_ptr<Factor> f) {
        for (int k : f->keys())
            if (k < 0 || k >= static_cast<int>(states_.size()))
                throw std::out_of_range("FactorGraph: factor references unknown variable");
        factors_.push_back(std::move(f));
    }

    int num_variables() const { return static_cast<int>(states_.size()); }
    int num_factors() const { return static_cast<int>(factors_.size()); }

    const std::vector<State>& current_estimate() const { return states_; }
    std::vector<State>& mutable_estimate() { return states_; }
    const State& state(int i) const { return states_.at(i); }
    void set_state(int i, const State& s) { states_.at(i) = s; }

    const std::vector<std::unique_ptr<Factor>>& factors() const { return factors_; }

    double total_cost() const { return total_cost(states_); }
    double total_cost(const std::vector<State>& states) const {
        double c = 0;
        for (const auto& f : factors_) c += f->cost(states);
        return c;
    }

    bool has_prior() const {
        for (const auto& f : factors_)
            if (f->kind() == FactorKind::prior) return true;
        return false;
    }

    // One factor per line: kind, keys, measurement summary, sigma diagonal.
    std::string dump() const {
        std::ostringstream os;
        for (const auto& f : factors_) {
            os << f->describe() << " sigma_diag=";
            const MatX& c = f->noise().covariance();
            for (int i = 0; i < c.rows(); ++i)
                os << (i ? "," : "") << std::sqrt(c(i, i));
            os << "\n";
        }
        return os.str();
    }

private:
    std::vector<State> states_;
    std::vector<std::unique_ptr<Factor>> factors_;
};

constexpr double kGravityMagnitude = 9.81;
inline Vec3 gravity_world() { return Vec3(0, 0, -kGravityMagnitude); }

} // namespace gprloc
