#pragma once

// Synthetic subsurface worlds and full data-collection runs: GPR traces from
// point scatterers and layers (two-way travel time physics, Ricker source),
// IMU and wheel-encoder streams with configurable noise and biases, and
// ground-truth poses.

#include <gprloc/geom.hpp>
#include <gprloc/graph.hpp>
#include <gprloc/preprocess.hpp>

#include <random>

namespace gprloc {

struct Scatterer {
    double x = 0, y = 0;       // m, world frame
    double depth = 0;          // m, > 0
    double reflectivity = 1;   // [0, 1]
};

struct Layer {
    double depth = 0;          // m at x = 0
    double reflectivity = 0.5;
    double dip = 0;            // depth slope per meter of x
};

struct WorldConfig {
    double extent_m = 30.0;            // along-track extent [0, extent]
    double scatterer_density = 1.0;    // per meter of track
    double min_depth = 0.3, max_depth = 2.0;
    double lateral_spread = 0.5;       // m, cross-track scatter
    int layer_count = 2;
    double velocity = 0.1;             // m/ns
    double attenuation = 0.3;          // 1/m

    static WorldConfig feature_dense() {
        WorldConfig c;
        c.scatterer_density = 2.0;
        return c;
    }
    static WorldConfig feature_sparse() {
        WorldConfig c;
        c.scatterer_density = 0.15;
        c.layer_count = 3;
        return c;
    }
};

struct SubsurfaceWorld {
    std::vector<Scatterer> scatterers;
    std::vector<Layer> layers;
    double velocity = 0.1;     // m/ns
    double attenuation = 0.3;  // 1/m
    uint64_t seed = 0;
};

struct SensorConfig {
    int samples_per_trace = 256;
    double time_window_ns = 60.0;
    double center_frequency_mhz = 500.0;
    double noise_sigma = 0.0;
    double wow_dc = 0.0;
    double wow_amplitude = 0.0;
    double wow_frequency_mhz = 5.0;
    double ringing_amplitude = 0.0;
    double ringing_period_ns = 8.0;
    double trigger_spacing_m = 0.05;

    double dt_ns() const { return time_window_ns / samples_per_trace; }
};

inline SubsurfaceWorld build_world(uint64_t seed, const WorldConfig& cfg) {
    if (cfg.extent_m <= 0 || cfg.min_depth <= 0 || cfg.max_depth <= cfg.min_depth)
        throw std::invalid_argument("build_world: invalid geometry ranges");
    if (cfg.velocity < 0.05 || cfg.velocity > 0.3)
        throw std::invalid_argument("build_world: velocity outside physical soil range");

    SubsurfaceWorld w;
    w.velocity = cfg.velocity;
    w.attenuation = cfg.attenuation;
    w.seed = seed;

    std::mt19937_64 rng(seed);
    std::poisson_distribution<int> count(cfg.scatterer_density * cfg.extent_m);
    std::uniform_real_distribution<double> ux(0.0, cfg.extent_m);
    std::uniform_real_distribution<double> uy(-cfg.lateral_spread, cfg.lateral_spread);
    std::uniform_real_distribution<double> ud(cfg.min_depth, cfg.max_depth);
    std::uniform_real_distribution<double> ur(0.4, 1.0);

    const int n = cfg.scatterer_density > 0 ? count(rng) : 0;
    for (int i = 0; i < n; ++i)
        w.scatterers.push_back({ux(rng), uy(rng), ud(rng), ur(rng)});

    std::uniform_real_distribution<double> uld(cfg.min_depth, cfg.max_depth);
    std::uniform_real_distribution<double> ulr(0.2, 0.6);
    std::uniform_real_distribution<double> uldip(-0.005, 0.005);
    for (int i = 0; i < cfg.layer_count; ++i)
        w.layers.push_back({uld(rng), ulr(rng), uldip(rng)});
    return w;
}

inline double ricker_wavelet(double t_ns, double f_ghz) {
    const double u = M_PI * f_ghz * t_ns;
    return (1.0 - 2.0 * u * u) * std::exp(-u * u);
}

// Forward model for one antenna position. Deterministic given the optional
// noise rng; pass nullptr for a noise-free trace.
inline Trace trace_at(const SubsurfaceWorld& world, const Pose3& antenna,
                      const SensorConfig& cfg, std::mt19937_64* noise_rng = nullptr) {
    const int n = cfg.samples_per_trace;
    const double dt = cfg.dt_ns();
    const double f_ghz = cfg.center_frequency_mhz * 1e-3;

    Trace out;
    out.dt_ns = dt;
    out.samples = Eigen::VectorXd::Zero(n);

    // impulse train: linear splat of each arrival between adjacent samples
    Eigen::VectorXd impulses = Eigen::VectorXd::Zero(n);
    auto splat = [&](double t_ns, double amp) {
        const double s = t_ns / dt;
        const int i0 = static_cast<int>(std::floor(s));
        if (i0 < 0 || i0 + 1 >= n) return;  // beyond the window: clipped
        const double w = s - i0;
        impulses[i0] += amp * (1.0 - w);
        impulses[i0 + 1] += amp * w;
    };

    const double ax = antenna.translation().x();
    const double ay = antenna.translation().y();
    for (const auto& sc : world.scatterers) {
        const double dx = sc.x - ax, dy = sc.y - ay;
        const double path = std::sqrt(sc.depth * sc.depth + dx * dx + dy * dy);
        const double t = 2.0 * path / world.velocity;
        const double amp = sc.reflectivity * std::exp(-world.attenuation * path)
                           / std::max(path, 0.05);
        splat(t, amp);
    }
    for (const auto& layer : world.layers) {
        const double d = layer.depth + layer.dip * ax;
        if (d <= 0) continue;
        const double t = 2.0 * d / world.velocity;
        splat(t, layer.reflectivity * std::exp(-world.attenuation * d) / std::max(d, 0.05));
    }

    // convolve the impulse train with the Ricker source pulse
    const int half = std::max(4, static_cast<int>(std::ceil(1.5 / (f_ghz * dt))));
    for (int i = 0; i < n; ++i) {
        if (impulses[i] == 0.0) continue;
        for (int j = std::max(0, i - half); j < std::min(n, i + half + 1); ++j)
            out.samples[j] += impulses[i] * ricker_wavelet((j - i) * dt, f_ghz);
    }

    // direct-coupling pulse and its ringing replicas
    if (cfg.ringing_amplitude > 0) {
        for (int k = 0; k * cfg.ringing_period_ns < cfg.time_window_ns; ++k) {
            const double amp = cfg.ringing_amplitude * std::pow(0.6, k);
            for (int j = 0; j < n; ++j)
                out.samples[j] += amp * ricker_wavelet(j * dt - k * cfg.ringing_period_ns, f_ghz);
        }
    }

    // wow: DC bias plus a low-frequency sinusoid over the time window
    if (cfg.wow_dc != 0 || cfg.wow_amplitude != 0) {
        const double fw = cfg.wow_frequency_mhz * 1e-3;  // cycles per ns
        for (int j = 0; j < n; ++j)
            out.samples[j] += cfg.wow_dc + cfg.wow_amplitude * std::sin(2 * M_PI * fw * j * dt);
    }

    if (noise_rng && cfg.noise_sigma > 0) {
        std::normal_distribution<double> n01(0.0, cfg.noise_sigma);
        for (int j = 0; j < n; ++j) out.samples[j] += n01(*noise_rng);
    }
    return out;
}

struct Waypoint {
    double t = 0;  // s
    double x = 0, y = 0;  // m
};

// Planar C1 trajectory through waypoints (Catmull-Rom in x,y over time).
// Heading follows the velocity direction; poses are SE(3) with z = 0.
class WaypointTrajectory {
public:
    explicit WaypointTrajectory(std::vector<Waypoint> pts) : pts_(std::move(pts)) {
        if (pts_.size() < 2) throw std::invalid_argument("trajectory needs >= 2 waypoints");
        for (size_t i = 1; i < pts_.size(); ++i)
            if (pts_[i].t <= pts_[i - 1].t)
                throw std::invalid_argument("trajectory times must increase");
    }

    double t_start() const { return pts_.front().t; }
    double t_end() const { return pts_.back().t; }

    void sample(double t, Vec3* pos, Vec3* vel, Vec3* acc) const {
        t = std::clamp(t, t_start(), t_end());
        size_t i = 1;
        while (i + 1 < pts_.size() && t > pts_[i].t) ++i;
        const auto& p1 = pts_[i - 1];
        const auto& p2 = pts_[i];
        const double h = p2.t - p1.t;
        const double u = (t - p1.t) / h;

        const Eigen::Vector2d v1 = tangent(i - 1), v2 = tangent(i);
        const Eigen::Vector2d a(p1.x, p1.y), b(p2.x, p2.y);

        const double u2 = u * u, u3 = u2 * u;
        const Eigen::Vector2d pos2 =
            (2 * u3 - 3 * u2 + 1) * a + (u3 - 2 * u2 + u) * h * v1 +
            (-2 * u3 + 3 * u2) * b + (u3 - u2) * h * v2;
        const Eigen::Vector2d vel2 =
            ((6 * u2 - 6 * u) * a + (3 * u2 - 4 * u + 1) * h * v1 +
             (-6 * u2 + 6 * u) * b + (3 * u2 - 2 * u) * h * v2) / h;
        const Eigen::Vector2d acc2 =
            ((12 * u - 6) * a + (6 * u - 4) * h * v1 +
             (-12 * u + 6) * b + (6 * u - 2) * h * v2) / (h * h);

        if (pos) *pos = Vec3(pos2.x(), pos2.y(), 0);
        if (vel) *vel = Vec3(vel2.x(), vel2.y(), 0);
        if (acc) *acc = Vec3(acc2.x(), acc2.y(), 0);
    }

private:
    Eigen::Vector2d tangent(size_t i) const {
        const size_t lo = i == 0 ? 0 : i - 1;
        const size_t hi = std::min(i + 1, pts_.size() - 1);
        const double dt = pts_[hi].t - pts_[lo].t;
        if (dt <= 0) return Eigen::Vector2d::Zero();
        return Eigen::Vector2d(pts_[hi].x - pts_[lo].x, pts_[hi].y - pts_[lo].y) / dt;
    }

    std::vector<Waypoint> pts_;
};

struct RunNoiseSpec {
    double imu_rate_hz = 200.0;
    double accel_noise = 0.0;        // m/s^2 per sample
    double gyro_noise = 0.0;         // rad/s per sample
    double accel_bias_mag = 0.0;     // constant bias magnitude scale
    double gyro_bias_mag = 0.0;
    double bias_walk = 0.0;          // per-sample random walk sigma
    double wheel_scale_sigma = 0.0;  // multiplicative encoder scale error
};

struct TimedPose {
    double t = 0;
    Pose3 pose;
};

struct TimedScalar {
    double t = 0;
    double value = 0;
};

struct GprRecord {
    double t = 0;
    double wheel_distance_m = 0;  // measured (noisy) odometry tag
    Trace trace;
};

struct RawDataset {
    std::vector<GprRecord> gpr;
    std::vector<ImuSample> imu;
    std::vector<TimedScalar> wheel;          // cumulative measured distance
    std::vector<TimedPose> truth;            // at IMU rate
    Vec6 true_imu_bias = Vec6::Zero();       // [accel, gyro]
    double wheel_scale = 1.0;
};

// Simulates a full data-collection run over a world. Deterministic for a
// fixed (world, trajectory, spec, seed).
inline RawDataset simulate_run(const SubsurfaceWorld& world,
                               const WaypointTrajectory& traj,
                               const SensorConfig& sensor,
                               const RunNoiseSpec& spec,
                               uint64_t seed) {
    if (spec.imu_rate_hz < 50.0)
        throw std::invalid_argument("simulate_run: IMU rate must be >= 50 Hz");

    RawDataset out;
    std::mt19937_64 rng(seed * 0x2545F4914F6CDD1Dull + 1);
    std::normal_distribution<double> n01(0.0, 1.0);

    if (spec.accel_bias_mag > 0)
        out.true_imu_bias.head<3>() =
            spec.accel_bias_mag * Vec3(n01(rng), n01(rng), n01(rng));
    if (spec.gyro_bias_mag > 0)
        out.true_imu_bias.tail<3>() =
            spec.gyro_bias_mag * Vec3(n01(rng), n01(rng), n01(rng));
    out.wheel_scale = 1.0 + spec.wheel_scale_sigma * n01(rng);

    const double dt = 1.0 / spec.imu_rate_hz;
    const Vec3 g = gravity_world();
    const int steps = static_cast<int>(std::round((traj.t_end() - traj.t_start()) / dt));

    // pass 1: kinematics and a continuous yaw profile. Heading follows the
    // velocity direction while moving; a heading change across a stationary
    // interval (a turnaround) is spread linearly over that interval, which
    // models the operator spinning the cart in place and keeps truth, gyro,
    // and accelerometer mutually consistent.
    std::vector<Vec3> pos(steps + 1), vel(steps + 1), acc(steps + 1);
    std::vector<double> yaw(steps + 1, 0.0);
    std::vector<bool> moving(steps + 1, false);
    for (int k = 0; k <= steps; ++k) {
        const double t = traj.t_start() + k * dt;
        traj.sample(t, &pos[k], &vel[k], &acc[k]);
        moving[k] = vel[k].head<2>().norm() > 1e-6;
        if (moving[k]) yaw[k] = std::atan2(vel[k].y(), vel[k].x());
    }
    {
        auto wrap_pi = [](double a) {
            while (a > M_PI) a -= 2 * M_PI;
            while (a <= -M_PI) a += 2 * M_PI;
            return a;
        };
        int prev = -1;
        for (int k = 0; k <= steps; ++k) {
            if (!moving[k]) continue;
            if (prev < 0) {
                for (int j = 0; j < k; ++j) yaw[j] = yaw[k];
            } else {
                const double d = wrap_pi(yaw[k] - yaw[prev]);
                for (int j = prev + 1; j <= k; ++j)
                    yaw[j] = yaw[prev] + d * (j - prev) / double(k - prev);
            }
            prev = k;
        }
        if (prev < 0) prev = 0;
        for (int j = prev + 1; j <= steps; ++j) yaw[j] = yaw[prev];
    }
    std::vector<double> yaw_rate(steps + 1, 0.0);
    for (int k = 0; k < steps; ++k) yaw_rate[k] = (yaw[k + 1] - yaw[k]) / dt;
    if (steps > 0) yaw_rate[steps] = yaw_rate[steps - 1];

    double true_distance = 0;
    double measured_distance = 0;
    double next_trigger = 0;
    Vec6 bias = out.true_imu_bias;
    double prev_speed = vel[0].head<2>().norm();

    for (int k = 0; k <= steps; ++k) {
        const double t = traj.t_start() + k * dt;
        const double speed = vel[k].head<2>().norm();
        const Rot3 rot = Rot3::exp(Vec3(0, 0, yaw[k]));
        const Pose3 pose(rot, pos[k]);
        out.truth.push_back({t, pose});

        // IMU: instantaneous specific force and body rates plus bias and noise
        {
            ImuSample s;
            s.timestamp = t;
            const Mat3 r_t = rot.matrix().transpose();
            s.accel = r_t * (acc[k] - g) + bias.head<3>();
            s.gyro = Vec3(0, 0, yaw_rate[k]) + bias.tail<3>();
            if (spec.accel_noise > 0)
                s.accel += spec.accel_noise * Vec3(n01(rng), n01(rng), n01(rng));
            if (spec.gyro_noise > 0)
                s.gyro += spec.gyro_noise * Vec3(n01(rng), n01(rng), n01(rng));
            if (spec.bias_walk > 0) {
                bias.head<3>() += spec.bias_walk * Vec3(n01(rng), n01(rng), n01(rng)) * std::sqrt(dt);
                bias.tail<3>() += 0.1 * spec.bias_walk * Vec3(n01(rng), n01(rng), n01(rng)) * std::sqrt(dt);
            }
            out.imu.push_back(s);
        }

        // wheel odometry: integrated ground speed (trapezoid), scaled
        const double prev_distance = true_distance;
        if (k > 0) true_distance += 0.5 * (prev_speed + speed) * dt;
        prev_speed = speed;
        measured_distance = true_distance * out.wheel_scale;
        out.wheel.push_back({t, measured_distance});

        // GPR trigger every trigger_spacing meters of (true) travel; the
        // trigger instant is interpolated inside the step so timestamps
        // stay strictly increasing even with several triggers per step
        while (true_distance >= next_trigger - 1e-12) {
            const double frac = (true_distance > prev_distance)
                ? std::clamp((next_trigger - prev_distance) /
                             (true_distance - prev_distance), 0.0, 1.0)
                : 1.0;
            GprRecord rec;
            rec.t = t - dt * (1.0 - frac);
            rec.wheel_distance_m = next_trigger * out.wheel_scale;
            rec.trace = trace_at(world, pose, sensor, &rng);
            rec.trace.position_m = rec.wheel_distance_m;
            out.gpr.push_back(rec);
            next_trigger += sensor.trigger_spacing_m;
        }
    }
    return out;
}

} // namespace gprloc
