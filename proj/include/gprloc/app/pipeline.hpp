#pragma once

// End-to-end localization pipeline: streams GPR/IMU/wheel measurements,
// builds submaps, gates loop-closure candidates, registers them with the
// selected model (odometry-only / engineered / learned / oracle), and runs
// incremental smoothing. Also ATE evaluation and model training.

#include <gprloc/app/config.hpp>
#include <gprloc/app/model_io.hpp>
#include <gprloc/solver.hpp>
#include <gprloc/submap.hpp>

#include <chrono>
#include <deque>
#include <set>

namespace gprloc::app {

enum class ModelKind { odometry_only, engineered, learned, oracle };

inline std::string to_string(ModelKind m) {
    switch (m) {
        case ModelKind::odometry_only: return "odometry-only";
        case ModelKind::engineered: return "engineered";
        case ModelKind::learned: return "learned";
        case ModelKind::oracle: return "oracle";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "odometry-only" || s == "odometry") return ModelKind::odometry_only;
    if (s == "engineered") return ModelKind::engineered;
    if (s == "learned") return ModelKind::learned;
    if (s == "oracle") return ModelKind::oracle;
    throw DataError("unknown model kind: '" + s + "'");
}

struct RunConfig {
    PreprocessConfig preprocess;
    SubmapConfig submap;
    SalienceConfig salience;
    RegistrationConfig registration;
    ModelKind model = ModelKind::odometry_only;

    // factor sigmas; tangent order is [rot(3), trans(3)]
    double gpr_x_sigma = 0.05;       // m, along-track registration
    // the gate only passes when the images correlate, which bounds the
    // relative heading and lateral/vertical offset within the footprint
    double gpr_yaw_sigma = 0.05;     // rad
    double gpr_lateral_sigma = 0.3;  // m
    double min_collinearity = 0.9;   // |cos dyaw| below this drops a candidate
    double gpr_huber_delta = 3.0;    // Huber threshold on whitened closure residuals
    double max_closure_innovation_m = 2.0;  // translation innovation gate
    double weak_sigma = 10.0;        // unobserved DOF
    double wheel_x_rel = 0.01;       // fraction of traveled distance
    double wheel_x_min = 1e-3;       // m, floor
    double wheel_yaw_sigma = 0.01;   // rad
    double wheel_lateral_sigma = 0.02;  // m, nonholonomic slip per segment
    ImuNoiseSpec imu_noise;
    double prior_pose_sigma = 1e-3;
    double prior_vel_sigma = 0.5;
    double prior_bias_sigma = 0.1;

    SolverConfig solver;
    int candidate_cap = 50;          // most recent salient submaps per step
    bool batch_only = false;         // skip per-step updates, optimize once at the end
    double max_stream_gap_s = 1.0;
    uint64_t seed = 0;
    uint64_t config_hash = 0;

    static RunConfig from_config(const Config& c) {
        RunConfig r;
        r.preprocess.gain_a = c.get_double("preprocess.gain_a", r.preprocess.gain_a);
        r.preprocess.gain_b = c.get_double("preprocess.gain_b", r.preprocess.gain_b);
        r.preprocess.center_frequency_mhz =
            c.get_double("preprocess.center_frequency_mhz", r.preprocess.center_frequency_mhz);
        r.preprocess.low_cut_fraction =
            c.get_double("preprocess.low_cut_fraction", r.preprocess.low_cut_fraction);
        r.preprocess.local_average_window =
            c.get_int("preprocess.local_average_window", r.preprocess.local_average_window);
        r.preprocess.threshold_percentile =
            c.get_double("preprocess.threshold_percentile", r.preprocess.threshold_percentile);

        r.submap.length_m = c.get_double("submap.length_m", r.submap.length_m);
        r.submap.column_spacing_m =
            c.get_double("submap.column_spacing_m", r.submap.column_spacing_m);
        r.submap.rule.max_cumulative_yaw_rad =
            c.get_double("submap.max_cumulative_yaw_rad", r.submap.rule.max_cumulative_yaw_rad);

        r.salience.salience_threshold =
            c.get_double("salience.threshold", r.salience.salience_threshold);
        r.salience.correlation_gate_threshold =
            c.get_double("salience.gate_threshold", r.salience.correlation_gate_threshold);

        r.model = parse_model_kind(c.get_string("model.kind", "odometry-only"));

        r.gpr_x_sigma = c.get_double("graph.gpr_x_sigma", r.gpr_x_sigma);
        r.min_collinearity =
            c.get_double("pipeline.min_collinearity", r.min_collinearity);
        r.gpr_huber_delta = c.get_double("graph.gpr_huber_delta", r.gpr_huber_delta);
        r.max_closure_innovation_m = c.get_double("pipeline.max_closure_innovation_m",
                                                  r.max_closure_innovation_m);
        r.gpr_yaw_sigma = c.get_double("graph.gpr_yaw_sigma", r.gpr_yaw_sigma);
        r.gpr_lateral_sigma = c.get_double("graph.gpr_lateral_sigma", r.gpr_lateral_sigma);
        r.weak_sigma = c.get_double("graph.weak_sigma", r.weak_sigma);
        r.wheel_x_rel = c.get_double("graph.wheel_x_rel", r.wheel_x_rel);
        r.wheel_yaw_sigma = c.get_double("graph.wheel_yaw_sigma", r.wheel_yaw_sigma);
        r.wheel_lateral_sigma = c.get_double("graph.wheel_lateral_sigma", r.wheel_lateral_sigma);
        r.imu_noise.accel_noise_density =
            c.get_double("graph.imu_accel_noise", r.imu_noise.accel_noise_density);
        r.imu_noise.gyro_noise_density =
            c.get_double("graph.imu_gyro_noise", r.imu_noise.gyro_noise_density);
        r.imu_noise.accel_bias_sigma =
            c.get_double("graph.imu_accel_bias_sigma", r.imu_noise.accel_bias_sigma);
        r.imu_noise.gyro_bias_sigma =
            c.get_double("graph.imu_gyro_bias_sigma", r.imu_noise.gyro_bias_sigma);
        r.prior_pose_sigma = c.get_double("graph.prior_pose_sigma", r.prior_pose_sigma);
        r.prior_vel_sigma = c.get_double("graph.prior_vel_sigma", r.prior_vel_sigma);
        r.prior_bias_sigma = c.get_double("graph.prior_bias_sigma", r.prior_bias_sigma);

        r.solver.max_iterations = c.get_int("solver.max_iterations", r.solver.max_iterations);
        const std::string mode = c.get_string("solver.mode", "batch");
        if (mode == "window") {
            r.solver.mode = IncrementalMode::sliding_window;
            r.solver.window_size = c.get_int("solver.window_size", r.solver.window_size);
        } else if (mode != "batch") {
            throw DataError("config solver.mode: expected batch|window");
        }

        r.candidate_cap = c.get_int("pipeline.candidate_cap", r.candidate_cap);
        r.max_stream_gap_s = c.get_double("pipeline.max_stream_gap_s", r.max_stream_gap_s);
        r.seed = c.get_u64("seed", r.seed);
        r.config_hash = c.hash();
        return r;
    }
};

struct TrajectoryEstimate {
    std::vector<TimedPose> poses;
    std::string model;
    uint64_t config_hash = 0;
    uint64_t dataset_hash = 0;
};

struct LoopClosureEvent {
    double t = 0;
    double t_i = 0;              // anchor time of the earlier state
    int state_i = -1, state_j = -1;
    int submap_i = -1, submap_j = -1;
    double translation_m = 0;    // raw registration output between windows
    Pose3 rel;                   // lifted relative pose s_i^-1 s_j
    double confidence = 0;
    bool flipped = false;
};

struct StepRecord {
    double t = 0;
    int state_count = 0;
    double update_ms = 0;
    double newest_error_m = -1;  // vs truth; -1 when no truth stream
    double rmse_so_far_m = -1;   // position RMSE over all states vs truth
    double rmse_before_m = -1;   // same, before this update's optimization
    int closures_added = 0;
};

struct PipelineResult {
    TrajectoryEstimate estimate;
    std::vector<std::pair<int, int>> gated_pairs;  // salient-submap indices
    std::vector<LoopClosureEvent> closures;
    std::vector<StepRecord> steps;
    double final_cost = 0;
    int num_submaps = 0;
    int num_salient = 0;
};

inline Pose3 interpolate_pose(const std::vector<TimedPose>& track, double t) {
    if (track.empty()) throw DataError("interpolate_pose: empty track");
    auto cmp = [](const TimedPose& p, double t) { return p.t < t; };
    const auto hi = std::lower_bound(track.begin(), track.end(), t, cmp);
    if (hi == track.begin()) return track.front().pose;
    if (hi == track.end()) return track.back().pose;
    const auto lo = hi - 1;
    const double w = (t - lo->t) / (hi->t - lo->t);
    return boxplus(lo->pose, (w * boxminus(hi->pose, lo->pose)).eval());
}

namespace detail {

// cumulative trapezoid of gyro z: odometric heading lookup, used for the
// forward-vs-backward pass decision so gating stays model-independent
struct YawTrack {
    std::vector<double> ts, yaw;

    explicit YawTrack(const std::vector<ImuSample>& imu) {
        double y = 0;
        for (size_t i = 0; i < imu.size(); ++i) {
            if (i > 0)
                y += 0.5 * (imu[i - 1].gyro.z() + imu[i].gyro.z()) *
                     (imu[i].timestamp - imu[i - 1].timestamp);
            ts.push_back(imu[i].timestamp);
            yaw.push_back(y);
        }
    }

    double at(double t) const {
        const auto hi = std::lower_bound(ts.begin(), ts.end(), t);
        if (hi == ts.begin()) return yaw.front();
        if (hi == ts.end()) return yaw.back();
        const size_t j = hi - ts.begin();
        const double w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
        return (1 - w) * yaw[j - 1] + w * yaw[j];
    }
};

inline double gyro_z_at(const std::vector<ImuSample>& imu, double t) {
    auto cmp = [](const ImuSample& s, double t) { return s.timestamp < t; };
    const auto hi = std::lower_bound(imu.begin(), imu.end(), t, cmp);
    if (hi == imu.begin()) return imu.front().gyro.z();
    return (hi - 1)->gyro.z();
}

// samples covering [t0, t1]: the sample active at t0 (clamped) plus all
// samples strictly inside the interval
inline std::vector<ImuSample> imu_slice(const std::vector<ImuSample>& imu,
                                        double t0, double t1) {
    std::vector<ImuSample> out;
    auto cmp = [](const ImuSample& s, double t) { return s.timestamp < t; };
    auto it = std::lower_bound(imu.begin(), imu.end(), t0, cmp);
    if (it == imu.end() || it->timestamp > t0) {
        if (it == imu.begin()) throw DataError("imu stream does not cover interval start");
        ImuSample head = *(it - 1);
        head.timestamp = t0;
        out.push_back(head);
    }
    for (; it != imu.end() && it->timestamp < t1; ++it) {
        if (it->timestamp == t0 && !out.empty()) continue;
        out.push_back(*it);
    }
    if (out.empty()) throw DataError("imu stream has no samples in interval");
    return out;
}

inline Submap flip_columns(const Submap& s) {
    Submap out = s;
    out.image.image = s.image.image.rowwise().reverse();
    return out;
}

// per-submap mean-trace removal + amplitude threshold, applied identically
// in the pipeline and in training
inline void finish_submap_image(Submap& s, const PreprocessConfig& cfg) {
    MeanTraceState mt;
    s.image = remove_mean_trace(s.image, mt);
    s.image = threshold(s.image, cfg.threshold_percentile);
}

} // namespace detail

inline PipelineResult run_pipeline(const RawDataset& data, const RunConfig& cfg,
                                   const ModelFile* model = nullptr) {
    using clock = std::chrono::steady_clock;

    if (cfg.model == ModelKind::learned && !model)
        throw DataError("learned model selected but no model file provided");
    if (cfg.model == ModelKind::oracle && data.truth.empty())
        throw DataError("oracle model requires a truth stream");
    if (data.gpr.empty()) throw DataError("dataset has no GPR records");
    if (data.imu.size() < 2) throw DataError("dataset has no usable IMU stream");

    for (size_t i = 1; i < data.imu.size(); ++i) {
        const double gap = data.imu[i].timestamp - data.imu[i - 1].timestamp;
        if (gap > cfg.max_stream_gap_s)
            throw DataError("imu stream gap of " + std::to_string(gap) + " s at t=" +
                            std::to_string(data.imu[i - 1].timestamp));
    }
    for (size_t i = 1; i < data.wheel.size(); ++i) {
        const double gap = data.wheel[i].t - data.wheel[i - 1].t;
        if (gap > cfg.max_stream_gap_s)
            throw DataError("wheel stream gap of " + std::to_string(gap) + " s at t=" +
                            std::to_string(data.wheel[i - 1].t));
    }

    PipelineResult result;
    result.estimate.model = to_string(cfg.model);
    result.estimate.config_hash = cfg.config_hash;

    const detail::YawTrack yaw_track(data.imu);
    const FilterBank gate_bank = FilterBank::gating();
    const double submap_len = cfg.submap.length_m;

    // candidate windows for registration: every finalized submap plus, when
    // the previous segment is contiguous, a half-shifted bridge window. The
    // bridge keeps some candidate within T_max of any revisit regardless of
    // how the revisit's submap boundaries happen to be phased. delta_m is
    // the window's known odometric offset from its anchor state.
    struct LibEntry {
        Submap submap;
        int anchor_state = -1;
        double anchor_t = 0;
        double anchor_yaw = 0;
        double delta_m = 0;
        std::vector<Eigen::MatrixXd> feats, feats_flipped;
        std::vector<Eigen::MatrixXd> model_feats, model_feats_flipped;
    };
    std::vector<LibEntry> library;

    FactorGraph graph;
    std::vector<double> state_times;
    std::vector<double> state_wheel;

    auto add_state = [&](double t, double wheel_d) -> int {
        int k;
        if (graph.num_variables() == 0) {
            State prior;
            if (!data.truth.empty()) {
                prior.pose = interpolate_pose(data.truth, t);
                const double h = 0.05;  // forward-difference start velocity
                prior.velocity = (interpolate_pose(data.truth, t + h).translation() -
                                  prior.pose.translation()) / h;
            }
            k = graph.add_variable(prior);
            Vec15 sig;
            sig.head<6>().setConstant(cfg.prior_pose_sigma);
            sig.segment<3>(6).setConstant(cfg.prior_vel_sigma);
            sig.tail<6>().setConstant(cfg.prior_bias_sigma);
            graph.add_factor(std::make_unique<PriorFactor>(
                k, prior, NoiseModel::from_sigmas(sig)));
        } else {
            const int prev = graph.num_variables() - 1;
            const double t0 = state_times[prev];
            const double dd = wheel_d - state_wheel[prev];
            const double dyaw = yaw_track.at(t) - yaw_track.at(t0);
            const Pose3 rel = make_pose_xyz_yaw(dd, 0, 0, dyaw);

            const State ps = graph.state(prev);  // add_variable reallocates
            State init = ps;
            init.pose = ps.pose * rel;
            const double dt = std::max(t - t0, 1e-9);
            init.velocity = init.pose.rotation().matrix() * Vec3(dd / dt, 0, 0);
            k = graph.add_variable(init);

            // the cart cannot slip sideways or leave the ground plane, so
            // lateral/vertical translation gets a tight sigma too
            Vec6 sig;
            sig << cfg.weak_sigma, cfg.weak_sigma, cfg.wheel_yaw_sigma,
                std::max(cfg.wheel_x_rel * std::abs(dd), cfg.wheel_x_min),
                cfg.wheel_lateral_sigma, cfg.wheel_lateral_sigma;
            graph.add_factor(std::make_unique<RelativePoseFactor>(
                FactorKind::wheel, prev, k, rel.inverse(), NoiseModel::from_sigmas(sig)));

            PreintegratedImu pim(ps.bias, cfg.imu_noise);
            pim.integrate_samples(detail::imu_slice(data.imu, t0, t), t);
            graph.add_factor(std::make_unique<ImuFactor>(prev, k, pim, gravity_world()));
        }
        state_times.push_back(t);
        state_wheel.push_back(wheel_d);
        return k;
    };

    int closures_since_update = 0;
    std::set<std::pair<int, int>> closed_state_pairs;

    auto attempt_closures = [&](int jidx) {
        LibEntry& sj = library[jidx];
        int seen = 0;
        for (int i = jidx - 1; i >= 0 && seen < cfg.candidate_cap; --i, ++seen) {
            LibEntry& si = library[i];
            if (sj.anchor_state - si.anchor_state < 2) continue;  // sequential pair

            // the 1D registration model only holds for near-collinear
            // passes; skip perpendicular-ish revisits (corner windows can
            // still correlate because they image the same ground)
            const double cos_dyaw = std::cos(sj.anchor_yaw - si.anchor_yaw);
            if (std::abs(cos_dyaw) < cfg.min_collinearity) continue;
            const bool flipped = cos_dyaw < 0.0;
            if (flipped && sj.feats_flipped.empty())
                sj.feats_flipped = feature_maps(detail::flip_columns(sj.submap), gate_bank);
            const auto& fj = flipped ? sj.feats_flipped : sj.feats;

            double stat = 0;
            if (!gate(si.feats, fj, cfg.registration,
                      cfg.salience.correlation_gate_threshold, &stat))
                continue;
            result.gated_pairs.emplace_back(i, jidx);
            if (cfg.model == ModelKind::odometry_only) continue;
            // several window pairs can relate the same two states; keep the
            // first accepted one
            if (closed_state_pairs.count({si.anchor_state, sj.anchor_state})) continue;

            Pose3 rel;
            double tr = 0, conf = stat;
            if (cfg.model == ModelKind::oracle) {
                const Pose3 pi = interpolate_pose(data.truth, si.anchor_t);
                const Pose3 pj = interpolate_pose(data.truth, sj.anchor_t);
                rel = pi.inverse() * pj;
                tr = rel.translation().x();
            } else {
                if (cfg.model == ModelKind::engineered) {
                    const Submap img_j =
                        flipped ? detail::flip_columns(sj.submap) : sj.submap;
                    const RegistrationResult r =
                        engineered_register(si.submap, img_j, cfg.registration, 0.0);
                    if (!r.accepted) continue;
                    tr = r.translation_m;
                    conf = r.confidence;
                } else {  // learned
                    if (si.model_feats.empty())
                        si.model_feats = feature_maps(si.submap, model->bank);
                    if (sj.model_feats.empty())
                        sj.model_feats = feature_maps(sj.submap, model->bank);
                    if (flipped && sj.model_feats_flipped.empty())
                        sj.model_feats_flipped =
                            feature_maps(detail::flip_columns(sj.submap), model->bank);
                    const auto& mfj = flipped ? sj.model_feats_flipped : sj.model_feats;
                    // pair acceptance already decided by the shared gate above
                    const RegistrationResult r = learned_register(
                        si.model_feats, mfj, model->head, cfg.registration, -1e9);
                    if (!r.accepted) continue;
                    tr = r.translation_m;
                }
                // lift the 1D along-track measurement between window starts
                // to the anchor states via the known window offsets; a
                // backward revisit sees the image column-flipped, so its
                // anchor sits one window length past the registered offset,
                // facing the other way
                const double x = flipped ? tr + submap_len + si.delta_m + sj.delta_m
                                         : tr + si.delta_m - sj.delta_m;
                rel = flipped ? Pose3(Rot3::exp(Vec3(0, 0, M_PI)), Vec3(x, 0, 0))
                              : translate_x(x);
            }

            // innovation gate: a closure that disagrees with the current
            // estimate by far more than plausible drift is a false match
            const Pose3 est_rel = graph.state(si.anchor_state).pose.inverse() *
                                  graph.state(sj.anchor_state).pose;
            if ((est_rel.translation() - rel.translation()).norm() >
                cfg.max_closure_innovation_m)
                continue;

            Vec6 sig;
            sig << cfg.weak_sigma, cfg.weak_sigma, cfg.gpr_yaw_sigma,
                cfg.gpr_x_sigma, cfg.gpr_lateral_sigma, cfg.gpr_lateral_sigma;
            auto fac = std::make_unique<RelativePoseFactor>(
                FactorKind::gpr, si.anchor_state, sj.anchor_state, rel.inverse(),
                NoiseModel::from_sigmas(sig));
            // closures are the one factor type that can be grossly wrong
            // (mis-registration), so they get a robust loss
            fac->set_robust(cfg.gpr_huber_delta);
            graph.add_factor(std::move(fac));

            closed_state_pairs.insert({si.anchor_state, sj.anchor_state});

            LoopClosureEvent ev;
            ev.t = sj.anchor_t;
            ev.t_i = si.anchor_t;
            ev.rel = rel;
            ev.state_i = si.anchor_state;
            ev.state_j = sj.anchor_state;
            ev.submap_i = i;
            ev.submap_j = jidx;
            ev.translation_m = tr;
            ev.confidence = conf;
            ev.flipped = flipped;
            result.closures.push_back(ev);
            ++closures_since_update;
        }
    };

    // aligned (Umeyama, no scale) position RMSE of the current states;
    // alignment keeps the metric about internal distortion, not the free
    // global transform
    auto state_rmse = [&]() {
        const int n = graph.num_variables();
        Eigen::Matrix3Xd x(3, n), y(3, n);
        for (int i = 0; i < n; ++i) {
            x.col(i) = graph.state(i).pose.translation();
            y.col(i) = interpolate_pose(data.truth, state_times[i]).translation();
        }
        if (n < 3) return (x - y).colwise().norm().sum() / std::max(1, n);
        const Eigen::Matrix4d trafo = Eigen::umeyama(x, y, false);
        const Mat3 rot = trafo.topLeftCorner<3, 3>();
        const Vec3 tr = trafo.topRightCorner<3, 1>();
        double sq = 0;
        for (int i = 0; i < n; ++i) sq += (rot * x.col(i) + tr - y.col(i)).squaredNorm();
        return std::sqrt(sq / n);
    };

    auto run_update = [&](double t) {
        const double rmse_before = data.truth.empty() ? -1 : state_rmse();
        const auto t0 = clock::now();
        optimize(graph, graph.mutable_estimate(), cfg.solver);
        const auto t1 = clock::now();

        StepRecord s;
        s.t = t;
        s.state_count = graph.num_variables();
        s.update_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        s.closures_added = closures_since_update;
        closures_since_update = 0;
        if (!data.truth.empty()) {
            const Pose3 tp = interpolate_pose(data.truth, state_times.back());
            s.newest_error_m =
                (graph.state(graph.num_variables() - 1).pose.translation() -
                 tp.translation()).norm();
            s.rmse_so_far_m = state_rmse();
            s.rmse_before_m = rmse_before;
        }
        result.steps.push_back(s);
    };

    SubmapBuilder builder(cfg.submap);
    std::deque<Trace> avg_window;
    const size_t avg_n = std::max(1, cfg.preprocess.local_average_window);
    bool segment_open = false;
    int segment_anchor = -1;
    double segment_anchor_t = 0;

    // rolling buffer of preprocessed traces for cutting bridge windows that
    // straddle two consecutive submap boundaries
    std::vector<Trace> buf_traces;
    std::vector<double> buf_dist, buf_time;
    int prev_fin_anchor = -1;
    double prev_fin_anchor_t = 0;
    double prev_fin_end = -1e18;

    auto add_window = [&](Submap&& w, int anchor, double anchor_t, double delta) {
        if (!is_salient(w, cfg.salience)) return false;
        LibEntry e;
        e.anchor_state = anchor;
        e.anchor_t = anchor_t;
        e.anchor_yaw = yaw_track.at(anchor_t);
        e.delta_m = delta;
        e.feats = feature_maps(w, gate_bank);
        e.submap = std::move(w);
        library.push_back(std::move(e));
        attempt_closures(static_cast<int>(library.size()) - 1);
        return true;
    };

    for (size_t gi = 0; gi < data.gpr.size(); ++gi) {
        const auto& rec = data.gpr[gi];

        avg_window.push_back(rec.trace);
        if (avg_window.size() > avg_n) avg_window.pop_front();
        Trace proc = local_average({avg_window.begin(), avg_window.end()});
        proc = dewow(proc, cfg.preprocess);
        proc = sec_gain(proc, cfg.preprocess.gain_a, cfg.preprocess.gain_b);
        proc.position_m = rec.wheel_distance_m;

        buf_traces.push_back(proc);
        buf_dist.push_back(rec.wheel_distance_m);
        buf_time.push_back(rec.t);
        while (buf_dist.back() - buf_dist.front() > 2 * submap_len + 1.0) {
            buf_traces.erase(buf_traces.begin());
            buf_dist.erase(buf_dist.begin());
            buf_time.erase(buf_time.begin());
        }

        bool new_state = false;
        if (!segment_open) {
            segment_anchor = add_state(rec.t, rec.wheel_distance_m);
            segment_anchor_t = rec.t;
            segment_open = true;
            new_state = true;
        }

        const double yaw_rate = detail::gyro_z_at(data.imu, rec.t);
        const double dt_s = gi > 0 ? rec.t - data.gpr[gi - 1].t : 0.0;
        auto status = builder.add(proc, rec.wheel_distance_m, yaw_rate, dt_s);

        if (auto* fin = std::get_if<SubmapBuilder::Finalized>(&status)) {
            segment_open = false;
            ++result.num_submaps;
            Submap sub = std::move(fin->submap);
            const double d0 = sub.start_distance_m;
            const double dend = sub.end_distance_m;
            detail::finish_submap_image(sub, cfg.preprocess);
            sub.anchor_state = segment_anchor;

            const int anchor = segment_anchor;
            const double anchor_t = segment_anchor_t;
            const double delta = d0 - state_wheel[anchor];
            if (is_salient(sub, cfg.salience)) ++result.num_salient;
            add_window(std::move(sub), anchor, anchor_t, delta);

            // when the previous segment was contiguous, also cut a window
            // shifted back half a length, anchored to that segment's state
            if (prev_fin_anchor >= 0 &&
                d0 - prev_fin_end < 3 * cfg.submap.column_spacing_m) {
                const double b0 = d0 - submap_len / 2;
                auto t_at = [&](double d) {
                    const auto hi =
                        std::lower_bound(buf_dist.begin(), buf_dist.end(), d);
                    if (hi == buf_dist.begin()) return buf_time.front();
                    if (hi == buf_dist.end()) return buf_time.back();
                    const size_t j = hi - buf_dist.begin();
                    const double w = (buf_dist[j] > buf_dist[j - 1])
                        ? (d - buf_dist[j - 1]) / (buf_dist[j] - buf_dist[j - 1])
                        : 0.0;
                    return (1.0 - w) * buf_time[j - 1] + w * buf_time[j];
                };
                const double turn = std::abs(
                    yaw_track.at(t_at(b0 + submap_len)) - yaw_track.at(t_at(b0)));
                if (b0 >= buf_dist.front() &&
                    turn < cfg.submap.rule.max_cumulative_yaw_rad) {
                    Submap bw = resample_uniform(buf_traces, buf_dist, b0,
                                                 submap_len,
                                                 cfg.submap.column_spacing_m);
                    detail::finish_submap_image(bw, cfg.preprocess);
                    bw.anchor_state = prev_fin_anchor;
                    add_window(std::move(bw), prev_fin_anchor, prev_fin_anchor_t,
                               b0 - state_wheel[prev_fin_anchor]);
                }
            }
            prev_fin_anchor = anchor;
            prev_fin_anchor_t = anchor_t;
            prev_fin_end = dend;
        } else if (std::holds_alternative<SubmapBuilder::Rejected>(status)) {
            segment_open = false;
        }

        if (new_state && !cfg.batch_only) run_update(rec.t);
    }

    // pick up closures added after the last state creation
    if (!state_times.empty() && (cfg.batch_only || closures_since_update > 0))
        run_update(state_times.back());

    result.final_cost = graph.total_cost();
    for (int i = 0; i < graph.num_variables(); ++i)
        result.estimate.poses.push_back({state_times[i], graph.state(i).pose});
    return result;
}

// ATE RMSE after rigid (rotation + translation, no scale) alignment of
// nearest-neighbor matched positions. Association window: 10 ms.
inline double ate_rmse(const std::vector<TimedPose>& est,
                       const std::vector<TimedPose>& truth,
                       std::vector<TimedScalar>* per_pose_error = nullptr) {
    std::vector<std::pair<Vec3, Vec3>> matches;  // est, truth
    std::vector<double> match_times;
    auto cmp = [](const TimedPose& p, double t) { return p.t < t; };
    for (const auto& e : est) {
        const auto hi = std::lower_bound(truth.begin(), truth.end(), e.t, cmp);
        const TimedPose* best = nullptr;
        if (hi != truth.end()) best = &*hi;
        if (hi != truth.begin() &&
            (!best || std::abs((hi - 1)->t - e.t) < std::abs(best->t - e.t)))
            best = &*(hi - 1);
        if (best && std::abs(best->t - e.t) <= 0.01) {
            matches.push_back({e.pose.translation(), best->pose.translation()});
            match_times.push_back(e.t);
        }
    }
    if (matches.size() < 3)
        throw DataError("ate_rmse: fewer than 3 matched timestamp pairs");

    Eigen::Matrix3Xd x(3, matches.size()), y(3, matches.size());
    for (size_t i = 0; i < matches.size(); ++i) {
        x.col(i) = matches[i].first;
        y.col(i) = matches[i].second;
    }
    const Eigen::Matrix4d trafo = Eigen::umeyama(x, y, false);
    const Mat3 rot = trafo.topLeftCorner<3, 3>();
    const Vec3 tr = trafo.topRightCorner<3, 1>();

    double sum = 0;
    if (per_pose_error) per_pose_error->clear();
    for (size_t i = 0; i < matches.size(); ++i) {
        const double err = (rot * x.col(i) + tr - y.col(i)).norm();
        sum += err * err;
        if (per_pose_error) per_pose_error->push_back({match_times[i], err});
    }
    return std::sqrt(sum / matches.size());
}

} // namespace gprloc::app
