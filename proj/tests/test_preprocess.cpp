#include <doctest.h>

#include <gprloc/preprocess.hpp>

#include <cmath>
#include <random>

using namespace gprloc;

namespace {

Trace make_trace(int n, double dt_ns, double pos = 0.0) {
    Trace t;
    t.samples = Eigen::VectorXd::Zero(n);
    t.dt_ns = dt_ns;
    t.position_m = pos;
    return t;
}

Trace constant_trace(int n, double value, double dt_ns = 0.5) {
    Trace t = make_trace(n, dt_ns);
    t.samples.setConstant(value);
    return t;
}

// zero-mean Ricker pulse centered at t0 (ns)
Eigen::VectorXd ricker(int n, double dt_ns, double f_ghz, double t0_ns) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
        const double u = M_PI * f_ghz * (i * dt_ns - t0_ns);
        v[i] = (1.0 - 2.0 * u * u) * std::exp(-u * u);
    }
    return v;
}

} // namespace

TEST_CASE("local_average basics") {
    const Trace a = constant_trace(32, 1.0);
    CHECK((local_average({a}).samples - a.samples).norm() == 0.0);

    Trace b = a;
    b.samples = -a.samples;
    CHECK(local_average({a, b}).samples.norm() == 0.0);

    const Trace c1 = constant_trace(32, 1.0), c2 = constant_trace(32, 2.0),
                c3 = constant_trace(32, 3.0);
    const Trace avg = local_average({c1, c2, c3});
    CHECK((avg.samples.array() - 2.0).abs().maxCoeff() < 1e-15);

    CHECK_THROWS(local_average({}));
}

TEST_CASE("dewow removes DC exactly") {
    PreprocessConfig cfg;
    const Trace c = constant_trace(256, 3.5);
    const Trace out = dewow(c, cfg);
    CHECK(std::abs(out.samples.mean()) < 1e-9 * 3.5);
    CHECK(out.samples.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("dewow preserves high-frequency content") {
    PreprocessConfig cfg;  // corner = 0.05 GHz
    const double fc = cfg.low_cut_corner_ghz();
    const int n = 4096;
    const double dt = 0.2;
    Trace t = make_trace(n, dt);
    const double f = 10.0 * fc;
    for (int i = 0; i < n; ++i) t.samples[i] = std::sin(2 * M_PI * f * i * dt);
    const Trace out = dewow(t, cfg);
    // compare energy on interior samples (edge transients excluded)
    const int m = n / 8;
    const double in_rms = std::sqrt(t.samples.segment(m, n - 2 * m).squaredNorm());
    const double out_rms = std::sqrt(out.samples.segment(m, n - 2 * m).squaredNorm());
    CHECK(out_rms > 0.95 * in_rms);
}

TEST_CASE("dewow attenuates below the corner by 20 dB or more") {
    PreprocessConfig cfg;
    const double fc = cfg.low_cut_corner_ghz();
    const int n = 8192;
    const double dt = 0.2;
    Trace t = make_trace(n, dt);
    const double f = fc / 10.0;
    for (int i = 0; i < n; ++i) t.samples[i] = std::sin(2 * M_PI * f * i * dt);
    const Trace out = dewow(t, cfg);
    const int m = n / 8;
    const double in_rms = std::sqrt(t.samples.segment(m, n - 2 * m).squaredNorm());
    const double out_rms = std::sqrt(out.samples.segment(m, n - 2 * m).squaredNorm());
    CHECK(out_rms < 0.1 * in_rms);  // -20 dB
}

TEST_CASE("dewow: pulse preserved, drift removed") {
    PreprocessConfig cfg;
    const int n = 1024;
    const double dt = 0.2;
    const double t0 = 40.0;
    const Eigen::VectorXd pulse = ricker(n, dt, 0.5, t0);

    Trace t = make_trace(n, dt);
    const double drift_amp = 2.0;
    for (int i = 0; i < n; ++i)
        t.samples[i] = pulse[i] + 1.5 + drift_amp * std::sin(2 * M_PI * 0.001 * i * dt);

    const Trace out = dewow(t, cfg);
    int peak_in, peak_out;
    pulse.maxCoeff(&peak_in);
    out.samples.maxCoeff(&peak_out);
    CHECK(std::abs(peak_in - peak_out) <= 1);

    // residual low-frequency content well below the drift amplitude
    Trace drift_only = make_trace(n, dt);
    for (int i = 0; i < n; ++i)
        drift_only.samples[i] = 1.5 + drift_amp * std::sin(2 * M_PI * 0.001 * i * dt);
    const Trace drift_out = dewow(drift_only, cfg);
    CHECK(drift_out.samples.cwiseAbs().maxCoeff() < 0.05 * drift_amp);
}

TEST_CASE("dewow is near-idempotent on band-limited input") {
    PreprocessConfig cfg;
    const int n = 1024;
    Trace t = make_trace(n, 0.2);
    t.samples = ricker(n, 0.2, 0.5, 50.0);
    const Trace once = dewow(t, cfg);
    const Trace twice = dewow(once, cfg);
    const double e1 = once.samples.squaredNorm();
    CHECK((twice.samples - once.samples).squaredNorm() < 0.02 * e1);
}

TEST_CASE("sec_gain identity, time ramp and exponential") {
    Trace t = constant_trace(16, 1.0, 1.0);  // dt = 1 ns

    const Trace id = sec_gain(t, 0.0, 0.0);
    CHECK((id.samples - t.samples).norm() == 0.0);

    const Trace ramp = sec_gain(t, 0.0, 1.0);
    for (int i = 0; i < 16; ++i) CHECK(ramp.samples[i] == doctest::Approx(double(i)));

    const Trace expo = sec_gain(t, std::log(2.0), 0.0);
    CHECK(expo.samples[3] == doctest::Approx(8.0));
}

TEST_CASE("sec_gain is linear and clamps overflow") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01(0, 1);
    Trace x = make_trace(64, 0.5), y = make_trace(64, 0.5);
    for (int i = 0; i < 64; ++i) { x.samples[i] = n01(rng); y.samples[i] = n01(rng); }

    Trace combo = x;
    combo.samples = 2.5 * x.samples + 0.5 * y.samples;
    const Trace g_combo = sec_gain(combo, 0.1, 1.5);
    const Eigen::VectorXd lhs =
        2.5 * sec_gain(x, 0.1, 1.5).samples + 0.5 * sec_gain(y, 0.1, 1.5).samples;
    CHECK((g_combo.samples - lhs).norm() < 1e-9);

    Trace big = constant_trace(64, 1.0, 10.0);
    const Trace clamped = sec_gain(big, 1.0, 0.0);
    CHECK(clamped.samples.maxCoeff() == doctest::Approx(1e6));
}

TEST_CASE("remove_mean_trace bootstrap and convergence") {
    MeanTraceState state;

    // first submap: subtracts its own column mean
    Radargram img;
    img.dt_ns = 0.5;
    img.column_spacing_m = 0.05;
    img.image.resize(8, 4);
    for (int c = 0; c < 4; ++c) img.image.col(c) = Eigen::VectorXd::Constant(8, 1.0 + c);
    const Radargram out1 = remove_mean_trace(img, state);
    const Eigen::VectorXd own_mean = img.image.rowwise().mean();
    for (int c = 0; c < 4; ++c)
        CHECK((out1.image.col(c) - (img.image.col(c) - own_mean)).norm() < 1e-12);
    CHECK(state.count() == 4);

    // image equal to the running mean maps to zero
    Radargram img2;
    img2.dt_ns = 0.5;
    img2.image.resize(8, 3);
    for (int c = 0; c < 3; ++c) img2.image.col(c) = state.mean();
    const Radargram out2 = remove_mean_trace(img2, state);
    CHECK(out2.image.norm() < 1e-12);

    // two identical banded submaps: second output has smaller row-mean energy
    MeanTraceState s2;
    Radargram banded;
    banded.dt_ns = 0.5;
    banded.image.resize(8, 5);
    Eigen::VectorXd band = Eigen::VectorXd::LinSpaced(8, -1.0, 1.0);
    for (int c = 0; c < 5; ++c)
        banded.image.col(c) = band + Eigen::VectorXd::Random(8) * 0.01;
    const Radargram b1 = remove_mean_trace(banded, s2);
    const Radargram b2 = remove_mean_trace(banded, s2);
    CHECK(b2.image.rowwise().mean().norm() < banded.image.rowwise().mean().norm());

    // length mismatch
    Radargram bad;
    bad.image.resize(9, 2);
    bad.image.setZero();
    CHECK_THROWS(remove_mean_trace(bad, s2));
}

TEST_CASE("threshold percentile behavior") {
    Radargram img;
    img.dt_ns = 0.5;
    img.image.resize(10, 10);
    // half zeros, half ones
    img.image.setZero();
    img.image.topRows(5).setOnes();
    const Radargram out = threshold(img, 50.0);
    CHECK(out.image.topRows(5).minCoeff() == 1.0);
    CHECK(out.image.bottomRows(5).maxCoeff() == 0.0);

    // sparsity >= p/100
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01(0, 1);
    Radargram noise;
    noise.dt_ns = 0.5;
    noise.image.resize(20, 20);
    for (int i = 0; i < noise.image.size(); ++i) noise.image.data()[i] = n01(rng);
    for (double p : {10.0, 50.0, 90.0}) {
        const Radargram th = threshold(noise, p);
        const int zeros = (th.image.array() == 0.0).count();
        CHECK(zeros >= int(p / 100.0 * th.image.size()));
    }

    CHECK_THROWS(threshold(img, 0.0));
    CHECK_THROWS(threshold(img, 100.0));
}
