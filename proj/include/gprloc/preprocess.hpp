#pragma once

// Raw trace -> cleaned radargram pipeline: local averaging, dewow (DC
// subtraction + zero-phase low-cut), SEC gain, running mean-trace removal
// and percentile thresholding.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gprloc {

struct Trace {
    Eigen::VectorXd samples;   // amplitude, dimensionless
    double dt_ns = 0;          // uniform sample step
    double position_m = 0;     // cumulative wheel distance tag

    int size() const { return static_cast<int>(samples.size()); }
};

struct Radargram {
    // rows = time samples, cols = along-track positions
    Eigen::MatrixXd image;
    double dt_ns = 0;
    double column_spacing_m = 0;
    std::vector<std::string> filters_applied;

    int rows() const { return static_cast<int>(image.rows()); }
    int cols() const { return static_cast<int>(image.cols()); }
};

struct PreprocessConfig {
    double gain_a = 0.05;           // exponential gain constant, 1/ns
    double gain_b = 1.0;            // power gain constant
    double center_frequency_mhz = 500.0;
    double low_cut_fraction = 0.1;  // corner = center_frequency * fraction
    int local_average_window = 3;   // traces
    double threshold_percentile = 50.0;

    double low_cut_corner_ghz() const {
        return center_frequency_mhz * 1e-3 * low_cut_fraction;  // cycles per ns
    }
};

inline Trace local_average(const std::vector<Trace>& window) {
    if (window.empty()) throw std::invalid_argument("local_average: empty window");
    Trace out;
    out.dt_ns = window.front().dt_ns;
    out.samples = Eigen::VectorXd::Zero(window.front().size());
    double pos = 0;
    for (const auto& t : window) {
        if (t.size() != out.samples.size())
            throw std::invalid_argument("local_average: trace length mismatch");
        out.samples += t.samples;
        pos += t.position_m;
    }
    out.samples /= double(window.size());
    out.position_m = pos / double(window.size());
    return out;
}

// DC subtraction plus a zero-phase (forward-backward) first-order high-pass
// at corner = center_frequency * low_cut_fraction.
inline Trace dewow(const Trace& t, const PreprocessConfig& cfg) {
    if (t.dt_ns <= 0) throw std::invalid_argument("dewow: dt unknown");
    Trace out = t;
    const int n = t.size();
    if (n == 0) return out;

    Eigen::VectorXd x = t.samples.array() - t.samples.mean();

    const double fc = cfg.low_cut_corner_ghz();  // cycles/ns
    if (fc > 0 && n > 1) {
        // bilinear-transform first-order high-pass; state starts at the
        // constant-input steady state so edges carry no step transient
        const double k_warp = std::tan(M_PI * fc * t.dt_ns);
        const double b0 = 1.0 / (1.0 + k_warp);
        const double a1 = (1.0 - k_warp) / (1.0 + k_warp);
        auto highpass = [&](const Eigen::VectorXd& in) {
            Eigen::VectorXd y(n);
            y[0] = 0.0;
            for (int k = 1; k < n; ++k)
                y[k] = a1 * y[k - 1] + b0 * (in[k] - in[k - 1]);
            return y;
        };
        Eigen::VectorXd fwd = highpass(x);
        Eigen::VectorXd rev = fwd.reverse();
        x = highpass(rev).reverse();
    }

    // the IIR leaves a small DC remnant; the paper's dewow includes an
    // explicit DC subtraction, so finish with one
    x.array() -= x.mean();
    out.samples = x;
    return out;
}

// SEC gain G(t) = exp(a*t) * t^b, t in ns from sample 0. 0^0 := 1 so
// (a,b) = (0,0) is the identity; G is clamped at 1e6.
inline Trace sec_gain(const Trace& t, double a, double b) {
    Trace out = t;
    for (int i = 0; i < t.size(); ++i) {
        const double time_ns = i * t.dt_ns;
        double g;
        if (b == 0.0) {
            g = std::exp(a * time_ns);
        } else {
            g = (time_ns == 0.0) ? 0.0 : std::exp(a * time_ns) * std::pow(time_ns, b);
        }
        out.samples[i] = t.samples[i] * std::min(g, 1e6);
    }
    return out;
}

inline Radargram stack_traces(const std::vector<Trace>& traces, double column_spacing_m) {
    if (traces.empty()) throw std::invalid_argument("stack_traces: no traces");
    Radargram img;
    img.dt_ns = traces.front().dt_ns;
    img.column_spacing_m = column_spacing_m;
    img.image.resize(traces.front().size(), static_cast<int>(traces.size()));
    for (size_t c = 0; c < traces.size(); ++c) img.image.col(c) = traces[c].samples;
    return img;
}

// Running mean trace over all previously processed submaps. Single-writer:
// callers serialize access.
class MeanTraceState {
public:
    bool empty() const { return count_ == 0; }
    int count() const { return count_; }
    const Eigen::VectorXd& mean() const { return mean_; }

    void fold_in(const Eigen::MatrixXd& columns) {
        if (count_ == 0) mean_ = Eigen::VectorXd::Zero(columns.rows());
        if (mean_.size() != columns.rows())
            throw std::invalid_argument("MeanTraceState: trace length mismatch");
        for (int c = 0; c < columns.cols(); ++c) {
            ++count_;
            mean_ += (columns.col(c) - mean_) / double(count_);
        }
    }

private:
    int count_ = 0;
    Eigen::VectorXd mean_;
};

// Subtracts the running mean trace from every column, then folds this
// image's columns into the state (subtract old mean first, fold in after).
// Cold start: the first submap subtracts its own column mean.
inline Radargram remove_mean_trace(const Radargram& img, MeanTraceState& state) {
    if (!state.empty() && state.mean().size() != img.rows())
        throw std::invalid_argument("remove_mean_trace: trace length mismatch");
    Radargram out = img;
    const Eigen::VectorXd mean =
        state.empty() ? Eigen::VectorXd(img.image.rowwise().mean()) : state.mean();
    out.image.colwise() -= mean;
    state.fold_in(img.image);
    out.filters_applied.push_back("mean_trace_removal");
    return out;
}

// Zeroes values whose magnitude falls below the p-th percentile of |values|.
inline Radargram threshold(const Radargram& img, double percentile) {
    if (percentile <= 0 || percentile >= 100)
        throw std::invalid_argument("threshold: percentile must be in (0,100)");
    Radargram out = img;
    std::vector<double> mags(img.image.size());
    Eigen::Map<Eigen::ArrayXd>(mags.data(), mags.size()) =
        Eigen::Map<const Eigen::ArrayXd>(img.image.data(), img.image.size()).abs();
    const size_t k = static_cast<size_t>(percentile / 100.0 * mags.size());
    if (k == 0) return out;
    std::nth_element(mags.begin(), mags.begin() + (k - 1), mags.end());
    const double cut = mags[k - 1];
    out.image = (img.image.array().abs() <= cut).select(0.0, img.image);
    out.filters_applied.push_back("threshold");
    return out;
}

} // namespace gprloc
