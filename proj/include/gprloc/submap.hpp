#pragma once

// Accumulates position-tagged traces into fixed-length, uniformly spaced
// submap images keyed by wheel odometry, with rule-based validity and a
// pooled row-standard-deviation salience score.

#include <gprloc/preprocess.hpp>

#include <optional>
#include <variant>

namespace gprloc {

struct Submap {
    Radargram image;
    double start_distance_m = 0;
    double end_distance_m = 0;
    int anchor_state = -1;  // graph variable id at submap start
    double column_spacing_m = 0;
};

struct SubmapRule {
    double min_length_m = 1.8;
    double max_length_m = 2.5;
    double max_cumulative_yaw_rad = 0.2;     // over the segment
    double max_step_yaw_rate_rad_s = 0.5;
    int min_trace_count = 8;
};

struct SubmapConfig {
    double length_m = 2.0;
    double column_spacing_m = 0.05;
    SubmapRule rule;
};

struct SalienceConfig {
    int pooling_window_rows = 4;
    double salience_threshold = 0.05;
    double correlation_gate_threshold = 0.6;
};

// Uniform grid over [start, start + length]; each column is the linear
// blend of the two nearest traces in distance. Exact when inputs already
// lie on the grid.
inline Submap resample_uniform(const std::vector<Trace>& traces,
                               const std::vector<double>& distances,
                               double start_distance_m, double length_m,
                               double column_spacing_m) {
    if (traces.empty() || traces.size() != distances.size())
        throw std::invalid_argument("resample_uniform: bad inputs");

    Submap s;
    s.start_distance_m = start_distance_m;
    s.end_distance_m = start_distance_m + length_m;
    s.column_spacing_m = column_spacing_m;

    const int cols = static_cast<int>(std::round(length_m / column_spacing_m)) + 1;
    const int rows = traces.front().size();
    s.image.dt_ns = traces.front().dt_ns;
    s.image.column_spacing_m = column_spacing_m;
    s.image.image.resize(rows, cols);

    for (int c = 0; c < cols; ++c) {
        const double d = start_distance_m + c * column_spacing_m;
        const auto hi = std::lower_bound(distances.begin(), distances.end(), d);
        if (hi == distances.begin()) {
            s.image.image.col(c) = traces.front().samples;
        } else if (hi == distances.end()) {
            s.image.image.col(c) = traces.back().samples;
        } else {
            const size_t j = hi - distances.begin();
            const double d0 = distances[j - 1], d1 = distances[j];
            const double w = (d1 > d0) ? (d - d0) / (d1 - d0) : 0.0;
            s.image.image.col(c) =
                (1.0 - w) * traces[j - 1].samples + w * traces[j].samples;
        }
    }
    return s;
}

class SubmapBuilder {
public:
    struct Collecting {};
    struct Finalized { Submap submap; };
    struct Rejected { std::string reason; };
    using Status = std::variant<Collecting, Finalized, Rejected>;

    explicit SubmapBuilder(SubmapConfig cfg = SubmapConfig{}) : cfg_(cfg) {}

    const SubmapConfig& config() const { return cfg_; }

    // Feeds one preprocessed trace; finalizes once the segment spans the
    // configured length, or rejects per the rule. After Finalized/Rejected
    // the builder restarts from the next trace.
    Status add(const Trace& trace, double wheel_distance_m, double yaw_rate_rad_s,
               double dt_s = 0.0) {
        if (!traces_.empty() && wheel_distance_m < distances_.back())
            throw std::runtime_error("SubmapBuilder: wheel distance decreased");

        if (traces_.empty()) start_distance_ = wheel_distance_m;
        traces_.push_back(trace);
        distances_.push_back(wheel_distance_m);
        cumulative_yaw_ += std::abs(yaw_rate_rad_s) * dt_s;
        max_step_yaw_ = std::max(max_step_yaw_, std::abs(yaw_rate_rad_s));

        const double length = wheel_distance_m - start_distance_;
        if (length < cfg_.length_m) return Collecting{};

        if (cumulative_yaw_ > cfg_.rule.max_cumulative_yaw_rad) return restart("turning");
        if (max_step_yaw_ > cfg_.rule.max_step_yaw_rate_rad_s) return restart("yaw_rate");
        if (static_cast<int>(traces_.size()) < cfg_.rule.min_trace_count)
            return restart("too_few_traces");
        if (length > cfg_.rule.max_length_m) return restart("too_long");

        Submap s = resample();
        reset();
        return Finalized{std::move(s)};
    }

    void reset() {
        traces_.clear();
        distances_.clear();
        cumulative_yaw_ = 0;
        max_step_yaw_ = 0;
    }

private:
    Status restart(std::string reason) {
        reset();
        return Rejected{std::move(reason)};
    }

    Submap resample() const {
        return resample_uniform(traces_, distances_, start_distance_, cfg_.length_m,
                                cfg_.column_spacing_m);
    }

    SubmapConfig cfg_;
    std::vector<Trace> traces_;
    std::vector<double> distances_;
    double start_distance_ = 0;
    double cumulative_yaw_ = 0;
    double max_step_yaw_ = 0;
};

// Max of the average-pooled row-wise standard deviations. Invariant to a
// constant offset of the whole image.
inline double salience(const Submap& s, const SalienceConfig& cfg) {
    const auto& img = s.image.image;
    if (img.size() == 0) throw std::invalid_argument("salience: empty submap");
    const int rows = static_cast<int>(img.rows());
    Eigen::VectorXd row_std(rows);
    for (int r = 0; r < rows; ++r) {
        const double mean = img.row(r).mean();
        row_std[r] = std::sqrt((img.row(r).array() - mean).square().mean());
    }
    const int w = std::max(1, cfg.pooling_window_rows);
    double best = 0;
    for (int r = 0; r + w <= rows; r += 1) {
        best = std::max(best, row_std.segment(r, w).mean());
    }
    if (rows < w) best = row_std.mean();
    return best;
}

inline bool is_salient(const Submap& s, const SalienceConfig& cfg) {
    return salience(s, cfg) >= cfg.salience_threshold;
}

} // namespace gprloc
