#pragma once

// Model training: cuts overlapping submap windows from each dataset, gates
// pairs, extracts correlation features, fits the linear head, and reports
// validation losses next to the engineered and zeroth-order baselines.

#include <gprloc/app/pipeline.hpp>

#include <numeric>
#include <unordered_map>

namespace gprloc::app {

struct TrainOptions {
    double stride_m = 0.25;           // window start spacing
    int max_pairs_per_dataset = 800;  // seeded subsample cap
    double split = 0.8;               // train fraction
    double huber_delta = 0.1;         // m
    int filter_count = 16;
    uint64_t bank_seed = 0;
    uint64_t seed = 0;
};

struct TrainReport {
    struct Row {
        double huber_cm = 0;     // mean Huber loss of the cm residual
        double mean_abs_cm = 0;  // mean |error| in cm
        int count = 0;
    };
    Row learned, zeroth, engineered;              // combined validation
    std::vector<std::array<Row, 3>> per_dataset;  // [learned, zeroth, engineered]
    int train_count = 0, val_count = 0;
    double zeroth_constant_m = 0;

    std::string to_text() const {
        std::ostringstream os;
        os.precision(4);
        os << std::fixed;
        auto line = [&](const std::string& name, const Row& r) {
            os << "  " << name << ": huber_cm=" << r.huber_cm
               << " mean_abs_cm=" << r.mean_abs_cm << " n=" << r.count << "\n";
        };
        os << "validation (combined, " << val_count << " pairs, "
           << train_count << " train pairs):\n";
        line("learned   ", learned);
        line("zeroth    ", zeroth);
        line("engineered", engineered);
        for (size_t d = 0; d < per_dataset.size(); ++d) {
            os << "dataset " << d << ":\n";
            line("learned   ", per_dataset[d][0]);
            line("zeroth    ", per_dataset[d][1]);
            line("engineered", per_dataset[d][2]);
        }
        os << "zeroth constant: " << zeroth_constant_m << " m\n";
        return os.str();
    }
};

namespace detail {

// cumulative arclength of the truth track, queried at a timestamp
struct ArclengthTrack {
    std::vector<double> ts, s;

    explicit ArclengthTrack(const std::vector<TimedPose>& truth) {
        double acc = 0;
        for (size_t i = 0; i < truth.size(); ++i) {
            if (i > 0)
                acc += (truth[i].pose.translation() -
                        truth[i - 1].pose.translation()).norm();
            ts.push_back(truth[i].t);
            s.push_back(acc);
        }
    }

    double at(double t) const {
        const auto hi = std::lower_bound(ts.begin(), ts.end(), t);
        if (hi == ts.begin()) return s.front();
        if (hi == ts.end()) return s.back();
        const size_t j = hi - ts.begin();
        const double w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
        return (1 - w) * s[j - 1] + w * s[j];
    }
};

} // namespace detail

inline TrainReport train_command(const std::vector<RawDataset>& datasets,
                                 const RunConfig& cfg, const TrainOptions& opt,
                                 ModelFile* out_model = nullptr) {
    if (datasets.size() < 2)
        throw DataError("train_command: need at least 2 datasets");
    if (opt.split <= 0 || opt.split >= 1)
        throw DataError("train_command: split ratio must be in (0,1)");

    const FilterBank bank = FilterBank::standard(opt.filter_count, opt.bank_seed);
    const double len = cfg.submap.length_m;
    const double dx = cfg.submap.column_spacing_m;

    struct Window {
        Submap submap;
        double truth_u = 0;  // truth arclength at window start
    };
    struct Record {
        CorrFeat feats;
        double truth_shift_m = 0;
        int dataset = 0;
        int wi = 0, wj = 0;
    };
    std::vector<std::vector<Window>> windows(datasets.size());
    std::vector<Record> records;

    for (size_t d = 0; d < datasets.size(); ++d) {
        const RawDataset& data = datasets[d];
        if (data.truth.empty())
            throw DataError("train_command: dataset " + std::to_string(d) + " has no truth");
        if (data.gpr.size() < 4)
            throw DataError("train_command: dataset " + std::to_string(d) + " has no GPR data");
        const detail::ArclengthTrack arc(data.truth);

        // per-trace preprocessing, identical to the pipeline front end
        std::vector<Trace> traces;
        std::vector<double> dist, times;
        std::deque<Trace> avg;
        const size_t avg_n = std::max(1, cfg.preprocess.local_average_window);
        for (const auto& rec : data.gpr) {
            avg.push_back(rec.trace);
            if (avg.size() > avg_n) avg.pop_front();
            Trace p = local_average({avg.begin(), avg.end()});
            p = dewow(p, cfg.preprocess);
            p = sec_gain(p, cfg.preprocess.gain_a, cfg.preprocess.gain_b);
            traces.push_back(std::move(p));
            dist.push_back(rec.wheel_distance_m);
            times.push_back(rec.t);
        }

        auto time_at_distance = [&](double d0) {
            const auto hi = std::lower_bound(dist.begin(), dist.end(), d0);
            if (hi == dist.begin()) return times.front();
            if (hi == dist.end()) return times.back();
            const size_t j = hi - dist.begin();
            const double w = (dist[j] > dist[j - 1])
                ? (d0 - dist[j - 1]) / (dist[j] - dist[j - 1]) : 0.0;
            return (1 - w) * times[j - 1] + w * times[j];
        };

        // overlapping windows every stride_m; salient ones become candidates
        for (double d0 = dist.front(); d0 + len <= dist.back() + 1e-9;
             d0 += opt.stride_m) {
            Window w;
            w.submap = resample_uniform(traces, dist, d0, len, dx);
            detail::finish_submap_image(w.submap, cfg.preprocess);
            if (!is_salient(w.submap, cfg.salience)) continue;
            w.truth_u = arc.at(time_at_distance(d0));
            windows[d].push_back(std::move(w));
        }

        // ordered pairs within registration range, seeded subsample
        const double max_shift = cfg.registration.t_max_fraction * len * 0.95;
        std::vector<std::pair<int, int>> pairs;
        const int nw = static_cast<int>(windows[d].size());
        for (int i = 0; i < nw; ++i)
            for (int j = 0; j < nw; ++j) {
                if (i == j) continue;
                const double shift = windows[d][j].submap.start_distance_m -
                                     windows[d][i].submap.start_distance_m;
                if (std::abs(shift) <= max_shift) pairs.emplace_back(i, j);
            }
        std::mt19937_64 rng(opt.seed * 1000003ull + d);
        std::shuffle(pairs.begin(), pairs.end(), rng);
        if (static_cast<int>(pairs.size()) > opt.max_pairs_per_dataset)
            pairs.resize(opt.max_pairs_per_dataset);

        std::unordered_map<int, std::vector<Eigen::MatrixXd>> feat_cache;
        auto feats_of = [&](int i) -> const std::vector<Eigen::MatrixXd>& {
            auto it = feat_cache.find(i);
            if (it == feat_cache.end())
                it = feat_cache.emplace(i, feature_maps(windows[d][i].submap, bank)).first;
            return it->second;
        };

        for (const auto& [i, j] : pairs) {
            const auto& fi = feats_of(i);
            const auto& fj = feats_of(j);
            if (!gate(fi, fj, cfg.registration,
                      cfg.salience.correlation_gate_threshold, nullptr))
                continue;
            Record r;
            r.feats = corr_feat(fi, fj, cfg.registration);
            if (r.feats.unmasked_count() == 0) continue;
            r.truth_shift_m = windows[d][j].truth_u - windows[d][i].truth_u;
            r.dataset = static_cast<int>(d);
            r.wi = i;
            r.wj = j;
            records.push_back(std::move(r));
        }
    }

    // split
    std::mt19937_64 rng(opt.seed ^ 0x9E3779B97F4A7C15ull);
    std::shuffle(records.begin(), records.end(), rng);
    const int train_n = static_cast<int>(std::floor(opt.split * records.size()));
    if (train_n < 1 || train_n == static_cast<int>(records.size()))
        throw DataError("train_command: too few pairs");

    std::vector<TrainingPair> train_pairs;
    for (int i = 0; i < train_n; ++i)
        train_pairs.push_back({records[i].feats.argmax_shifts, records[i].feats.mask,
                               records[i].truth_shift_m});

    LinearHead head;
    try {
        head = train_linear_head(train_pairs, dx, opt.huber_delta);
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("train_command: too few pairs (") + e.what() + ")");
    }

    double zeroth = 0;
    for (int i = 0; i < train_n; ++i) zeroth += records[i].truth_shift_m;
    zeroth /= train_n;

    TrainReport report;
    report.train_count = train_n;
    report.val_count = static_cast<int>(records.size()) - train_n;
    report.zeroth_constant_m = zeroth;
    report.per_dataset.resize(datasets.size());

    auto accumulate = [&](TrainReport::Row& row, double err_m) {
        row.huber_cm += huber_loss(100.0 * err_m, 100.0 * opt.huber_delta);
        row.mean_abs_cm += 100.0 * std::abs(err_m);
        row.count += 1;
    };
    auto finish = [](TrainReport::Row& row) {
        if (row.count > 0) {
            row.huber_cm /= row.count;
            row.mean_abs_cm /= row.count;
        }
    };

    for (size_t i = train_n; i < records.size(); ++i) {
        const Record& r = records[i];
        const double learned_err = head.predict(r.feats) - r.truth_shift_m;
        const double zeroth_err = zeroth - r.truth_shift_m;
        const RegistrationResult er =
            engineered_register(windows[r.dataset][r.wi].submap,
                                windows[r.dataset][r.wj].submap,
                                cfg.registration, 0.0);
        const double engineered_err =
            (er.accepted ? er.translation_m : 0.0) - r.truth_shift_m;

        accumulate(report.learned, learned_err);
        accumulate(report.zeroth, zeroth_err);
        accumulate(report.engineered, engineered_err);
        accumulate(report.per_dataset[r.dataset][0], learned_err);
        accumulate(report.per_dataset[r.dataset][1], zeroth_err);
        accumulate(report.per_dataset[r.dataset][2], engineered_err);
    }
    finish(report.learned);
    finish(report.zeroth);
    finish(report.engineered);
    for (auto& rows : report.per_dataset)
        for (auto& row : rows) finish(row);

    if (out_model) {
        out_model->bank = bank;
        out_model->head = head;
        out_model->gate_threshold = cfg.salience.correlation_gate_threshold;
    }
    return report;
}

} // namespace gprloc::app
