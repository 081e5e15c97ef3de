#pragma once

// GPR sensor models producing relative along-track translations from submap
// pairs: the engineered Pearson-correlation registration and the learned
// linear head over correlation features from a fixed filter bank, plus the
// correlation gate and Huber/IRLS training.

#include <gprloc/submap.hpp>

#include <Eigen/Dense>
#include <random>

namespace gprloc {

struct CostCurve {
    int t_max = 0;  // shifts span [-t_max, t_max]
    Eigen::VectorXd values;  // size 2*t_max+1, NaN where overlap was too small

    double& at_shift(int t) { return values[t + t_max]; }
    double at_shift(int t) const { return values[t + t_max]; }
};

struct PearsonResult {
    double r = 0;
    bool degenerate = false;  // both regions constant
};

// Pearson product-moment correlation over two same-shape regions, each
// mean-subtracted over the shared region only.
inline PearsonResult pearson(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("pearson: shape mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson: need at least 2 pixels");
    const Eigen::ArrayXXd ac = a.array() - a.mean();
    const Eigen::ArrayXXd bc = b.array() - b.mean();
    const double na = std::sqrt((ac * ac).sum());
    const double nb = std::sqrt((bc * bc).sum());
    if (na == 0.0 || nb == 0.0) return {0.0, true};
    return {(ac * bc).sum() / (na * nb), false};
}

struct RegistrationConfig {
    // T_max and min-overlap as fractions of the submap column count
    double t_max_fraction = 0.4;
    double min_overlap_fraction = 0.25;

    int t_max(int cols) const {
        return std::max(1, static_cast<int>(std::floor(t_max_fraction * cols)));
    }
    int min_overlap(int cols) const {
        return std::max(2, static_cast<int>(std::floor(min_overlap_fraction * cols)));
    }
};

// Correlation of the shared region under integer column shift t: compares
// a(:, c) against b(:, c - t). Positive t means b's content (and start) sits
// t columns ahead of a's along the track.
inline PearsonResult shifted_pearson(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                     int t, int min_overlap) {
    const int cols = static_cast<int>(a.cols());
    const int a0 = std::max(0, t);
    const int b0 = std::max(0, -t);
    const int n = cols - std::abs(t);
    if (n < min_overlap) return {std::numeric_limits<double>::quiet_NaN(), true};
    return pearson(a.middleCols(a0, n), b.middleCols(b0, n));
}

inline CostCurve cost_curve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            int t_max, int min_overlap) {
    CostCurve c;
    c.t_max = t_max;
    c.values.resize(2 * t_max + 1);
    for (int t = -t_max; t <= t_max; ++t) {
        const PearsonResult p = shifted_pearson(a, b, t, min_overlap);
        c.at_shift(t) = p.degenerate ? std::numeric_limits<double>::quiet_NaN() : p.r;
    }
    return c;
}

// Argmax over a cost curve; ties and near-ties break toward the smallest |t|.
inline bool curve_argmax(const CostCurve& c, int* best_t, double* best_r) {
    bool found = false;
    for (int t = 0; t <= c.t_max; ++t) {
        for (int s : {t, -t}) {
            if (s == 0 && t != 0) continue;
            const double v = c.at_shift(s);
            if (std::isnan(v)) continue;
            if (!found || v > *best_r + 1e-15) {
                *best_r = v;
                *best_t = s;
                found = true;
            }
        }
    }
    return found;
}

struct RegistrationResult {
    double translation_m = 0;   // along-track, "S2 start ahead of S1 start"
    double confidence = 0;      // in [0,1]
    bool accepted = false;
};

// Engineered baseline: K * argmax_T pearson over the shared region.
inline RegistrationResult engineered_register(const Submap& s1, const Submap& s2,
                                              const RegistrationConfig& cfg = {},
                                              double gate_threshold = 0.0) {
    const auto& a = s1.image.image;
    const auto& b = s2.image.image;
    if (a.rows() != b.rows())
        throw std::invalid_argument("engineered_register: row count mismatch");
    const int cols = static_cast<int>(std::min(a.cols(), b.cols()));
    const CostCurve c = cost_curve(a.leftCols(cols), b.leftCols(cols),
                                   cfg.t_max(cols), cfg.min_overlap(cols));
    RegistrationResult out;
    int best_t = 0;
    double best_r = -2;
    if (!curve_argmax(c, &best_t, &best_r)) return out;
    out.translation_m = best_t * s1.column_spacing_m;
    out.confidence = std::clamp(best_r, 0.0, 1.0);
    out.accepted = best_r >= gate_threshold;
    return out;
}

// Fixed convolutional filter bank standing in for learned feature maps:
// oriented edges, Laplacian-of-Gaussian at two scales, identity, and seeded
// random sparse stencils. All kernels except the identity are zero-mean.
class FilterBank {
public:
    static FilterBank standard(int k = 16, uint64_t seed = 0) {
        FilterBank bank;
        auto add = [&](Eigen::MatrixXd m, bool zero_mean = true) {
            if (zero_mean) m.array() -= m.mean();
            bank.kernels_.push_back(std::move(m));
        };

        Eigen::MatrixXd identity = Eigen::MatrixXd::Zero(3, 3);
        identity(1, 1) = 1.0;
        bank.kernels_.push_back(identity);  // not zero-mean by design

        Eigen::MatrixXd vert(3, 3);   // vertical edges (along-track gradient)
        vert << -1, 0, 1, -2, 0, 2, -1, 0, 1;
        add(vert);
        add(vert.transpose().eval());  // horizontal edges
        Eigen::MatrixXd d1(3, 3), d2(3, 3);
        d1 << 2, -1, -1, -1, 2, -1, -1, -1, 2;   // +45 deg
        d2 << -1, -1, 2, -1, 2, -1, 2, -1, -1;   // -45 deg
        add(d1);
        add(d2);
        add(log_kernel(5, 1.0));
        add(log_kernel(9, 2.0));
        // smoothing kernels: their correlation maps stay stable under
        // per-pixel noise, which lets a trained head lean on them
        add(gauss_kernel(5, 1.0));
        add(gauss_kernel(9, 2.0));
        add(gauss_kernel(13, 3.0));

        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
        std::uniform_int_distribution<int> pos(0, 4);
        std::normal_distribution<double> amp(0.0, 1.0);
        while (static_cast<int>(bank.kernels_.size()) < k) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Zero(5, 5);
            for (int i = 0; i < 4; ++i) m(pos(rng), pos(rng)) += amp(rng);
            if (m.cwiseAbs().maxCoeff() == 0.0) continue;
            add(m);
        }
        return bank;
    }

    // Bank used for pair gating: edge and band-pass kernels only. Smooth
    // kernels (identity, gaussians) correlate on slowly-varying acquisition
    // artifacts shared between passes, which would let non-overlapping pairs
    // through the gate.
    static FilterBank gating() {
        FilterBank bank;
        auto add = [&](Eigen::MatrixXd m) {
            m.array() -= m.mean();
            bank.kernels_.push_back(std::move(m));
        };
        Eigen::MatrixXd vert(3, 3);
        vert << -1, 0, 1, -2, 0, 2, -1, 0, 1;
        add(vert);
        Eigen::MatrixXd d1(3, 3), d2(3, 3);
        d1 << 2, -1, -1, -1, 2, -1, -1, -1, 2;
        d2 << -1, -1, 2, -1, 2, -1, 2, -1, -1;
        add(d1);
        add(d2);
        add(log_kernel(5, 1.0));
        return bank;
    }

    int size() const { return static_cast<int>(kernels_.size()); }
    static FilterBank from_kernels(std::vector<Eigen::MatrixXd> kernels) {
        FilterBank bank;
        bank.kernels_ = std::move(kernels);
        return bank;
    }

    const std::vector<Eigen::MatrixXd>& kernels() const { return kernels_; }
    std::vector<Eigen::MatrixXd>& mutable_kernels() { return kernels_; }

private:
    static Eigen::MatrixXd gauss_kernel(int n, double sigma) {
        Eigen::MatrixXd m(n, n);
        const double c = (n - 1) / 2.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double r2 = (i - c) * (i - c) + (j - c) * (j - c);
                m(i, j) = std::exp(-r2 / (2 * sigma * sigma));
            }
        return Eigen::MatrixXd(m / m.sum());
    }

    static Eigen::MatrixXd log_kernel(int n, double sigma) {
        Eigen::MatrixXd m(n, n);
        const double c = (n - 1) / 2.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double r2 = (i - c) * (i - c) + (j - c) * (j - c);
                const double s2 = sigma * sigma;
                m(i, j) = (r2 / (2 * s2) - 1.0) * std::exp(-r2 / (2 * s2)) / (M_PI * s2 * s2);
            }
        return m;
    }

    std::vector<Eigen::MatrixXd> kernels_;
};

// Valid-mode 2D convolution (kernel flipped, as in convolution proper).
inline Eigen::MatrixXd conv2_valid(const Eigen::MatrixXd& img, const Eigen::MatrixXd& kernel) {
    const int kr = static_cast<int>(kernel.rows()), kc = static_cast<int>(kernel.cols());
    const int orr = static_cast<int>(img.rows()) - kr + 1;
    const int oc = static_cast<int>(img.cols()) - kc + 1;
    if (orr <= 0 || oc <= 0)
        throw std::invalid_argument("conv2_valid: image smaller than kernel");
    Eigen::MatrixXd flipped = kernel.reverse();
    Eigen::MatrixXd out(orr, oc);
    for (int i = 0; i < orr; ++i)
        for (int j = 0; j < oc; ++j)
            out(i, j) = (img.block(i, j, kr, kc).array() * flipped.array()).sum();
    return out;
}

// All maps cropped to a common (smallest) shape so shifts stay comparable.
inline std::vector<Eigen::MatrixXd> feature_maps(const Submap& s, const FilterBank& bank) {
    int min_r = std::numeric_limits<int>::max(), min_c = min_r;
    for (const auto& k : bank.kernels()) {
        min_r = std::min<int>(min_r, s.image.rows() - static_cast<int>(k.rows()) + 1);
        min_c = std::min<int>(min_c, s.image.cols() - static_cast<int>(k.cols()) + 1);
    }
    if (min_r <= 0 || min_c <= 0)
        throw std::invalid_argument("feature_maps: submap smaller than largest kernel");
    std::vector<Eigen::MatrixXd> maps;
    maps.reserve(bank.size());
    for (const auto& k : bank.kernels()) {
        Eigen::MatrixXd m = conv2_valid(s.image.image, k);
        const int r0 = (static_cast<int>(m.rows()) - min_r) / 2;
        const int c0 = (static_cast<int>(m.cols()) - min_c) / 2;
        maps.push_back(m.block(r0, c0, min_r, min_c));
    }
    return maps;
}

struct CorrFeat {
    Eigen::VectorXd argmax_shifts;  // columns, masked entries = 0
    Eigen::VectorXd peak_values;    // correlation at the argmax, 0 if masked
    std::vector<bool> mask;         // true = degenerate curve, excluded
    int t_max = 0;

    int unmasked_count() const {
        int n = 0;
        for (bool m : mask) n += !m;
        return n;
    }
};

// Per-filter cost curves between the two feature stacks; argmax per curve.
inline CorrFeat corr_feat(const std::vector<Eigen::MatrixXd>& f1,
                          const std::vector<Eigen::MatrixXd>& f2,
                          const RegistrationConfig& cfg = {}) {
    if (f1.size() != f2.size() || f1.empty())
        throw std::invalid_argument("corr_feat: feature stack mismatch");
    const int k = static_cast<int>(f1.size());
    const int cols = static_cast<int>(f1[0].cols());
    const int t_max = cfg.t_max(cols);
    const int min_ov = cfg.min_overlap(cols);

    CorrFeat out;
    out.t_max = t_max;
    out.argmax_shifts = Eigen::VectorXd::Zero(k);
    out.peak_values = Eigen::VectorXd::Zero(k);
    out.mask.assign(k, false);
    for (int i = 0; i < k; ++i) {
        const CostCurve c = cost_curve(f1[i], f2[i], t_max, min_ov);
        int best_t = 0;
        double best_r = -2;
        if (!curve_argmax(c, &best_t, &best_r)) {
            out.mask[i] = true;
            continue;
        }
        out.argmax_shifts[i] = best_t;
        out.peak_values[i] = best_r;
    }
    return out;
}

// Gate: max over shifts of the mean per-filter correlation.
inline bool gate(const std::vector<Eigen::MatrixXd>& f1,
                 const std::vector<Eigen::MatrixXd>& f2,
                 const RegistrationConfig& cfg, double threshold,
                 double* statistic = nullptr) {
    const int k = static_cast<int>(f1.size());
    const int cols = static_cast<int>(f1[0].cols());
    const int t_max = cfg.t_max(cols);
    const int min_ov = cfg.min_overlap(cols);

    double best = -1;
    bool any = false;
    for (int t = -t_max; t <= t_max; ++t) {
        double sum = 0;
        int n = 0;
        for (int i = 0; i < k; ++i) {
            const PearsonResult p = shifted_pearson(f1[i], f2[i], t, min_ov);
            if (p.degenerate || std::isnan(p.r)) continue;
            sum += p.r;
            ++n;
        }
        if (n == 0) continue;
        any = true;
        best = std::max(best, sum / n);
    }
    if (statistic) *statistic = any ? best : 0.0;
    return any && best >= threshold;
}

struct LinearHead {
    Eigen::VectorXd weights;  // one per filter
    double bias = 0;
    double pixel_to_meter = 0.05;  // K, = submap column spacing
    double training_loss = 0;
    int irls_iterations = 0;
    bool ridge_fallback = false;

    double predict(const CorrFeat& feats) const {
        double y = bias;
        for (int i = 0; i < weights.size(); ++i)
            if (!feats.mask[i]) y += weights[i] * feats.argmax_shifts[i] * pixel_to_meter;
        return y;
    }
};

struct TrainingPair {
    Eigen::VectorXd argmax_shifts;  // columns
    std::vector<bool> mask;
    double truth_translation_m = 0;
};

inline double huber_loss(double e, double delta) {
    const double a = std::abs(e);
    return a <= delta ? 0.5 * e * e : delta * (a - 0.5 * delta);
}

// Huber regression by iteratively reweighted least squares.
inline LinearHead train_linear_head(const std::vector<TrainingPair>& pairs,
                                    double pixel_to_meter,
                                    double huber_delta = 0.1,
                                    int max_iters = 100) {
    if (pairs.empty()) throw std::invalid_argument("train_linear_head: no pairs");
    const int k = static_cast<int>(pairs[0].argmax_shifts.size());
    const int n = static_cast<int>(pairs.size());
    if (n < 10 * k)
        throw std::invalid_argument("train_linear_head: need at least 10*k pairs");

    Eigen::MatrixXd design(n, k + 1);
    Eigen::VectorXd target(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j)
            design(i, j) = pairs[i].mask[j] ? 0.0 : pairs[i].argmax_shifts[j] * pixel_to_meter;
        design(i, k) = 1.0;  // bias column
        target[i] = pairs[i].truth_translation_m;
    }

    LinearHead head;
    head.pixel_to_meter = pixel_to_meter;

    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(k + 1);
    for (int it = 0; it < max_iters; ++it) {
        const Eigen::MatrixXd dw = w.asDiagonal() * design;
        Eigen::MatrixXd normal = design.transpose() * dw;
        const Eigen::VectorXd rhs = design.transpose() * (w.asDiagonal() * target);

        Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
        Eigen::VectorXd next;
        const double rcond_proxy =
            normal.diagonal().minCoeff() / std::max(normal.diagonal().maxCoeff(), 1e-300);
        if (ldlt.info() != Eigen::Success || rcond_proxy < 1e-14) {
            normal.diagonal().array() += 1e-6;  // ridge fallback
            head.ridge_fallback = true;
            next = normal.ldlt().solve(rhs);
        } else {
            next = ldlt.solve(rhs);
            if (!next.allFinite()) {
                normal.diagonal().array() += 1e-6;
                head.ridge_fallback = true;
                next = normal.ldlt().solve(rhs);
            }
        }

        const Eigen::VectorXd resid = target - design * next;
        Eigen::VectorXd w_next(n);
        for (int i = 0; i < n; ++i) {
            const double a = std::abs(resid[i]);
            w_next[i] = a <= huber_delta ? 1.0 : huber_delta / a;
        }
        head.irls_iterations = it + 1;
        const double wchange = (w_next - w).cwiseAbs().maxCoeff();
        const double cchange = (next - coef).cwiseAbs().maxCoeff();
        coef = next;
        w = w_next;
        if (wchange < 1e-8 && cchange < 1e-10) break;
    }

    head.weights = coef.head(k);
    head.bias = coef[k];
    double loss = 0;
    const Eigen::VectorXd resid = target - design * coef;
    for (int i = 0; i < n; ++i) loss += huber_loss(resid[i], huber_delta);
    head.training_loss = loss / n;
    return head;
}

// Learned registration: linear head applied to the correlation features.
inline RegistrationResult learned_register(const std::vector<Eigen::MatrixXd>& f1,
                                           const std::vector<Eigen::MatrixXd>& f2,
                                           const LinearHead& head,
                                           const RegistrationConfig& cfg,
                                           double gate_threshold) {
    RegistrationResult out;
    double stat = 0;
    if (!gate(f1, f2, cfg, gate_threshold, &stat)) {
        out.confidence = std::clamp(stat, 0.0, 1.0);
        return out;
    }
    const CorrFeat feats = corr_feat(f1, f2, cfg);
    if (feats.unmasked_count() == 0) return out;
    out.translation_m = head.predict(feats);
    out.confidence = std::clamp(stat, 0.0, 1.0);
    out.accepted = true;
    return out;
}

} // namespace gprloc
