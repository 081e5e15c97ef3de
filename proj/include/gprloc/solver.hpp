#pragma once

// Sparse nonlinear least squares over the factor graph: Gauss-Newton steps
// with Levenberg-Marquardt damping on diag(J^T J), plus an incremental
// per-timestep mode (warm-started batch or sliding window).

#include <gprloc/graph.hpp>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <functional>
#include <optional>
#include <set>

namespace gprloc {

struct LinearSystem {
    Eigen::SparseMatrix<double> jacobian;  // whitened
    VecX residual;                         // whitened
    int num_states = 0;

    int cols() const { return num_states * State::kDim; }
};

enum class IncrementalMode { full_batch_warm_start, sliding_window };

struct SolverConfig {
    int max_iterations = 50;
    double cost_tolerance = 1e-9;       // relative cost change
    double step_tolerance = 1e-10;      // step norm
    double initial_lambda = 1e-6;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    double lambda_max = 1e12;
    IncrementalMode mode = IncrementalMode::full_batch_warm_start;
    int window_size = 50;               // states, sliding_window mode only
};

struct IterationRecord {
    int iteration;
    double cost;
    double lambda;
    double step_norm;
    bool accepted;
};

struct OptimizeReport {
    bool converged = false;
    bool diverged = false;
    double initial_cost = 0;
    double final_cost = 0;
    int accepted_steps = 0;
    std::vector<IterationRecord> iterations;

    std::string to_csv() const {
        std::ostringstream os;
        os << "iteration,cost,lambda,step_norm,accepted\n";
        for (const auto& it : iterations)
            os << it.iteration << "," << it.cost << "," << it.lambda << ","
               << it.step_norm << "," << (it.accepted ? 1 : 0) << "\n";
        return os.str();
    }
};

struct IndeterminateSystemError : std::runtime_error {
    explicit IndeterminateSystemError(const std::string& what, std::vector<int> vars = {})
        : std::runtime_error(what), unconstrained_variables(std::move(vars)) {}
    std::vector<int> unconstrained_variables;
};

// Variables in connected components that contain no prior are gauge-free.
inline std::vector<int> unconstrained_variables(const FactorGraph& graph) {
    const int n = graph.num_variables();
    std::vector<int> parent(n);
    for (int i = 0; i < n; ++i) parent[i] = i;
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (const auto& f : graph.factors()) {
        const auto& ks = f->keys();
        for (size_t i = 1; i < ks.size(); ++i) parent[find(ks[0])] = find(ks[i]);
    }
    std::set<int> anchored;
    for (const auto& f : graph.factors())
        if (f->kind() == FactorKind::prior) anchored.insert(find(f->keys()[0]));
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (!anchored.count(find(i))) out.push_back(i);
    return out;
}

inline LinearSystem linearize(const FactorGraph& graph, const std::vector<State>& estimate) {
    LinearSystem sys;
    sys.num_states = static_cast<int>(estimate.size());

    int rows = 0;
    for (const auto& f : graph.factors()) rows += f->dim();
    sys.residual.resize(rows);

    std::vector<Eigen::Triplet<double>> trips;
    int row = 0;
    for (const auto& f : graph.factors()) {
        VecX r = f->noise().whiten(f->residual(estimate));
        // IRLS square-root weight for the Huber loss on robust factors
        double w = 1.0;
        const double delta = f->robust_delta();
        if (delta > 0) {
            const double rn = r.norm();
            if (rn > delta) w = std::sqrt(delta / rn);
        }
        r *= w;
        const auto jacs = f->jacobians(estimate);
        sys.residual.segment(row, f->dim()) = r;
        for (size_t v = 0; v < f->keys().size(); ++v) {
            const MatX jw = w * f->noise().whiten_jacobian(jacs[v]);
            const int col0 = f->keys()[v] * State::kDim;
            for (int i = 0; i < jw.rows(); ++i)
                for (int j = 0; j < jw.cols(); ++j)
                    if (jw(i, j) != 0.0)
                        trips.emplace_back(row + i, col0 + j, jw(i, j));
        }
        row += f->dim();
    }
    sys.jacobian.resize(rows, sys.cols());
    sys.jacobian.setFromTriplets(trips.begin(), trips.end());
    return sys;
}

// Solves (J^T J + lambda * diag(J^T J)) delta = -J^T r by sparse Cholesky.
inline VecX solve_normal_equations(const LinearSystem& sys, double lambda) {
    Eigen::SparseMatrix<double> jtj =
        (sys.jacobian.transpose() * sys.jacobian).pruned();
    VecX diag = jtj.diagonal();
    for (int i = 0; i < jtj.rows(); ++i) {
        // dimensions no factor touches have zero gradient; give them unit
        // curvature so the solve stays well posed and their step is zero
        jtj.coeffRef(i, i) = diag[i] > 0.0 ? diag[i] * (1.0 + lambda) : 1.0;
    }

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
    chol.compute(jtj);
    if (chol.info() != Eigen::Success) {
        std::vector<int> bad;
        for (int i = 0; i < diag.size() / State::kDim; ++i)
            if (diag.segment(i * State::kDim, State::kDim).minCoeff() <= 0.0)
                bad.push_back(i);
        throw IndeterminateSystemError("normal equations are singular", bad);
    }
    const VecX rhs = -(sys.jacobian.transpose() * sys.residual);
    return chol.solve(rhs);
}

inline std::vector<State> apply_step(const std::vector<State>& estimate, const VecX& delta) {
    std::vector<State> out(estimate.size());
    for (size_t i = 0; i < estimate.size(); ++i)
        out[i] = estimate[i].retract(delta.segment<State::kDim>(i * State::kDim));
    return out;
}

inline OptimizeReport optimize(const FactorGraph& graph, std::vector<State>& estimate,
                               const SolverConfig& cfg = SolverConfig{}) {
    if (estimate.size() != static_cast<size_t>(graph.num_variables()))
        throw std::invalid_argument("optimize: estimate size mismatch");
    {
        const auto bad = unconstrained_variables(graph);
        if (!bad.empty())
            throw IndeterminateSystemError("graph has no prior anchoring these variables", bad);
    }

    OptimizeReport report;
    double cost = graph.total_cost(estimate);
    report.initial_cost = cost;
    double lambda = cfg.initial_lambda;
    std::vector<State> best = estimate;
    double best_cost = cost;

    for (int it = 0; it < cfg.max_iterations; ++it) {
        const LinearSystem sys = linearize(graph, estimate);
        VecX delta;
        bool accepted = false;
        double step_norm = 0, new_cost = cost;

        bool at_optimum = false;
        while (lambda <= cfg.lambda_max) {
            delta = solve_normal_equations(sys, lambda);
            step_norm = delta.norm();
            if (step_norm < cfg.step_tolerance) { at_optimum = true; break; }
            const std::vector<State> cand = apply_step(estimate, delta);
            new_cost = graph.total_cost(cand);
            if (new_cost <= cost) {
                estimate = cand;
                accepted = true;
                lambda = std::max(lambda / cfg.lambda_down, 1e-12);
                break;
            }
            lambda *= cfg.lambda_up;
        }
        report.iterations.push_back({it, new_cost, lambda, step_norm, accepted});

        if (at_optimum) {
            report.converged = true;
            break;
        }
        if (!accepted) {
            report.diverged = lambda > cfg.lambda_max;
            break;
        }
        ++report.accepted_steps;
        if (new_cost < best_cost) { best = estimate; best_cost = new_cost; }

        const double rel = (cost - new_cost) / std::max(cost, 1e-300);
        cost = new_cost;
        if (rel < cfg.cost_tolerance || step_norm < cfg.step_tolerance) {
            report.converged = true;
            break;
        }
    }
    if (!report.converged && !report.diverged) report.converged = true;  // hit max iterations
    if (report.diverged) estimate = best;
    report.final_cost = graph.total_cost(estimate);
    return report;
}

// Incremental per-timestep optimization standing in for an incremental
// smoother: new states are initialized from odometry and the whole graph
// (or a trailing window) is re-optimized warm-started from the previous
// estimate.
class IncrementalSession {
public:
    explicit IncrementalSession(SolverConfig cfg = SolverConfig{}) : cfg_(cfg) {}

    FactorGraph& graph() { return graph_; }
    const FactorGraph& graph() const { return graph_; }

    int add_state_with_odometry(const Pose3& z_rel_inv_convention, const State* seed = nullptr) {
        // z is the measurement of s_new^-1 s_prev; initialize s_new = s_prev * z^-1
        State init;
        if (graph_.num_variables() == 0) {
            if (seed) init = *seed;
        } else {
            const State& prev = graph_.state(graph_.num_variables() - 1);
            init = prev;
            init.pose = prev.pose * z_rel_inv_convention.inverse();
        }
        return graph_.add_variable(init);
    }

    OptimizeReport update() {
        auto& estimate = graph_.mutable_estimate();
        if (cfg_.mode == IncrementalMode::sliding_window) {
            // optimize only the trailing window; older states stay fixed via
            // a temporary snapshot restore
            const int n = graph_.num_variables();
            const int w0 = std::max(0, n - cfg_.window_size);
            const std::vector<State> frozen(estimate.begin(), estimate.begin() + w0);
            OptimizeReport rep = optimize(graph_, estimate, cfg_);
            for (int i = 0; i < w0; ++i) estimate[i] = frozen[i];
            return rep;
        }
        return optimize(graph_, estimate, cfg_);
    }

private:
    FactorGraph graph_;
    SolverConfig cfg_;
};

} // namespace gprloc
