// Acceptance run: one line per criterion, nonzero exit if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "permeq/autodiff.hpp"
#include "permeq/basis.hpp"
#include "permeq/layers.hpp"
#include "permeq/oracle.hpp"
#include "permeq/partitions.hpp"
#include "permeq/train.hpp"

using namespace permeq;

namespace {

// Tolerances and limits, one place.
constexpr double kCrit1MaxSeconds = 60.0;
constexpr double kCrit2MaxSeconds = 30.0;
constexpr double kExactTraceTol = 1e-9;      // projector trace vs integer
constexpr double kSpanResidualTol = 1e-10;
constexpr double kFastGenericTol = 1e-10;
constexpr int kFastGenericInputs = 100;
constexpr int kEquivarianceTriples = 1000;
constexpr double kEquivarianceTol = 1e-10;
constexpr double kGradRelTol = 1e-5;
constexpr double kGradStep = 1e-5;
constexpr double kMatrixTaskMse = 1e-4;
constexpr double kTraceMse = 1e-2;
constexpr double kSvdCosine = 0.05;
constexpr double kMuchSmaller = 1e-2;  // "a << b" means a < 0.01 b
constexpr double kCrit9MaxSeconds = 15 * 60.0;
constexpr double kExactFitTol = 1e-10;
constexpr double kHartfordGap = 0.05;
constexpr double kGeneralizationMse = 1e-2;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t threads()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

Outcome criterion1()
{
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::size_t cases = 0;
    std::string bad;
    for (int l = 1; l <= 4; ++l)
        for (std::size_t n = static_cast<std::size_t>(l); n <= 5; ++n) {
            const auto dim = fixed_subspace_dim(n, l);
            ++cases;
            if (dim != bell(l)) {
                ok = false;
                bad += " (n=" + std::to_string(n) + ",l=" + std::to_string(l) +
                       ")=" + std::to_string(dim);
            }
        }
    const auto headline = fixed_subspace_dim(5, 4);
    const double t = seconds_since(t0);
    ok = ok && headline == 15 && t < kCrit1MaxSeconds;
    return {ok, std::to_string(cases) + " cases, dim(n=5,l=4)=" + std::to_string(headline) +
                    ", " + fmt(t) + " s" + (bad.empty() ? "" : ", mismatches:" + bad)};
}

Outcome criterion2()
{
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    double max_inner = 0.0;
    std::string detail;
    for (auto [n, l] : {std::pair<std::size_t, int>{3, 2}, {4, 2}, {3, 3}, {2, 4}}) {
        const auto c = check_basis_spans_fixed_space(n, l);
        ok = ok && c.passed && c.max_inner_product == 0.0;
        max_inner = std::max(max_inner, c.max_inner_product);
        detail += " (" + std::to_string(n) + "," + std::to_string(l) + "):rank " +
                  std::to_string(c.stacked_rank) + "/" + std::to_string(c.fixed_dim);
    }
    const double t = seconds_since(t0);
    ok = ok && t < kCrit2MaxSeconds;
    return {ok, "max inner product " + fmt(max_inner) + ";" + detail + ", " + fmt(t) + " s"};
}

Outcome criterion3()
{
    bool ok = true;
    std::size_t cases = 0;
    for (int k = 1; k <= 4; ++k)
        for (std::size_t n = static_cast<std::size_t>(k); n <= 7; ++n) {
            ++cases;
            ok = ok && trace_moment(n, k) == Rational::make(static_cast<std::int64_t>(bell(k)), 1);
        }
    const Rational counter = trace_moment(2, 3);
    ok = ok && counter == Rational::make(4, 1);
    return {ok, std::to_string(cases) + " exact cases, trace_moment(n=2,k=3)=" +
                    counter.to_string() + " (bell(3)=" + std::to_string(bell(3)) + ")"};
}

bool exact(double trace, std::uint64_t expected)
{
    return std::abs(trace - static_cast<double>(expected)) < kExactTraceTol;
}

Outcome criterion4()
{
    struct Case {
        std::size_t n;
        int k;
        std::size_t d, d_out;
        bool equivariant;
    };
    const Case cases[] = {{3, 1, 2, 2, false}, {3, 2, 1, 1, false}, {3, 2, 2, 3, false},
                          {3, 1, 1, 1, true},  {3, 1, 2, 2, true},  {4, 2, 2, 1, true}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto r = check_layer_dims_with_features(c.n, c.k, c.d, c.d_out, c.equivariant);
        ok = ok && r.passed && exact(r.linear_trace, r.linear_expected) &&
             exact(r.bias_trace, r.bias_expected);
        detail += std::string(detail.empty() ? "" : ", ") + (c.equivariant ? "eq" : "inv") +
                  "(n=" + std::to_string(c.n) + ",k=" + std::to_string(c.k) +
                  ",d=" + std::to_string(c.d) + ",d'=" + std::to_string(c.d_out) + ") " +
                  std::to_string(r.linear_expected) + "+" + std::to_string(r.bias_expected);
    }
    return {ok, detail};
}

Outcome criterion5()
{
    struct Case {
        std::size_t n1, n2;
        int k1, k2, l1, l2;
    };
    const Case cases[] = {{3, 3, 1, 1, 1, 1}, {3, 3, 2, 0, 0, 0}, {2, 3, 1, 1, 0, 0},
                          {3, 2, 1, 1, 1, 0}, {2, 2, 1, 1, 1, 1}};
    bool ok = true;
    double hartford = 0.0;
    for (const auto& c : cases) {
        const auto r = check_multiset_dims(c.n1, c.n2, c.k1, c.k2, c.l1, c.l2);
        ok = ok && r.passed && exact(r.trace, r.expected);
        if (c.n1 == 3 && c.k1 == 1 && c.k2 == 1 && c.l1 == 1 && c.l2 == 1)
            hartford = r.trace;
    }
    ok = ok && exact(hartford, 4);
    return {ok, std::to_string(std::size(cases)) + " cases, row/column exchangeable case " +
                    fmt(hartford)};
}

Outcome criterion6()
{
    bool ok = true;
    std::string detail;
    double worst_residual = 0.0;
    for (std::size_t n : {3, 4, 5}) {
        const auto mats = order2_op_matrices(n);
        const auto rows = static_cast<Eigen::Index>(n * n * n * n);
        Matrix ops(rows, static_cast<Eigen::Index>(mats.size()));
        for (std::size_t i = 0; i < mats.size(); ++i)
            ops.col(static_cast<Eigen::Index>(i)) =
                Eigen::Map<const Vector>(mats[i].data(), mats[i].size());
        const auto basis = equivariant_basis(2, n);
        Matrix ind(rows, static_cast<Eigen::Index>(basis.size()));
        for (std::size_t mu = 0; mu < basis.size(); ++mu) {
            const Matrix b = basis[mu].operator_matrix();
            ind.col(static_cast<Eigen::Index>(mu)) = Eigen::Map<const Vector>(b.data(), b.size());
        }
        const auto rank = Eigen::FullPivLU<Matrix>(ops).rank();
        // Residual of each family after projection onto the span of the other.
        auto residual = [](const Matrix& target, const Matrix& span) {
            const Matrix coef = span.completeOrthogonalDecomposition().solve(target);
            return (span * coef - target).norm();
        };
        const double r = std::max(residual(ops, ind), residual(ind, ops));
        worst_residual = std::max(worst_residual, r);
        ok = ok && rank == 15 && r < kSpanResidualTol;
        detail += " n=" + std::to_string(n) + ":rank " + std::to_string(rank);
    }

    std::mt19937_64 rng(606);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < kFastGenericInputs; ++s) {
        const std::size_t n = 3 + static_cast<std::size_t>(s % 3);
        EquivariantLayer layer(2, 2, 2, 3, BasisKind::full, true);
        for (double& w : layer.weights())
            w = u(rng);
        for (double& b : layer.bias())
            b = u(rng);
        Tensor x(Shape{2, n, 2});
        for (double& v : x.data())
            v = u(rng);
        const Tensor fast = apply_equivariant_fast(layer, x);
        const Tensor generic = apply_equivariant(layer, x);
        for (std::size_t i = 0; i < fast.data().size(); ++i)
            worst = std::max(worst, std::abs(fast[i] - generic[i]));
    }
    ok = ok && worst < kFastGenericTol;
    return {ok, "ranks:" + detail + " (required 15 each), span residual " + fmt(worst_residual) +
                    ", fast vs generic max diff " + fmt(worst) + " over " +
                    std::to_string(kFastGenericInputs) + " inputs"};
}

double max_abs(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

Outcome criterion7()
{
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t sizes[] = {3, 5, 8};
    double worst = 0.0;
    int invariant_nets = 0;
    for (int t = 0; t < kEquivarianceTriples; ++t) {
        NetworkSpec spec;
        spec.input_features = 2;
        const std::size_t depth = 1 + rng() % 3;
        spec.widths.assign(depth, 3);
        spec.basis = rng() % 4 == 0 ? BasisKind::hartford : BasisKind::full;
        spec.normalized = rng() % 2 == 0;
        switch (rng() % 4) {
        case 0:
            spec.output_order = 2;
            break;
        case 1:
            spec.output_order = 1;
            break;
        default:
            spec.invariant_head = true;
            spec.pool = rng() % 2 ? PoolMode::sum : PoolMode::max;
            spec.dense_widths = {4, 1};
            ++invariant_nets;
        }
        Network net(spec);
        for (auto block : net.parameter_blocks())
            for (double& v : block)
                v = u(rng);
        const std::size_t n = sizes[t % 3];
        Tensor x(Shape{2, n, 2});
        for (double& v : x.data())
            v = u(rng);
        const Permutation p = Permutation::random(n, rng);
        const Tensor fx = forward(net, x);
        const Tensor fpx = forward(net, apply_perm(p, x));
        const Tensor expected = net.output_order() == 0 ? fx : apply_perm(p, fx);
        double diff = 0.0;
        for (std::size_t i = 0; i < fpx.data().size(); ++i)
            diff = std::max(diff, std::abs(fpx[i] - expected[i]));
        worst = std::max(worst, diff / std::max(1.0, max_abs(fx.data())));
    }
    return {worst < kEquivarianceTol,
            std::to_string(kEquivarianceTriples) + " triples (" + std::to_string(invariant_nets) +
                " invariant), max relative error " + fmt(worst)};
}

Outcome criterion8()
{
    std::mt19937_64 rng(808);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = 3;
    bool ok = true;
    std::string detail;
    for (bool invariant : {false, true}) {
        NetworkSpec spec;
        spec.input_features = 2;
        spec.widths = {3, invariant ? 3u : 2u};
        spec.output_order = 2;
        spec.invariant_head = invariant;
        spec.pool = PoolMode::sum;
        if (invariant)
            spec.dense_widths = {3, 2};
        Network net(spec);
        for (auto block : net.parameter_blocks())
            for (double& v : block)
                v = 0.7 * u(rng);
        std::vector<Tensor> xs, ys;
        for (int s = 0; s < 3; ++s) {
            Tensor x(Shape{2, n, 2}), y(invariant ? Shape{0, n, 2} : Shape{2, n, 2});
            for (double& v : x.data())
                v = u(rng);
            for (double& v : y.data())
                v = u(rng);
            xs.push_back(std::move(x));
            ys.push_back(std::move(y));
        }
        const LossSpec loss{LossKind::mse};
        const auto analytic = grad(net, xs, ys, loss);
        auto blocks = net.parameter_blocks();
        const auto names = net.parameter_names();
        double worst = 0.0;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            double diff = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < blocks[b].size(); ++i) {
                const double saved = blocks[b][i];
                blocks[b][i] = saved + kGradStep;
                const double up = evaluate_loss(net, xs, ys, loss);
                blocks[b][i] = saved - kGradStep;
                const double down = evaluate_loss(net, xs, ys, loss);
                blocks[b][i] = saved;
                const double fd = (up - down) / (2 * kGradStep);
                diff = std::max(diff, std::abs(analytic.grads.blocks[b][i] - fd));
                scale = std::max(scale, std::abs(fd));
            }
            // Relative error of the whole group: max deviation over max magnitude.
            const double rel = scale > 0.0 ? diff / scale : diff;
            worst = std::max(worst, rel);
            ok = ok && rel < kGradRelTol;
        }
        detail += std::string(detail.empty() ? "" : ", ") +
                  (invariant ? "invariant head " : "equivariant ") +
                  std::to_string(blocks.size()) + " groups, worst " + fmt(worst);
    }
    return {ok, detail};
}

ExperimentReport run_preset(TaskKind task, BasisKind basis, std::vector<std::size_t> eval = {})
{
    ExperimentPreset p = task_preset(task);
    p.grid.eval_sizes = std::move(eval);
    const TaskSpec spec{task, 20, 2000, 500, 0};
    return run_experiment(spec, p.config, basis, p.grid, threads());
}

Outcome criterion9()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream d;
    bool ok = true;
    auto line = [&](const char* name, const ExperimentReport& r) {
        d << (d.tellp() > 0 ? "; " : "") << name << " " << fmt(r.best_run().test_loss)
          << " (trivial " << fmt(r.baseline) << ", depth " << r.best_run().depth << ")";
    };

    const auto sym = run_preset(TaskKind::sym_projection, BasisKind::full);
    line("sym", sym);
    ok = ok && sym.best_run().test_loss < kMatrixTaskMse &&
         sym.best_run().test_loss < kMuchSmaller * sym.baseline;

    const auto diag = run_preset(TaskKind::diag_extraction, BasisKind::full);
    const auto diag_h = run_preset(TaskKind::diag_extraction, BasisKind::hartford);
    line("diag", diag);
    line("diag/hartford", diag_h);
    ok = ok && diag.best_run().test_loss < kMatrixTaskMse &&
         diag.best_run().test_loss < kMuchSmaller * diag.baseline &&
         diag.best_run().test_loss < kMuchSmaller * diag_h.best_run().test_loss;

    const auto trace = run_preset(TaskKind::trace, BasisKind::full);
    line("trace", trace);
    ok = ok && trace.best_run().test_loss < kTraceMse &&
         trace.best_run().test_loss < kMuchSmaller * trace.baseline;

    const auto svd = run_preset(TaskKind::max_singular_vector, BasisKind::full);
    line("svd cosine", svd);
    ok = ok && svd.best_run().depth >= 2 && svd.best_run().test_loss < kSvdCosine;

    const double t = seconds_since(t0);
    ok = ok && t < kCrit9MaxSeconds;
    d << "; " << fmt(t) << " s";
    return {ok, d.str()};
}

Outcome criterion10()
{
    bool ok = true;
    std::ostringstream d;
    for (TaskKind t : {TaskKind::sym_projection, TaskKind::diag_extraction, TaskKind::trace}) {
        const auto r = least_squares_fit(t, BasisKind::full, 20);
        ok = ok && r.residual < kExactFitTol;
        d << to_string(t) << " " << fmt(r.residual) << ", ";
    }
    const auto h = least_squares_fit(TaskKind::diag_extraction, BasisKind::hartford, 20);
    ok = ok && h.residual > kHartfordGap;
    d << "diag_extraction/hartford " << fmt(h.residual);
    return {ok, d.str()};
}

Outcome criterion11()
{
    ExperimentPreset p = task_preset(TaskKind::sym_projection);
    p.grid.depths = {2};
    p.grid.eval_sizes = {15, 25};
    const TaskSpec spec{TaskKind::sym_projection, 20, 2000, 500, 0};
    const auto r = run_experiment(spec, p.config, BasisKind::full, p.grid, threads());
    bool ok = r.generalization.size() == 2;
    std::ostringstream d;
    d << "depth 2, n=20 test " << fmt(r.best_run().test_loss);
    for (const auto& g : r.generalization) {
        ok = ok && g.loss < kGeneralizationMse;
        d << ", n=" << g.n << " " << fmt(g.loss) << " (trivial " << fmt(g.baseline) << ")";
    }
    return {ok, d.str()};
}

}  // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"fixed-space dimension equals the Bell number", criterion1},
        {"indicator basis is orthogonal and spans the fixed space", criterion2},
        {"trace moments of permutation matrices", criterion3},
        {"feature and bias dimensions of layers", criterion4},
        {"dimensions for products of symmetric groups", criterion5},
        {"order-2 operators span the indicator basis; fast path agrees", criterion6},
        {"random networks are equivariant or invariant", criterion7},
        {"reverse-mode gradients match finite differences", criterion8},
        {"synthetic experiments at n=20", criterion9},
        {"least-squares expressivity", criterion10},
        {"size generalization without retraining", criterion11},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("[%s] criterion %zu: %s | %s | %.1f s\n", o.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first, o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
