#include "permeq/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/QR>

#include "json.hpp"

namespace permeq {

std::string_view to_string(TaskKind t)
{
    switch (t) {
    case TaskKind::sym_projection: return "sym_projection";
    case TaskKind::diag_extraction: return "diag_extraction";
    case TaskKind::max_singular_vector: return "max_singular_vector";
    case TaskKind::trace: return "trace";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view s)
{
    for (TaskKind t : {TaskKind::sym_projection, TaskKind::diag_extraction,
                       TaskKind::max_singular_vector, TaskKind::trace})
        if (s == to_string(t))
            return t;
    throw std::invalid_argument("unknown task '" + std::string(s) +
                                "' (expected sym_projection|diag_extraction|"
                                "max_singular_vector|trace)");
}

bool task_is_invariant(TaskKind t)
{
    return t == TaskKind::trace;
}

LossKind task_loss(TaskKind t)
{
    return t == TaskKind::max_singular_vector ? LossKind::cosine : LossKind::mse;
}

// ---------------------------------------------------------------------------

Vector max_right_singular_vector(const Matrix& a, double tol, std::size_t max_iterations)
{
    if (a.cols() == 0)
        throw std::invalid_argument("max_right_singular_vector: empty matrix");
    const Matrix ata = a.transpose() * a;
    Vector x = Vector::Ones(a.cols()).normalized();
    for (std::size_t it = 0; it < max_iterations; ++it) {
        Vector y = ata * x;
        const double norm = y.norm();
        if (norm == 0.0)
            throw std::runtime_error("max_right_singular_vector: iterate vanished");
        y /= norm;
        const double change = (y - x).norm();
        x = std::move(y);
        if (change < tol)
            return x;
    }
    throw std::runtime_error("max_right_singular_vector: power iteration did not converge");
}

Tensor task_target(TaskKind t, const Matrix& a)
{
    switch (t) {
    case TaskKind::sym_projection:
        return Tensor::from_matrix(0.5 * (a + a.transpose()));
    case TaskKind::diag_extraction:
        return Tensor::from_matrix(Matrix(a.diagonal().asDiagonal()));
    case TaskKind::max_singular_vector: {
        const Vector v = max_right_singular_vector(a);
        return Tensor(Shape{1, static_cast<std::size_t>(a.cols()), 1},
                      std::vector<double>(v.data(), v.data() + v.size()));
    }
    case TaskKind::trace:
        return Tensor(Shape{0, static_cast<std::size_t>(a.cols()), 1}, {a.trace()});
    }
    throw std::logic_error("unhandled task");
}

namespace {

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = g(rng);
    return Eigen::HouseholderQR<Matrix>(m).householderQ();
}

Matrix draw_input(TaskKind t, std::size_t n, std::mt19937_64& rng)
{
    if (t != TaskKind::max_singular_vector) {
        std::uniform_real_distribution<double> u(0.0, 10.0);
        Matrix a(n, n);
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                a(i, j) = u(rng);
        return a;
    }
    std::uniform_real_distribution<double> u(0.0, 0.5);
    Vector sigma(n);
    for (std::size_t i = 1; i < n; ++i)
        sigma[static_cast<Eigen::Index>(i)] = u(rng);
    sigma[0] = (n > 1 ? sigma.tail(n - 1).maxCoeff() : 0.0) + 0.5;
    const Matrix uu = random_orthogonal(n, rng);
    const Matrix vv = random_orthogonal(n, rng);
    return uu * sigma.asDiagonal() * vv.transpose();
}

Samples draw_samples(TaskKind t, std::size_t n, std::size_t count, std::mt19937_64& rng)
{
    Samples s;
    s.inputs.reserve(count);
    s.targets.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Matrix a = draw_input(t, n, rng);
        s.inputs.push_back(Tensor::from_matrix(a));
        s.targets.push_back(task_target(t, a));
    }
    return s;
}

}  // namespace

Dataset gen_task_data(const TaskSpec& t)
{
    if (t.n == 0)
        throw std::invalid_argument("task needs n >= 1");
    std::mt19937_64 rng(t.seed);
    Dataset d;
    d.train = draw_samples(t.kind, t.n, t.n_train, rng);
    d.test = draw_samples(t.kind, t.n, t.n_test, rng);
    return d;
}

NetworkSpec task_network(TaskKind t, std::size_t depth, std::size_t width, BasisKind basis,
                         bool normalized)
{
    if (depth == 0 || width == 0)
        throw std::invalid_argument("depth and width must be positive");
    NetworkSpec spec;
    spec.input_order = 2;
    spec.input_features = 1;
    spec.basis = basis;
    spec.normalized = normalized;
    if (t == TaskKind::trace) {
        spec.widths.assign(depth, width);
        spec.invariant_head = true;
        spec.pool = PoolMode::sum;
        spec.dense_widths = {1};
        return spec;
    }
    spec.widths.assign(depth - 1, width);
    spec.widths.push_back(1);
    spec.output_order = t == TaskKind::max_singular_vector ? 1 : 2;
    return spec;
}

// ---------------------------------------------------------------------------

Adam::Adam(const Network& net, AdamConfig config, std::size_t total_steps)
    : config_(config), total_steps_(std::max<std::size_t>(total_steps, 1))
{
    if (!(config.lr > 0.0))
        throw std::invalid_argument("learning rate must be positive");
    for (auto block : net.parameter_blocks()) {
        m_.emplace_back(block.size(), 0.0);
        v_.emplace_back(block.size(), 0.0);
    }
}

double Adam::current_lr() const
{
    const double progress =
        std::min(1.0, static_cast<double>(t_) / static_cast<double>(total_steps_));
    const double lo = config_.lr * config_.final_lr_fraction;
    return lo + 0.5 * (config_.lr - lo) * (1.0 + std::cos(M_PI * progress));
}

void Adam::step(Network& net, const Gradients& g)
{
    const double lr = current_lr();
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    auto blocks = net.parameter_blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t i = 0; i < blocks[b].size(); ++i) {
            const double gi = g.blocks[b][i];
            double& m = m_[b][i];
            double& v = v_[b][i];
            m = config_.beta1 * m + (1.0 - config_.beta1) * gi;
            v = config_.beta2 * v + (1.0 - config_.beta2) * gi * gi;
            blocks[b][i] -= lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
        }
}

// ---------------------------------------------------------------------------

namespace {

RowMatrix gather(const RowMatrix& stacked, std::size_t rows_per_sample,
                 std::span<const std::size_t> order)
{
    RowMatrix out(static_cast<Eigen::Index>(order.size() * rows_per_sample), stacked.cols());
    const auto r = static_cast<Eigen::Index>(rows_per_sample);
    for (std::size_t i = 0; i < order.size(); ++i)
        out.middleRows(static_cast<Eigen::Index>(i) * r, r) =
            stacked.middleRows(static_cast<Eigen::Index>(order[i]) * r, r);
    return out;
}

double mean_target(const Samples& s)
{
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& t : s.targets)
        for (double v : t.data()) {
            total += v;
            ++count;
        }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train_network(const TaskSpec& t, const Dataset& data, const TrainConfig& c,
                          BasisKind basis)
{
    if (data.train.inputs.empty() || data.test.inputs.empty())
        throw std::invalid_argument("training needs nonempty train and test sets");
    if (c.batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    Network net(task_network(t.kind, c.depth, c.width, basis, c.normalized));
    init_params(net, c.seed);
    if (task_is_invariant(t.kind))
        net.dense().back().bias.assign(1, mean_target(data.train));

    const LossSpec loss{task_loss(t.kind)};
    const NetworkPlan plan(net, t.n);
    const RowMatrix x = stack_samples(data.train.inputs);
    const RowMatrix y = stack_samples(data.train.targets);
    const std::size_t count = data.train.inputs.size();
    const std::size_t x_rows = data.train.inputs.front().node_count();
    const std::size_t y_rows = data.train.targets.front().node_count();
    const std::size_t steps_per_epoch = (count + c.batch_size - 1) / c.batch_size;
    Adam adam(net, c.adam, c.epochs * steps_per_epoch);
    std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainResult result{std::move(net), {}, 0.0, 0.0};
    for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
        const Permutation shuffle = Permutation::random(count, rng);
        const auto order = shuffle.map();
        double total = 0.0;
        for (std::size_t start = 0; start < count; start += c.batch_size) {
            const auto idx = order.subspan(start, std::min(c.batch_size, count - start));
            const auto r = grad(result.net, plan, gather(x, x_rows, idx), gather(y, y_rows, idx),
                                idx.size(), loss);
            adam.step(result.net, r.grads);
            total += r.loss;
        }
        result.epoch_losses.push_back(total / static_cast<double>(steps_per_epoch));
    }
    result.train_loss = evaluate_loss(result.net, plan, x, y, count, loss);
    result.test_loss =
        evaluate_loss(result.net, plan, stack_samples(data.test.inputs),
                      stack_samples(data.test.targets), data.test.inputs.size(), loss);
    return result;
}

double trivial_baseline(const Dataset& data, LossKind loss)
{
    if (data.train.targets.empty() || data.test.targets.empty())
        throw std::invalid_argument("baseline needs nonempty train and test sets");
    const RowMatrix train = stack_samples(data.train.targets);
    const std::size_t rows = data.train.targets.front().node_count();
    const auto r = static_cast<Eigen::Index>(rows);
    RowMatrix mean = RowMatrix::Zero(r, train.cols());
    for (std::size_t s = 0; s < data.train.targets.size(); ++s)
        mean += train.middleRows(static_cast<Eigen::Index>(s) * r, r);
    mean /= static_cast<double>(data.train.targets.size());
    const RowMatrix test = stack_samples(data.test.targets);
    const std::size_t batch = data.test.targets.size();
    RowMatrix pred(test.rows(), test.cols());
    for (std::size_t s = 0; s < batch; ++s)
        pred.middleRows(static_cast<Eigen::Index>(s) * r, r) = mean;
    return loss_value(pred, test, batch, loss);
}

double evaluate_at_size(const Network& net, const TaskSpec& t, std::size_t n)
{
    TaskSpec other = t;
    other.n = n;
    other.n_train = 0;
    const Dataset d = gen_task_data(other);
    return evaluate_loss(net, d.test.inputs, d.test.targets, LossSpec{task_loss(t.kind)});
}

ExperimentPreset task_preset(TaskKind t)
{
    ExperimentPreset p;
    p.config.adam.final_lr_fraction = 1e-4;
    p.config.batch_size = 8;
    p.config.width = 8;
    switch (t) {
    case TaskKind::sym_projection:
    case TaskKind::diag_extraction:
        p.config.epochs = 40;
        p.grid.depths = {1};
        p.grid.learning_rates = {1e-2};
        break;
    case TaskKind::trace:
        p.config.epochs = 100;
        p.grid.depths = {2};
        p.grid.learning_rates = {3e-2};
        break;
    case TaskKind::max_singular_vector:
        p.config.epochs = 80;
        p.config.batch_size = 16;
        p.config.adam.final_lr_fraction = 1e-3;
        p.grid.depths = {3};
        p.grid.learning_rates = {1e-2};
        break;
    }
    return p;
}

ExperimentReport run_experiment(const TaskSpec& t, const TrainConfig& c, BasisKind basis,
                                const ExperimentGrid& grid, std::size_t threads)
{
    if (grid.depths.empty() || grid.learning_rates.empty())
        throw std::invalid_argument("experiment grid is empty");
    const Dataset data = gen_task_data(t);
    ExperimentReport report;
    report.task = t;
    report.basis = basis;
    report.config = c;
    report.baseline = trivial_baseline(data, task_loss(t.kind));

    struct Point {
        std::size_t depth;
        double lr;
    };
    std::vector<Point> points;
    for (std::size_t depth : grid.depths)
        for (double lr : grid.learning_rates)
            points.push_back({depth, lr});
    report.runs.resize(points.size());
    std::vector<std::optional<Network>> nets(points.size());
    std::vector<std::exception_ptr> errors(points.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            try {
                TrainConfig run = c;
                run.depth = points[i].depth;
                run.adam.lr = points[i].lr;
                const auto start = std::chrono::steady_clock::now();
                TrainResult r = train_network(t, data, run, basis);
                const std::chrono::duration<double> elapsed =
                    std::chrono::steady_clock::now() - start;
                report.runs[i] = {run.depth, run.adam.lr, run.epochs, r.train_loss, r.test_loss,
                                  elapsed.count()};
                nets[i].emplace(std::move(r.net));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, points.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    for (std::size_t i = 1; i < report.runs.size(); ++i)
        if (report.runs[i].test_loss < report.runs[report.best].test_loss)
            report.best = i;
    for (std::size_t n : grid.eval_sizes) {
        TaskSpec other = t;
        other.n = n;
        SizeRecord rec;
        rec.n = n;
        rec.loss = evaluate_at_size(*nets[report.best], t, n);
        rec.baseline = trivial_baseline(gen_task_data(other), task_loss(t.kind));
        report.generalization.push_back(rec);
    }
    return report;
}

// ---------------------------------------------------------------------------

namespace {

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

void write_experiment_csv(std::ostream& out, const std::vector<ExperimentReport>& reports,
                          bool timing)
{
    out << "task,basis,depth,n,eval_n,n_train,n_test,lr,epochs,train_loss,loss,baseline,seed,"
           "wall_time\n";
    for (const auto& r : reports) {
        const auto prefix = std::string(to_string(r.task.kind)) + "," +
                            std::string(to_string(r.basis)) + ",";
        for (const auto& run : r.runs)
            out << prefix << run.depth << "," << r.task.n << "," << r.task.n << ","
                << r.task.n_train << "," << r.task.n_test << "," << num(run.lr) << ","
                << run.epochs << "," << num(run.train_loss) << "," << num(run.test_loss) << ","
                << num(r.baseline) << "," << r.task.seed << ","
                << (timing ? num(run.wall_time) : std::string("na")) << "\n";
        const auto& best = r.best_run();
        for (const auto& g : r.generalization)
            out << prefix << best.depth << "," << r.task.n << "," << g.n << ","
                << r.task.n_train << "," << r.task.n_test << "," << num(best.lr) << ","
                << best.epochs << ",na," << num(g.loss) << "," << num(g.baseline) << ","
                << r.task.seed << ",na\n";
    }
}

std::string experiment_summary_json(const std::vector<ExperimentReport>& reports, bool timing)
{
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["experiments"] = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json e;
        e["task"] = to_string(r.task.kind);
        e["basis"] = to_string(r.basis);
        e["loss"] = to_string(task_loss(r.task.kind));
        e["n"] = r.task.n;
        e["n_train"] = r.task.n_train;
        e["n_test"] = r.task.n_test;
        e["seed"] = r.task.seed;
        e["config"] = {{"epochs", r.config.epochs},
                       {"batch_size", r.config.batch_size},
                       {"width", r.config.width},
                       {"normalized", r.config.normalized},
                       {"init_seed", r.config.seed},
                       {"optimizer",
                        {{"name", "adam"},
                         {"beta1", r.config.adam.beta1},
                         {"beta2", r.config.adam.beta2},
                         {"eps", r.config.adam.eps},
                         {"final_lr_fraction", r.config.adam.final_lr_fraction}}}};
        e["trivial_baseline"] = r.baseline;
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& run : r.runs) {
            nlohmann::json j = {{"depth", run.depth},
                                {"lr", run.lr},
                                {"train_loss", run.train_loss},
                                {"test_loss", run.test_loss}};
            if (timing)
                j["wall_time"] = run.wall_time;
            runs.push_back(j);
        }
        e["runs"] = runs;
        e["best"] = {{"depth", r.best_run().depth},
                     {"lr", r.best_run().lr},
                     {"test_loss", r.best_run().test_loss}};
        nlohmann::json gen = nlohmann::json::array();
        for (const auto& g : r.generalization)
            gen.push_back({{"n", g.n}, {"loss", g.loss}, {"baseline", g.baseline}});
        e["generalization"] = gen;
        doc["experiments"].push_back(e);
    }
    return doc.dump(2);
}

// ---------------------------------------------------------------------------

Matrix task_operator(TaskKind t, std::size_t n)
{
    const auto nn = static_cast<Eigen::Index>(n * n);
    auto at = [n](std::size_t i, std::size_t j) { return static_cast<Eigen::Index>(i * n + j); };
    switch (t) {
    case TaskKind::sym_projection: {
        Matrix m = Matrix::Zero(nn, nn);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                m(at(i, j), at(i, j)) += 0.5;
                m(at(i, j), at(j, i)) += 0.5;
            }
        return m;
    }
    case TaskKind::diag_extraction: {
        Matrix m = Matrix::Zero(nn, nn);
        for (std::size_t i = 0; i < n; ++i)
            m(at(i, i), at(i, i)) = 1.0;
        return m;
    }
    case TaskKind::trace: {
        Matrix m = Matrix::Zero(1, nn);
        for (std::size_t i = 0; i < n; ++i)
            m(0, at(i, i)) = 1.0;
        return m;
    }
    case TaskKind::max_singular_vector:
        break;
    }
    throw std::invalid_argument("max_singular_vector is not a linear task");
}

std::vector<Matrix> order2_op_matrices(std::size_t n)
{
    const std::size_t nn = n * n;
    std::vector<Matrix> ops(kOrder2OpCount, Matrix::Zero(static_cast<Eigen::Index>(nn),
                                                         static_cast<Eigen::Index>(nn)));
    std::vector<double> unit(nn, 0.0);
    std::vector<double> out(nn * kOrder2OpCount);
    for (std::size_t col = 0; col < nn; ++col) {
        unit[col] = 1.0;
        order2_ops_forward(unit, n, 1, false, out);
        unit[col] = 0.0;
        for (std::size_t row = 0; row < nn; ++row)
            for (std::size_t op = 0; op < kOrder2OpCount; ++op)
                ops[op](static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
                    out[row * kOrder2OpCount + op];
    }
    return ops;
}

FitResult least_squares_fit(TaskKind t, BasisKind basis, std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("least_squares_fit needs n >= 1");
    const Matrix target = task_operator(t, n);
    FitResult fit;
    std::vector<Matrix> span;
    if (t == TaskKind::trace) {
        if (basis == BasisKind::full) {
            for (const auto& b : invariant_basis(2, n)) {
                fit.labels.push_back(b.partition().block_string());
                span.push_back(b.operator_matrix());
            }
        } else {
            fit.labels.push_back("total_sum");
            span.push_back(Matrix::Ones(1, static_cast<Eigen::Index>(n * n)));
        }
    } else if (basis == BasisKind::full) {
        span = order2_op_matrices(n);
        for (auto name : order2_op_names())
            fit.labels.emplace_back(name);
    } else {
        for (const auto& op : hartford_subbasis(n)) {
            fit.labels.push_back(op.name);
            span.push_back(op.matrix);
        }
    }
    const auto m = static_cast<Eigen::Index>(span.size());
    Matrix gram(m, m);
    Vector rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        rhs[i] = span[i].cwiseProduct(target).sum();
        for (Eigen::Index j = 0; j <= i; ++j)
            gram(i, j) = gram(j, i) = span[i].cwiseProduct(span[j]).sum();
    }
    const Vector coef = gram.completeOrthogonalDecomposition().solve(rhs);
    Matrix fitted = Matrix::Zero(target.rows(), target.cols());
    for (Eigen::Index i = 0; i < m; ++i)
        fitted += coef[i] * span[i];
    fit.coefficients.assign(coef.data(), coef.data() + coef.size());
    fit.residual = (target - fitted).norm();
    return fit;
}

}  // namespace permeq
