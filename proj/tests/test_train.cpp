#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "permeq/autodiff.hpp"
#include "permeq/train.hpp"

using namespace permeq;
using namespace permeq::testing;

TEST_CASE("task data is a deterministic function of the seed")
{
    const TaskSpec t{TaskKind::diag_extraction, 5, 6, 3, 11};
    const Dataset a = gen_task_data(t);
    const Dataset b = gen_task_data(t);
    REQUIRE(a.train.inputs.size() == 6);
    REQUIRE(a.test.inputs.size() == 3);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a.train.inputs[i] == b.train.inputs[i]);
        CHECK(a.train.targets[i] == b.train.targets[i]);
    }
    TaskSpec other = t;
    other.seed = 12;
    CHECK_FALSE(gen_task_data(other).train.inputs[0] == a.train.inputs[0]);
}

TEST_CASE("matrix task targets")
{
    Matrix a(3, 3);
    a << 1, 2, 3, 4, 5, 6, 7, 8, 9;
    const Matrix sym = task_target(TaskKind::sym_projection, a).to_matrix();
    CHECK(sym(0, 1) == 3.0);
    CHECK(sym(2, 0) == 5.0);
    CHECK(sym(1, 1) == 5.0);
    const Matrix diag = task_target(TaskKind::diag_extraction, a).to_matrix();
    CHECK(diag(2, 2) == 9.0);
    CHECK(diag(0, 2) == 0.0);
    const Tensor tr = task_target(TaskKind::trace, a);
    CHECK(tr.order() == 0);
    CHECK(tr[0] == 15.0);
}

TEST_CASE("power iteration finds the top right singular vector")
{
    Matrix a(2, 2);
    a << 3, 0, 0, 1;
    const Vector v = max_right_singular_vector(a);
    CHECK(std::abs(v(0)) == doctest::Approx(1.0));
    CHECK(std::abs(v(1)) == doctest::Approx(0.0).epsilon(1e-10));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Matrix m(6, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = g(rng);
    const Vector w = max_right_singular_vector(m);
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
    CHECK(std::abs(w.dot(svd.matrixV().col(0))) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("singular value sampling keeps a gap of at least one half")
{
    const Dataset d = gen_task_data({TaskKind::max_singular_vector, 6, 20, 5, 4});
    for (const Tensor& x : d.train.inputs) {
        Eigen::JacobiSVD<Matrix> svd(x.to_matrix());
        const Vector s = svd.singularValues();
        CHECK(s(0) - s(1) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(s(1) <= 0.5 + 1e-9);
    }
    for (const Tensor& y : d.train.targets) {
        CHECK(y.order() == 1);
        double norm = 0.0;
        for (double v : y.data())
            norm += v * v;
        CHECK(norm == doctest::Approx(1.0));
    }
}

TEST_CASE("least-squares fits of the linear tasks")
{
    const auto sym = least_squares_fit(TaskKind::sym_projection, BasisKind::full, 7);
    REQUIRE(sym.labels.size() == 15);
    CHECK(sym.labels[0] == "identity");
    CHECK(sym.coefficients[0] == doctest::Approx(0.5));
    CHECK(sym.coefficients[1] == doctest::Approx(0.5));
    CHECK(sym.residual < 1e-10);

    const auto diag = least_squares_fit(TaskKind::diag_extraction, BasisKind::full, 7);
    CHECK(diag.coefficients[2] == doctest::Approx(1.0));
    CHECK(diag.residual < 1e-10);

    const auto trace = least_squares_fit(TaskKind::trace, BasisKind::full, 7);
    CHECK(trace.residual < 1e-10);

    // The diagonal projector and the symmetrizer lie outside the Hartford span.
    const auto hartford = least_squares_fit(TaskKind::diag_extraction, BasisKind::hartford, 20);
    REQUIRE(hartford.labels.size() == 4);
    CHECK(hartford.residual > 1.0);
    const auto hartford_sym = least_squares_fit(TaskKind::sym_projection, BasisKind::hartford, 6);
    CHECK(hartford_sym.residual > 0.5);
}

TEST_CASE("trace layer at the exact solution has zero loss and zero gradient")
{
    NetworkSpec spec;
    spec.widths = {1};
    spec.invariant_head = true;
    spec.pool = PoolMode::sum;
    spec.dense_widths = {1};
    spec.normalized = false;
    Network net(spec);
    // The all-equal class copies the diagonal; mean pooling of the diagonal
    // class gives trace / n, which the dense head scales back by n.
    const std::size_t n = 4;
    for (auto block : net.parameter_blocks())
        for (double& v : block)
            v = 0.0;
    REQUIRE(enumerate_partitions(4)[0].num_blocks() == 1);
    net.equivariant()[0].weight(0, 0, 0) = 1.0;
    REQUIRE(enumerate_partitions(2)[0].num_blocks() == 1);
    net.dense()[0].weights[0] = static_cast<double>(n);

    std::mt19937_64 rng(5);
    std::vector<Tensor> xs, ys;
    for (int s = 0; s < 4; ++s) {
        const Tensor x = random_tensor({2, n, 1}, rng, 0.0, 10.0);
        xs.push_back(x);
        ys.push_back(task_target(TaskKind::trace, x.to_matrix()));
    }
    const auto r = grad(net, xs, ys, LossSpec{LossKind::mse});
    CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(r.grads.squared_norm() < 1e-18);
}

TEST_CASE("training lowers the loss and the trivial baseline matches its definition")
{
    const TaskSpec t{TaskKind::sym_projection, 5, 64, 32, 0};
    const Dataset data = gen_task_data(t);
    TrainConfig c;
    c.epochs = 15;
    c.batch_size = 8;
    c.adam.lr = 1e-2;
    const TrainResult r = train_network(t, data, c, BasisKind::full);
    REQUIRE(r.epoch_losses.size() == 15);
    CHECK(r.epoch_losses.back() < 0.1 * r.epoch_losses.front());
    CHECK(r.test_loss < trivial_baseline(data, LossKind::mse));

    // Baseline: predict the mean training target everywhere.
    const std::size_t entries = t.n * t.n;
    std::vector<double> mean(entries, 0.0);
    for (const Tensor& y : data.train.targets)
        for (std::size_t i = 0; i < entries; ++i)
            mean[i] += y[i] / static_cast<double>(data.train.targets.size());
    double mse = 0.0;
    for (const Tensor& y : data.test.targets)
        for (std::size_t i = 0; i < entries; ++i)
            mse += (y[i] - mean[i]) * (y[i] - mean[i]);
    mse /= static_cast<double>(entries * data.test.targets.size());
    CHECK(trivial_baseline(data, LossKind::mse) == doctest::Approx(mse).epsilon(1e-12));
}

TEST_CASE("experiment results do not depend on the thread count")
{
    const TaskSpec t{TaskKind::diag_extraction, 4, 24, 12, 2};
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 6;
    ExperimentGrid grid;
    grid.depths = {1, 2};
    grid.learning_rates = {1e-2, 1e-3};
    grid.eval_sizes = {3};
    const auto one = run_experiment(t, c, BasisKind::full, grid, 1);
    const auto three = run_experiment(t, c, BasisKind::full, grid, 3);
    std::ostringstream a, b;
    write_experiment_csv(a, {one}, false);
    write_experiment_csv(b, {three}, false);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("task,basis,depth,n,eval_n,n_train,n_test,lr,epochs,train_loss,loss,"
                        "baseline,seed,wall_time\n",
                        0) == 0);
    CHECK(one.runs.size() == 4);
    CHECK(one.generalization.size() == 1);
}

TEST_CASE("adam decays the step size along a half cosine")
{
    Network net(task_network(TaskKind::sym_projection, 1, 1, BasisKind::full));
    AdamConfig cfg;
    cfg.lr = 0.1;
    cfg.final_lr_fraction = 0.01;
    Adam adam(net, cfg, 10);
    CHECK(adam.current_lr() == doctest::Approx(0.1));
    Gradients g = Gradients::zeros_like(net);
    for (int i = 0; i < 10; ++i)
        adam.step(net, g);
    CHECK(adam.current_lr() == doctest::Approx(0.001));
}

TEST_CASE("full-batch training of a depth-1 layer never increases the loss")
{
    const TaskSpec t{TaskKind::diag_extraction, 5, 40, 10, 9};
    const Dataset data = gen_task_data(t);
    TrainConfig c;
    c.epochs = 30;
    c.batch_size = t.n_train;
    c.adam.lr = 1e-3;
    const TrainResult r = train_network(t, data, c, BasisKind::full);
    for (std::size_t e = 1; e < r.epoch_losses.size(); ++e)
        CHECK(r.epoch_losses[e] <= r.epoch_losses[e - 1]);
}
