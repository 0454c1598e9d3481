#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "permeq/autodiff.hpp"
#include "permeq/layers.hpp"

namespace permeq {

enum class TaskKind { sym_projection, diag_extraction, max_singular_vector, trace };

std::string_view to_string(TaskKind t);
TaskKind parse_task_kind(std::string_view s);

/// Equivariant tasks map a matrix to a matrix (or to a vector for
/// max_singular_vector); trace is invariant.
bool task_is_invariant(TaskKind t);
LossKind task_loss(TaskKind t);

struct TaskSpec {
    TaskKind kind = TaskKind::sym_projection;
    std::size_t n = 20;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::uint64_t seed = 0;
};

struct Samples {
    std::vector<Tensor> inputs;
    std::vector<Tensor> targets;
};

struct Dataset {
    Samples train;
    Samples test;
};

/// Train then test samples from one generator seeded with t.seed. Matrix tasks
/// draw entries from U[0, 10]; max_singular_vector draws U diag(s) V^T with
/// s_2..s_n ~ U[0, 0.5], s_1 = max(s_2..s_n) + 0.5 and U, V orthogonal.
Dataset gen_task_data(const TaskSpec& t);

/// Reference target for one input matrix.
Tensor task_target(TaskKind t, const Matrix& a);

/// Unit right singular vector of the largest singular value, by power
/// iteration on A^T A until successive iterates differ by less than `tol`.
Vector max_right_singular_vector(const Matrix& a, double tol = 1e-12,
                                 std::size_t max_iterations = 100000);

/// Architecture used for a task: `depth` equivariant layers of `width`
/// channels (the last equivariant layer of a matrix task has one channel and
/// no activation; max_singular_vector ends in a 2 -> 1 layer), and for trace a
/// mean-pooling head with one dense output.
NetworkSpec task_network(TaskKind t, std::size_t depth, std::size_t width, BasisKind basis,
                         bool normalized = true);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Step size decays along a half cosine from lr to lr * final_lr_fraction.
    double final_lr_fraction = 1.0;
};

class Adam {
public:
    Adam(const Network& net, AdamConfig config, std::size_t total_steps);
    void step(Network& net, const Gradients& g);
    double current_lr() const;
    std::size_t steps() const { return t_; }

private:
    AdamConfig config_;
    std::size_t total_steps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

struct TrainConfig {
    AdamConfig adam;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    std::size_t depth = 1;
    std::size_t width = 8;
    std::uint64_t seed = 0;
    bool normalized = true;
};

struct TrainResult {
    Network net;
    std::vector<double> epoch_losses;  // mean training batch loss per epoch
    double train_loss = 0.0;           // full training set, after training
    double test_loss = 0.0;
};

TrainResult train_network(const TaskSpec& t, const Dataset& data, const TrainConfig& c,
                          BasisKind basis);

/// Loss of predicting the per-entry mean of the training targets on the test set.
double trivial_baseline(const Dataset& data, LossKind loss);

/// Loss of a trained network on freshly generated test data of size n.
double evaluate_at_size(const Network& net, const TaskSpec& t, std::size_t n);

struct ExperimentGrid {
    std::vector<std::size_t> depths{1, 2};
    std::vector<double> learning_rates{1e-2, 1e-3};
    /// Extra node counts at which the best network is evaluated without retraining.
    std::vector<std::size_t> eval_sizes;
};

struct RunRecord {
    std::size_t depth = 0;
    double lr = 0.0;
    std::size_t epochs = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double wall_time = 0.0;  // seconds
};

struct SizeRecord {
    std::size_t n = 0;
    double loss = 0.0;
    double baseline = 0.0;
};

struct ExperimentReport {
    TaskSpec task;
    BasisKind basis = BasisKind::full;
    TrainConfig config;
    double baseline = 0.0;
    std::vector<RunRecord> runs;  // grid order: depth outer, learning rate inner
    std::size_t best = 0;
    std::vector<SizeRecord> generalization;

    const RunRecord& best_run() const { return runs.at(best); }
};

/// Training settings and grid that work for a task at n = 20 on a single core.
struct ExperimentPreset {
    TrainConfig config;
    ExperimentGrid grid;
};
ExperimentPreset task_preset(TaskKind t);

/// Trains one network per grid point (in parallel on `threads` workers; the
/// result does not depend on the thread count) and keeps the best test loss.
ExperimentReport run_experiment(const TaskSpec& t, const TrainConfig& c, BasisKind basis,
                                const ExperimentGrid& grid, std::size_t threads = 1);

/// CSV with header task,basis,depth,n,eval_n,n_train,n_test,lr,epochs,train_loss,
/// loss,baseline,seed,wall_time. wall_time is "na" unless `timing` is set, so
/// that identical runs give identical files.
void write_experiment_csv(std::ostream& out, const std::vector<ExperimentReport>& reports,
                          bool timing);
std::string experiment_summary_json(const std::vector<ExperimentReport>& reports, bool timing);

/// Exact operator of a linear task on row-major vec(A): n^2 x n^2, or 1 x n^2 for trace.
Matrix task_operator(TaskKind t, std::size_t n);

/// Unnormalized matrices (n^2 x n^2) of the 15 order-2 operators.
std::vector<Matrix> order2_op_matrices(std::size_t n);

struct FitResult {
    std::vector<std::string> labels;
    std::vector<double> coefficients;
    double residual = 0.0;  // Frobenius distance of the target from the span
};

/// Least-squares fit of the task operator over the layer span: the 15 order-2
/// operators (full) or the 4 Hartford operators for matrix tasks, the
/// invariant classes (full) or the total sum (hartford) for trace.
FitResult least_squares_fit(TaskKind t, BasisKind basis, std::size_t n);

}  // namespace permeq
