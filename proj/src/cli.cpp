#include "permeq/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "permeq/basis.hpp"
#include "permeq/layers.hpp"
#include "permeq/oracle.hpp"
#include "permeq/partitions.hpp"
#include "permeq/train.hpp"

namespace permeq::cli {

namespace {

using nlohmann::json;

/// Reads and writes CLI11 configuration as JSON. Nested objects configure
/// subcommands: {"seed": 3, "experiment": {"task": ["trace"], "epochs": 10}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool,
                          std::string) const override
    {
        return describe(app, default_also).dump();
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override
    {
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw CLI::ConversionError("config is not valid JSON: " + std::string(e.what()));
        }
        if (!doc.is_object())
            throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        flatten(doc, {}, items);
        return items;
    }

private:
    static json describe(const CLI::App* app, bool default_also)
    {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames().front() == "help" ||
                opt->get_lnames().front() == "config")
                continue;
            const std::string& name = opt->get_lnames().front();
            std::vector<std::string> values = opt->results();
            if (values.empty() && default_also && !opt->get_default_str().empty())
                values = split_default(opt->get_default_str());
            if (values.empty())
                continue;
            if (opt->get_expected_max() > 1 || values.size() > 1)
                j[name] = values;
            else
                j[name] = values.front();
        }
        for (const CLI::App* sub : app->get_subcommands({}))
            if (sub->parsed())
                j[sub->get_name()] = describe(sub, default_also);
        return j;
    }

    // CLI11 renders vector defaults as "[a,b]".
    static std::vector<std::string> split_default(const std::string& s)
    {
        if (s.size() < 2 || s.front() != '[' || s.back() != ']')
            return {s};
        std::vector<std::string> out;
        std::istringstream in(s.substr(1, s.size() - 2));
        for (std::string item; std::getline(in, item, ',');)
            out.push_back(item);
        return out;
    }

    static void flatten(const json& obj, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items)
    {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_object()) {
                auto next = parents;
                next.push_back(key);
                flatten(value, next, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value)
                    item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }

    static std::string scalar(const json& v)
    {
        if (v.is_string())
            return v.get<std::string>();
        if (v.is_boolean())
            return v.get<bool>() ? "true" : "false";
        if (v.is_number())
            return v.dump();
        throw CLI::ConversionError("unsupported config value " + v.dump());
    }
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    std::string output;
    std::string format = "auto";
};

/// Destination for results: --output file or the caller's stream.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback)
        : stream_(&fallback)
    {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_)
                throw UsageError("cannot open output file '" + path + "'");
            stream_ = &file_;
        }
    }
    std::ostream& get() { return *stream_; }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

std::string format_or(const Globals& g, const std::string& fallback,
                      std::initializer_list<const char*> allowed, const char* command)
{
    const std::string f = g.format == "auto" ? fallback : g.format;
    for (const char* a : allowed)
        if (f == a)
            return f;
    std::string list;
    for (const char* a : allowed)
        list += list.empty() ? a : std::string("|") + a;
    throw UsageError(std::string(command) + " supports --format " + list + ", got '" + f + "'");
}

std::string csv_quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

std::size_t thread_count()
{
    if (const char* env = std::getenv("PERMEQ_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw UsageError("PERMEQ_THREADS must be a positive integer, got '" +
                             std::string(env) + "'");
        return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// partitions

struct PartitionsArgs {
    int order = 0;
};

int cmd_partitions(const PartitionsArgs& a, const Globals& g, std::ostream& out)
{
    const std::string format = format_or(g, "text", {"text", "csv", "json"}, "partitions");
    const PartitionTable table(a.order);
    Sink sink(g.output, out);
    auto& os = sink.get();
    if (format == "json") {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["order"] = a.order;
        j["count"] = table.size();
        j["partitions"] = json::array();
        for (const auto& p : table.partitions())
            j["partitions"].push_back(
                {{"rgs", p.rgs_string()}, {"blocks", p.block_string()}, {"num_blocks", p.num_blocks()}});
        os << j.dump(2) << "\n";
    } else if (format == "csv") {
        os << "index,rgs,blocks,num_blocks\n";
        for (std::size_t i = 0; i < table.size(); ++i)
            os << i << "," << table[i].rgs_string() << "," << csv_quote(table[i].block_string())
               << "," << table[i].num_blocks() << "\n";
    } else {
        for (const auto& p : table.partitions())
            os << p.rgs_string() << " " << p.block_string() << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// basis

struct BasisArgs {
    int k = 2;
    std::optional<int> l;
    std::size_t n = 5;
    bool invariant = false;
};

int cmd_basis(const BasisArgs& a, const Globals& g, std::ostream& out)
{
    const std::string format = format_or(g, "csv", {"csv", "json"}, "basis");
    const int l = a.invariant ? 0 : a.l.value_or(a.k);
    if (a.invariant && a.l)
        throw UsageError("basis: --invariant and --l are mutually exclusive");
    if (int_pow(a.n, a.k + l) > 4'000'000)
        throw UsageError("basis: n^(k+l) = " + std::to_string(int_pow(a.n, a.k + l)) +
                         " entries is too large to list (limit 4e6)");
    const auto basis = mixed_basis(a.k, l, a.n);
    const std::size_t out_size = int_pow(a.n, l);
    Sink sink(g.output, out);
    auto& os = sink.get();
    // Flat index (a, b) with input positions first: row b, column a of the operator.
    auto entry = [out_size](std::size_t flat) {
        return std::pair{flat % out_size, flat / out_size};
    };
    if (format == "json") {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["k"] = a.k;
        j["l"] = l;
        j["n"] = a.n;
        j["rows"] = out_size;
        j["cols"] = int_pow(a.n, a.k);
        j["elements"] = json::array();
        for (std::size_t i = 0; i < basis.size(); ++i) {
            json e = {{"index", i},
                      {"rgs", basis[i].partition().rgs_string()},
                      {"blocks", basis[i].partition().block_string()},
                      {"nonzeros", basis[i].nonzeros()}};
            json entries = json::array();
            for (std::size_t flat : basis[i].coordinates()) {
                const auto [row, col] = entry(flat);
                entries.push_back({row, col});
            }
            e["entries"] = std::move(entries);
            j["elements"].push_back(std::move(e));
        }
        os << j.dump() << "\n";
        return kExitOk;
    }
    os << "element,rgs,blocks,row,col\n";
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const std::string prefix = std::to_string(i) + "," + basis[i].partition().rgs_string() +
                                   "," + csv_quote(basis[i].partition().block_string()) + ",";
        for (std::size_t flat : basis[i].coordinates()) {
            const auto [row, col] = entry(flat);
            os << prefix << row << "," << col << "\n";
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
    std::string suite = "all";
    std::optional<std::size_t> n;
    std::optional<int> k;
};

struct Verdict {
    std::string suite;
    std::string check;
    json params;
    json value;
    json expected;
    bool pass = false;
    json details = json::object();
};

std::vector<Verdict> suite_dims(const VerifyArgs& a)
{
    std::vector<Verdict> v;
    auto dim_check = [&](std::size_t n, int l) {
        const ProjectorStats s = projector_stats(averaging_projector(n, l));
        const auto expected = effective_class_count(l, n);
        Verdict r{"dims", "fixed_subspace_dim", {{"n", n}, {"order", l}}, s.rank, expected,
                  s.rank == expected && std::abs(s.trace - static_cast<double>(s.rank)) < 1e-6 &&
                      s.idempotence_error < 1e-10 && s.symmetry_error < 1e-10};
        r.details = {{"trace", s.trace},
                     {"idempotence_error", s.idempotence_error},
                     {"symmetry_error", s.symmetry_error},
                     {"bell", bell(l)}};
        v.push_back(std::move(r));
    };
    if (a.n || a.k) {
        if (!a.n || !a.k)
            throw UsageError("verify --suite dims needs both --n and --k (or neither)");
        dim_check(*a.n, *a.k);
        return v;
    }
    for (int l = 1; l <= 4; ++l)
        for (std::size_t n = static_cast<std::size_t>(l); n <= 5; ++n)
            dim_check(n, l);
    dim_check(2, 3);
    struct LayerCase {
        std::size_t n;
        int k;
        std::size_t d, d_out;
        bool equivariant;
    };
    const LayerCase cases[] = {{3, 1, 2, 2, false}, {3, 2, 1, 1, false}, {3, 1, 1, 1, true},
                               {3, 1, 2, 2, true},  {4, 2, 2, 1, true}};
    for (const auto& c : cases) {
        const auto r = check_layer_dims_with_features(c.n, c.k, c.d, c.d_out, c.equivariant);
        Verdict verdict{"dims",
                        c.equivariant ? "equivariant_layer_dims" : "invariant_layer_dims",
                        {{"n", c.n}, {"k", c.k}, {"d", c.d}, {"d_out", c.d_out}},
                        {{"weights", r.linear_trace}, {"bias", r.bias_trace}},
                        {{"weights", r.linear_expected}, {"bias", r.bias_expected}},
                        r.passed};
        verdict.details = {{"max_projector_error", r.max_projector_error}};
        v.push_back(std::move(verdict));
    }
    return v;
}

std::vector<Verdict> suite_basis(const VerifyArgs& a)
{
    std::vector<std::pair<std::size_t, int>> grid{{3, 2}, {4, 2}, {3, 3}, {2, 4}};
    if (a.n || a.k) {
        if (!a.n || !a.k)
            throw UsageError("verify --suite basis needs both --n and --k (or neither)");
        grid = {{*a.n, *a.k}};
    }
    std::vector<Verdict> v;
    for (auto [n, l] : grid) {
        const auto c = check_basis_spans_fixed_space(n, l);
        Verdict r{"basis", "basis_spans_fixed_space", {{"n", n}, {"order", l}}, c.stacked_rank,
                  c.fixed_dim, c.passed};
        r.details = {{"nonzero_elements", c.nonzero_elements},
                     {"max_fixed_residual", c.max_fixed_residual},
                     {"max_inner_product", c.max_inner_product}};
        v.push_back(std::move(r));
    }
    return v;
}

std::vector<Verdict> suite_trace_moment(const VerifyArgs& a)
{
    std::vector<std::pair<std::size_t, int>> grid;
    if (a.n || a.k) {
        if (!a.n || !a.k)
            throw UsageError("verify --suite trace-moment needs both --n and --k (or neither)");
        grid = {{*a.n, *a.k}};
    } else {
        for (int k = 1; k <= 4; ++k)
            for (std::size_t n = static_cast<std::size_t>(k); n <= 7; ++n)
                grid.emplace_back(n, k);
        grid.emplace_back(2, 3);
    }
    std::vector<Verdict> v;
    for (auto [n, k] : grid) {
        const Rational m = trace_moment(n, k);
        const auto expected = effective_class_count(k, n);
        Verdict r{"trace-moment", "trace_moment", {{"n", n}, {"k", k}},
                  m.is_integer() ? json(m.num) : json(m.to_string()), expected,
                  m.is_integer() && static_cast<std::uint64_t>(m.num) == expected};
        r.details = {{"bell", bell(k)}};
        v.push_back(std::move(r));
    }
    return v;
}

std::vector<Verdict> suite_multiset(const VerifyArgs&)
{
    struct Case {
        std::size_t n1, n2;
        int k1, k2, l1, l2;
    };
    const Case cases[] = {{3, 3, 1, 1, 1, 1}, {3, 3, 2, 0, 0, 0}, {2, 3, 1, 1, 0, 0},
                          {3, 2, 1, 1, 1, 0}, {2, 2, 1, 1, 1, 1}};
    std::vector<Verdict> v;
    for (const auto& c : cases) {
        const auto r = check_multiset_dims(c.n1, c.n2, c.k1, c.k2, c.l1, c.l2);
        Verdict verdict{"multiset", "multiset_dims",
                        {{"n", {c.n1, c.n2}}, {"k", {c.k1, c.k2}}, {"l", {c.l1, c.l2}}},
                        r.trace, r.expected, r.passed};
        verdict.details = {{"max_projector_error", r.max_projector_error}};
        v.push_back(std::move(verdict));
    }
    return v;
}

int cmd_verify(const VerifyArgs& a, const Globals& g, std::ostream& out)
{
    const std::string format = format_or(g, "json", {"json", "csv"}, "verify");
    std::vector<Verdict> verdicts;
    auto add = [&](std::vector<Verdict> more) {
        for (auto& v : more)
            verdicts.push_back(std::move(v));
    };
    const bool all = a.suite == "all";
    if (all && (a.n || a.k))
        throw UsageError("verify --suite all runs fixed grids; --n/--k need a single suite");
    if (all || a.suite == "dims")
        add(suite_dims(a));
    if (all || a.suite == "basis")
        add(suite_basis(a));
    if (all || a.suite == "trace-moment")
        add(suite_trace_moment(a));
    if (all || a.suite == "multiset")
        add(suite_multiset(a));

    Sink sink(g.output, out);
    auto& os = sink.get();
    if (format == "csv")
        os << "suite,check,params,value,expected,pass\n";
    bool ok = true;
    for (const auto& v : verdicts) {
        ok = ok && v.pass;
        if (format == "csv") {
            os << v.suite << "," << v.check << "," << csv_quote(v.params.dump()) << ","
               << csv_quote(v.value.dump()) << "," << csv_quote(v.expected.dump()) << ","
               << (v.pass ? "true" : "false") << "\n";
        } else {
            json j = {{"schema_version", kSchemaVersion},
                      {"suite", v.suite},
                      {"check", v.check},
                      {"params", v.params},
                      {"value", v.value},
                      {"expected", v.expected},
                      {"pass", v.pass},
                      {"details", v.details}};
            os << j.dump() << "\n";
        }
    }
    return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
    std::string task;
    std::string basis = "full";
    std::size_t n = 20;
};

int cmd_fit(const FitArgs& a, const Globals& g, std::ostream& out)
{
    const std::string format = format_or(g, "text", {"text", "csv", "json"}, "fit");
    const TaskKind task = parse_task_kind(a.task);
    if (task == TaskKind::max_singular_vector)
        throw UsageError("fit: max_singular_vector is not linear; use experiment");
    const FitResult fit = least_squares_fit(task, parse_basis_kind(a.basis), a.n);
    Sink sink(g.output, out);
    auto& os = sink.get();
    if (format == "json") {
        json j = {{"schema_version", kSchemaVersion},
                  {"task", a.task},
                  {"basis", a.basis},
                  {"n", a.n},
                  {"labels", fit.labels},
                  {"coefficients", fit.coefficients},
                  {"residual", fit.residual}};
        os << j.dump(2) << "\n";
    } else if (format == "csv") {
        os << "label,coefficient\n";
        for (std::size_t i = 0; i < fit.labels.size(); ++i)
            os << csv_quote(fit.labels[i]) << "," << fmt(fit.coefficients[i]) << "\n";
        os << "residual," << fmt(fit.residual) << "\n";
    } else {
        for (std::size_t i = 0; i < fit.labels.size(); ++i)
            os << std::left << std::setw(28) << fit.labels[i] << " " << fmt(fit.coefficients[i])
               << "\n";
        os << "residual " << fmt(fit.residual) << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentArgs {
    std::vector<std::string> tasks{"sym_projection"};
    std::vector<std::string> bases{"full"};
    std::size_t n = 20;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::vector<std::size_t> depths;
    std::vector<double> lrs;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> width;
    std::optional<double> final_lr_fraction;
    std::vector<std::size_t> eval_sizes;
    bool unnormalized = false;
    bool timing = false;
    std::string summary;
};

int cmd_experiment(const ExperimentArgs& a, const Globals& g, std::ostream& out,
                   std::ostream& err)
{
    const std::string format = format_or(g, "csv", {"csv", "json"}, "experiment");
    std::vector<TaskKind> tasks;
    for (const auto& t : a.tasks) {
        if (t == "all") {
            tasks = {TaskKind::sym_projection, TaskKind::diag_extraction,
                     TaskKind::max_singular_vector, TaskKind::trace};
            break;
        }
        tasks.push_back(parse_task_kind(t));
    }
    std::vector<BasisKind> bases;
    for (const auto& b : a.bases) {
        if (b == "both") {
            bases = {BasisKind::full, BasisKind::hartford};
            break;
        }
        bases.push_back(parse_basis_kind(b));
    }
    const std::size_t threads = thread_count();
    std::vector<ExperimentReport> reports;
    for (TaskKind t : tasks) {
        ExperimentPreset preset = task_preset(t);
        TrainConfig c = preset.config;
        ExperimentGrid grid = preset.grid;
        if (!a.depths.empty())
            grid.depths = a.depths;
        if (!a.lrs.empty())
            grid.learning_rates = a.lrs;
        grid.eval_sizes = a.eval_sizes;
        if (a.epochs)
            c.epochs = *a.epochs;
        if (a.batch_size)
            c.batch_size = *a.batch_size;
        if (a.width)
            c.width = *a.width;
        if (a.final_lr_fraction)
            c.adam.final_lr_fraction = *a.final_lr_fraction;
        c.normalized = !a.unnormalized;
        c.seed = g.seed;
        TaskSpec spec{t, a.n, a.n_train, a.n_test, g.seed};
        for (BasisKind b : bases) {
            const auto start = std::chrono::steady_clock::now();
            reports.push_back(run_experiment(spec, c, b, grid, threads));
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            const auto& r = reports.back();
            err << "experiment " << to_string(t) << "/" << to_string(b) << ": best "
                << to_string(task_loss(t)) << " " << fmt(r.best_run().test_loss)
                << " (depth " << r.best_run().depth << ", lr " << fmt(r.best_run().lr)
                << "), trivial " << fmt(r.baseline) << ", " << fmt(elapsed.count()) << " s\n";
        }
    }
    {
        Sink sink(g.output, out);
        if (format == "json")
            sink.get() << experiment_summary_json(reports, a.timing) << "\n";
        else
            write_experiment_csv(sink.get(), reports, a.timing);
    }
    if (!a.summary.empty()) {
        std::ofstream s(a.summary, std::ios::binary);
        if (!s)
            throw UsageError("cannot open summary file '" + a.summary + "'");
        s << experiment_summary_json(reports, a.timing) << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    int k = 2;
    std::size_t n = 64;
    std::size_t d = 8;
    std::size_t reps = 5;
};

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int cmd_bench(const BenchArgs& a, const Globals& g, std::ostream& out)
{
    const std::string format = format_or(g, "json", {"json", "csv"}, "bench");
    if (a.reps == 0)
        throw UsageError("bench: --reps must be at least 1");
    if (a.k != 2)
        throw UsageError("bench: the fast path exists for order-2 layers only (--k 2)");
    std::mt19937_64 rng(g.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    EquivariantLayer layer(2, 2, a.d, a.d, BasisKind::full, true);
    for (double& w : layer.weights())
        w = u(rng);
    for (double& b : layer.bias())
        b = u(rng);
    Tensor x(Shape{2, a.n, a.d});
    for (double& v : x.data())
        v = u(rng);

    using clock = std::chrono::steady_clock;
    std::vector<double> fast_times, generic_times;
    Tensor fast, generic;
    for (std::size_t r = 0; r < a.reps; ++r) {
        auto t0 = clock::now();
        fast = apply_equivariant_fast(layer, x);
        auto t1 = clock::now();
        generic = apply_equivariant(layer, x);
        auto t2 = clock::now();
        fast_times.push_back(std::chrono::duration<double>(t1 - t0).count());
        generic_times.push_back(std::chrono::duration<double>(t2 - t1).count());
    }
    double diff = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < fast.data().size(); ++i) {
        diff = std::max(diff, std::abs(fast[i] - generic[i]));
        scale = std::max(scale, std::abs(generic[i]));
    }
    const double fast_median = median(fast_times);
    const double generic_median = median(generic_times);
    const double speedup = generic_median / fast_median;
    const bool identical = diff <= 1e-10 * scale;
    const bool speed_ok = a.n < 64 || speedup >= 5.0;

    Sink sink(g.output, out);
    auto& os = sink.get();
    if (format == "csv") {
        os << "k,n,d,reps,fast_median_s,generic_median_s,speedup,max_abs_diff,identical,"
              "speedup_ok,seed\n"
           << a.k << "," << a.n << "," << a.d << "," << a.reps << "," << fmt(fast_median) << ","
           << fmt(generic_median) << "," << fmt(speedup) << "," << fmt(diff) << ","
           << (identical ? "true" : "false") << "," << (speed_ok ? "true" : "false") << ","
           << g.seed << "\n";
    } else {
        json j = {{"schema_version", kSchemaVersion},
                  {"k", a.k},
                  {"n", a.n},
                  {"d", a.d},
                  {"reps", a.reps},
                  {"seed", g.seed},
                  {"fast_median_s", fast_median},
                  {"generic_median_s", generic_median},
                  {"speedup", speedup},
                  {"max_abs_diff", diff},
                  {"identical", identical},
                  {"speedup_required", a.n >= 64 ? 5.0 : 0.0},
                  {"speedup_ok", speed_ok}};
        os << j.dump(2) << "\n";
    }
    return identical && speed_ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Permutation-equivariant layers: bases, verification and experiments", "permeq"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with option values; flags on the command line win");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
    app.add_option("--output", g.output, "Write results to this file instead of stdout");
    app.add_option("--format", g.format, "Output format (text, csv or json; default per command)")
        ->check(CLI::IsMember({"auto", "text", "csv", "json"}))
        ->capture_default_str();

    PartitionsArgs pa;
    auto* partitions = app.add_subcommand("partitions", "List set partitions of an l-set");
    partitions->add_option("--order", pa.order, "Set size l")->required()->check(CLI::Range(0, kMaxPartitionOrder));

    BasisArgs ba;
    auto* basis = app.add_subcommand("basis", "Dump the indicator basis of linear maps between order-k and order-l tensors");
    basis->add_option("--k", ba.k, "Input order")->check(CLI::Range(0, 6))->capture_default_str();
    basis->add_option("--l", ba.l, "Output order (default k)")->check(CLI::Range(0, 6));
    basis->add_option("--n", ba.n, "Node count")->check(CLI::Range(1, 1000))->capture_default_str();
    basis->add_flag("--invariant", ba.invariant, "Invariant basis (output order 0)");

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "Brute-force verification over all permutations");
    verify->add_option("--suite", va.suite, "Suite to run")
        ->check(CLI::IsMember({"dims", "basis", "trace-moment", "multiset", "all"}))
        ->capture_default_str();
    verify->add_option("--n", va.n, "Node count for a single check")->check(CLI::Range(1, 7));
    verify->add_option("--k", va.k, "Order or moment for a single check")->check(CLI::Range(0, 16));

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Least-squares fit of a linear task over the layer span");
    fit->add_option("--task", fa.task, "sym_projection, diag_extraction or trace")->required();
    fit->add_option("--basis", fa.basis, "full or hartford")
        ->check(CLI::IsMember({"full", "hartford"}))
        ->capture_default_str();
    fit->add_option("--n", fa.n, "Node count")->check(CLI::Range(1, 24))->capture_default_str();

    ExperimentArgs ea;
    auto* experiment = app.add_subcommand("experiment", "Train networks on synthetic graph tasks");
    experiment->add_option("--task", ea.tasks, "Tasks (comma separated, or all)")
        ->delimiter(',')
        ->check(CLI::IsMember({"sym_projection", "diag_extraction", "max_singular_vector",
                               "trace", "all"}))
        ->capture_default_str();
    experiment->add_option("--basis", ea.bases, "full, hartford or both")
        ->delimiter(',')
        ->check(CLI::IsMember({"full", "hartford", "both"}))
        ->capture_default_str();
    experiment->add_option("--n", ea.n, "Node count")->check(CLI::Range(1, 200))->capture_default_str();
    experiment->add_option("--n-train", ea.n_train, "Training samples")->check(CLI::Range(1, 1000000))->capture_default_str();
    experiment->add_option("--n-test", ea.n_test, "Test samples")->check(CLI::Range(1, 1000000))->capture_default_str();
    experiment->add_option("--depths", ea.depths, "Grid of equivariant layer counts")
        ->delimiter(',')
        ->check(CLI::Range(1, 4));
    experiment->add_option("--lrs", ea.lrs, "Grid of Adam step sizes")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    experiment->add_option("--epochs", ea.epochs, "Epochs per run")->check(CLI::Range(1, 100000));
    experiment->add_option("--batch-size", ea.batch_size, "Minibatch size")->check(CLI::Range(1, 100000));
    experiment->add_option("--width", ea.width, "Hidden channels")->check(CLI::Range(1, 256));
    experiment->add_option("--final-lr-fraction", ea.final_lr_fraction,
                           "Step size at the end of the cosine decay, relative to the initial one")
        ->check(CLI::Range(0.0, 1.0));
    experiment->add_option("--eval-sizes", ea.eval_sizes,
                           "Node counts at which the best network is evaluated without retraining")
        ->delimiter(',')
        ->check(CLI::Range(1, 200));
    experiment->add_flag("--unnormalized", ea.unnormalized, "Use raw class sums instead of averages");
    experiment->add_flag("--timing", ea.timing, "Record wall times (makes the CSV run-dependent)");
    experiment->add_option("--summary", ea.summary, "Also write the JSON summary to this file");

    BenchArgs be;
    auto* bench = app.add_subcommand("bench", "Time the fast and generic order-2 layer paths");
    bench->add_option("--k", be.k, "Tensor order")->capture_default_str();
    bench->add_option("--n", be.n, "Node count")->check(CLI::Range(1, 512))->capture_default_str();
    bench->add_option("--d", be.d, "Channels")->check(CLI::Range(1, 256))->capture_default_str();
    bench->add_option("--reps", be.reps, "Repetitions")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    err << "resolved config: " << app.config_to_str(true, false) << "\n";
    try {
        if (partitions->parsed())
            return cmd_partitions(pa, g, out);
        if (basis->parsed())
            return cmd_basis(ba, g, out);
        if (verify->parsed())
            return cmd_verify(va, g, out);
        if (fit->parsed())
            return cmd_fit(fa, g, out);
        if (experiment->parsed())
            return cmd_experiment(ea, g, out, err);
        if (bench->parsed())
            return cmd_bench(be, g, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::length_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    err << "error: no subcommand given\n";
    return kExitUsage;
}

}  // namespace permeq::cli
