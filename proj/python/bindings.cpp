#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "permeq/basis.hpp"
#include "permeq/cli.hpp"
#include "permeq/layers.hpp"
#include "permeq/oracle.hpp"
#include "permeq/partitions.hpp"
#include "permeq/train.hpp"

namespace py = pybind11;
using namespace permeq;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const Array& a, int order)
{
    if (a.ndim() != order + 1)
        throw std::invalid_argument("expected an array with " + std::to_string(order) +
                                    " node axes and one channel axis");
    const std::size_t n = order == 0 ? 1 : static_cast<std::size_t>(a.shape(0));
    for (int i = 0; i < order; ++i)
        if (static_cast<std::size_t>(a.shape(i)) != n)
            throw std::invalid_argument("all node axes must have the same length");
    const std::size_t features = static_cast<std::size_t>(a.shape(order));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(Shape{order, n, features}, std::move(data));
}

Array array_from_tensor(const Tensor& t)
{
    std::vector<py::ssize_t> shape(static_cast<std::size_t>(t.order()),
                                   static_cast<py::ssize_t>(t.n()));
    shape.push_back(static_cast<py::ssize_t>(t.features()));
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const Array& a, std::size_t expected, const char* what)
{
    if (static_cast<std::size_t>(a.size()) != expected)
        throw std::invalid_argument(std::string(what) + " needs " + std::to_string(expected) +
                                    " values, got " + std::to_string(a.size()));
    return {a.data(), a.data() + a.size()};
}

}  // namespace

PYBIND11_MODULE(_permeq, m)
{
    m.doc() = "Permutation-equivariant linear layers over set partitions";

    m.def("bell", &bell, py::arg("l"));
    m.def(
        "partitions",
        [](int l) {
            std::vector<std::pair<std::string, std::string>> out;
            for (const auto& p : enumerate_partitions(l))
                out.emplace_back(p.rgs_string(), p.block_string());
            return out;
        },
        py::arg("l"), "Set partitions of an l-set as (rgs, blocks) pairs in lexicographic rgs order.");
    m.def("effective_class_count", &effective_class_count, py::arg("l"), py::arg("n"));

    m.def(
        "basis_operators",
        [](int k, int l, std::size_t n) {
            std::vector<Matrix> out;
            for (const auto& b : mixed_basis(k, l, n))
                out.push_back(b.operator_matrix());
            return out;
        },
        py::arg("k"), py::arg("l"), py::arg("n"),
        "Operator matrices (n^l x n^k) of the indicator basis, one per partition of k+l positions.");

    m.def("fixed_subspace_dim", &fixed_subspace_dim, py::arg("n"), py::arg("order"));
    m.def(
        "trace_moment",
        [](std::size_t n, int k) {
            const Rational r = trace_moment(n, k);
            return std::pair{r.num, r.den};
        },
        py::arg("n"), py::arg("k"), "Mean of tr(P)^k over all n x n permutation matrices as (num, den).");

    m.def(
        "order2_ops",
        [](const Matrix& a, bool normalized) { return order2_fast_ops(a, normalized); },
        py::arg("a"), py::arg("normalized") = true);
    m.def("order2_op_names", [] {
        std::vector<std::string> names;
        for (auto s : order2_op_names())
            names.emplace_back(s);
        return names;
    });

    m.def(
        "least_squares_fit",
        [](const std::string& task, const std::string& basis, std::size_t n) {
            const auto r = least_squares_fit(parse_task_kind(task), parse_basis_kind(basis), n);
            py::dict d;
            d["labels"] = r.labels;
            d["coefficients"] = r.coefficients;
            d["residual"] = r.residual;
            return d;
        },
        py::arg("task"), py::arg("basis") = "full", py::arg("n") = 20);

    py::class_<EquivariantLayer>(m, "Layer")
        .def(py::init([](int k, int l, std::size_t d_in, std::size_t d_out, const std::string& basis,
                         bool normalized) {
                 return EquivariantLayer(k, l, d_in, d_out, parse_basis_kind(basis), normalized);
             }),
             py::arg("k"), py::arg("l"), py::arg("d_in") = 1, py::arg("d_out") = 1,
             py::arg("basis") = "full", py::arg("normalized") = false)
        .def_property_readonly("in_order", &EquivariantLayer::in_order)
        .def_property_readonly("out_order", &EquivariantLayer::out_order)
        .def_property(
            "weights",
            [](const EquivariantLayer& layer) {
                return Array(static_cast<py::ssize_t>(layer.weights().size()), layer.weights().data());
            },
            [](EquivariantLayer& layer, const Array& w) {
                layer.weights() = to_vector(w, layer.weights().size(), "weights");
            })
        .def_property(
            "bias",
            [](const EquivariantLayer& layer) {
                return Array(static_cast<py::ssize_t>(layer.bias().size()), layer.bias().data());
            },
            [](EquivariantLayer& layer, const Array& b) {
                layer.bias() = to_vector(b, layer.bias().size(), "bias");
            })
        .def(
            "__call__",
            [](const EquivariantLayer& layer, const Array& x) {
                return array_from_tensor(apply_equivariant(layer, tensor_from_array(x, layer.in_order())));
            },
            py::arg("x"), "Apply to an array of shape (n,)*k + (d_in,).");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run the command-line interface in-process; returns (code, stdout, stderr).");
}
