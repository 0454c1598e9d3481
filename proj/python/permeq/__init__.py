"""Permutation-equivariant linear layers over set partitions."""

from fractions import Fraction

from ._permeq import (
    Layer,
    basis_operators,
    bell,
    effective_class_count,
    fixed_subspace_dim,
    least_squares_fit,
    order2_op_names,
    order2_ops,
    partitions,
    run_cli,
)
from ._permeq import trace_moment as _trace_moment


def trace_moment(n: int, k: int) -> Fraction:
    """Exact mean of tr(P)**k over the n x n permutation matrices."""
    num, den = _trace_moment(n, k)
    return Fraction(num, den)


__all__ = [
    "Layer",
    "basis_operators",
    "bell",
    "effective_class_count",
    "fixed_subspace_dim",
    "least_squares_fit",
    "order2_op_names",
    "order2_ops",
    "partitions",
    "run_cli",
    "trace_moment",
]
