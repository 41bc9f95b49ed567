from decimal import Decimal, getcontext

import numpy as np
import pytest

from proxvr.linalg import SparseVec
from proxvr.problem import Dataset, LossKind, Problem, Regularizer, SparseExample


def prox_ternary_oracle(y, step, l1, l2):
    """Ternary-search minimizer of 0.5 (z-y)^2 + step (l1 |z| + l2 z^2 / 2).

    Float comparisons go blind once the interval is ~sqrt(eps), so the last
    digits are resolved with 40-digit decimal arithmetic.
    """

    def f_float(z):
        return 0.5 * (z - y) ** 2 + step * (l1 * abs(z) + 0.5 * l2 * z * z)

    lo, hi = min(0.0, y) - 1.0, max(0.0, y) + 1.0
    while hi - lo > 1e-6:
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if f_float(m1) <= f_float(m2):
            hi = m2
        else:
            lo = m1
    getcontext().prec = 40
    yd, sd, l1d, l2d = Decimal(y), Decimal(step), Decimal(l1), Decimal(l2)

    def f_dec(z):
        return (z - yd) ** 2 / 2 + sd * (l1d * abs(z) + l2d * z * z / 2)

    lo_d, hi_d = Decimal(lo), Decimal(hi)
    width = Decimal("1e-12")
    while hi_d - lo_d > width:
        third = (hi_d - lo_d) / 3
        m1 = lo_d + third
        m2 = hi_d - third
        if f_dec(m1) <= f_dec(m2):
            hi_d = m2
        else:
            lo_d = m1
    return float((lo_d + hi_d) / 2)


def random_sparse_vec(rng, d, density=0.6):
    """Random canonical sparse vector with at least one entry."""
    nnz = max(1, int(round(density * d)))
    idx = np.sort(rng.choice(d, size=nnz, replace=False))
    vals = rng.standard_normal(nnz)
    vals[vals == 0.0] = 1.0
    return SparseVec(idx, vals, d)


def random_dataset(rng, n, d, density=0.6):
    """Random +-1 labelled dataset; every row non-empty."""
    examples = [
        SparseExample(random_sparse_vec(rng, d, density), float(rng.choice([-1.0, 1.0])))
        for _ in range(n)
    ]
    return Dataset.build(examples, d)


def make_problem(rng, n, d, kind=LossKind.LOGISTIC, lambda1=1e-3, lambda2=0.1, density=0.6):
    return Problem(random_dataset(rng, n, d, density), kind, Regularizer(lambda1, lambda2))


def one_dim_problem(lambda1=0.3):
    """P(x) = (x - 1)^2 / 2 + lambda1 |x|; minimizer soft(1, lambda1)."""
    ex = SparseExample(SparseVec(np.array([0]), np.array([1.0]), 1), 1.0)
    return Problem(Dataset.build([ex], 1), LossKind.LEAST_SQUARES, Regularizer(lambda1, 0.0))


def separable_quadratic(c):
    """P(x) = sum_j (x_j - c_j)^2 / 2 built from d scaled unit-vector rows."""
    c = np.asarray(c, dtype=float)
    d = c.size
    s = np.sqrt(float(d))
    examples = [
        SparseExample(SparseVec(np.array([j]), np.array([s]), d), s * c[j])
        for j in range(d)
    ]
    return Problem(Dataset.build(examples, d), LossKind.LEAST_SQUARES, Regularizer(0.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
