import itertools
import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from conftest import make_problem, prox_ternary_oracle, random_dataset, random_sparse_vec
from proxvr.errors import ContractViolation
from proxvr.linalg import BlockPartition, SparseVec
from proxvr.problem import (
    Dataset,
    LossKind,
    Problem,
    Regularizer,
    SparseExample,
    full_grad,
    loss_grad,
    loss_value,
    minibatch_grad,
    objective_value,
    prox_block,
    prox_elastic,
    vr_gradient,
)

LN2 = 0.6931471805599453
# ln(1 + e^-2), cross-checked below against 60-digit decimal arithmetic
LOG1P_EXP_M2 = 0.1269280110429725


def _ex(pairs, d, b):
    return SparseExample(SparseVec.from_pairs(pairs, d), b)


# ---------------------------------------------------------------- losses


def test_logistic_at_zero_is_ln2():
    ex = _ex([(0, 1.0)], 2, 1.0)
    assert loss_value(LossKind.LOGISTIC, ex, np.zeros(2)) == pytest.approx(LN2, abs=1e-15)


def test_least_squares_perfect_fit_is_zero():
    ex = _ex([(0, 2.0)], 1, 3.0)
    assert loss_value(LossKind.LEAST_SQUARES, ex, np.array([1.5])) == 0.0


def test_logistic_margin_two():
    ex = _ex([(0, 1.0)], 1, 1.0)
    got = loss_value(LossKind.LOGISTIC, ex, np.array([2.0]))
    assert got == pytest.approx(LOG1P_EXP_M2, abs=1e-15)
    getcontext().prec = 60
    oracle = float((1 + Decimal(-2).exp()).ln())
    assert got == pytest.approx(oracle, abs=1e-15)


def test_logistic_large_margin_no_overflow():
    ex = _ex([(0, 1.0)], 1, 1.0)
    for t in (1e3, -1e3):
        v = loss_value(LossKind.LOGISTIC, ex, np.array([t]))
        assert math.isfinite(v)
    assert loss_value(LossKind.LOGISTIC, ex, np.array([-1e3])) == pytest.approx(1e3, rel=1e-12)


def test_logistic_grad_at_zero():
    ex = _ex([(0, 2.0), (2, -1.0)], 3, -1.0)
    g = loss_grad(LossKind.LOGISTIC, ex, np.zeros(3))
    # sigma(0) = 1/2, so grad = (-b/2) a
    assert np.allclose(g.to_dense(), 0.5 * ex.a.to_dense(), atol=1e-15)


def test_least_squares_grad_stationary_is_empty():
    ex = _ex([(0, 2.0)], 2, 3.0)
    g = loss_grad(LossKind.LEAST_SQUARES, ex, np.array([1.5, 9.0]))
    assert g.nnz == 0


def test_grad_support_inside_feature_support(rng):
    for _ in range(20):
        ex = SparseExample(random_sparse_vec(rng, 10, 0.4), 1.0)
        g = loss_grad(LossKind.LOGISTIC, ex, rng.standard_normal(10))
        assert set(g.indices.tolist()) <= set(ex.a.indices.tolist())


def test_grad_matches_finite_differences(rng):
    h = 1e-6
    for kind in (LossKind.LOGISTIC, LossKind.LEAST_SQUARES):
        for _ in range(100):
            d = int(rng.integers(2, 10))
            ex = SparseExample(random_sparse_vec(rng, d, 0.7), float(rng.choice([-1.0, 1.0])))
            x = rng.standard_normal(d)
            g = loss_grad(kind, ex, x).to_dense()
            fd = np.zeros(d)
            for j in range(d):
                e = np.zeros(d)
                e[j] = h
                fd[j] = (loss_value(kind, ex, x + e) - loss_value(kind, ex, x - e)) / (2 * h)
            denom = max(np.linalg.norm(g), 1e-8)
            assert np.linalg.norm(fd - g) / denom < 1e-5


# ---------------------------------------------------------------- batch / full


def _hand_dataset():
    d = 3
    exs = [
        _ex([(0, 1.0), (1, 2.0)], d, 1.0),
        _ex([(1, -1.0)], d, -1.0),
        _ex([(0, 0.5), (2, 1.0)], d, 1.0),
        _ex([(2, -2.0)], d, -1.0),
    ]
    return Dataset.build(exs, d)


def test_minibatch_singleton_and_duplicates(rng):
    ds = _hand_dataset()
    x = rng.standard_normal(3)
    g1 = minibatch_grad(LossKind.LOGISTIC, ds, [2], x)
    assert np.array_equal(g1, loss_grad(LossKind.LOGISTIC, ds.examples[2], x).to_dense())
    g2 = minibatch_grad(LossKind.LOGISTIC, ds, [2, 2], x)
    assert np.array_equal(g1, g2)


def test_minibatch_full_batch_equals_full_grad(rng):
    ds = _hand_dataset()
    x = rng.standard_normal(3)
    gb = minibatch_grad(LossKind.LOGISTIC, ds, range(ds.n), x)
    gf = full_grad(LossKind.LOGISTIC, ds, x)
    assert np.array_equal(gb, gf)


def test_minibatch_rejects_empty_and_bad_indices():
    ds = _hand_dataset()
    with pytest.raises(ContractViolation):
        minibatch_grad(LossKind.LOGISTIC, ds, [], np.zeros(3))
    with pytest.raises(ContractViolation):
        minibatch_grad(LossKind.LOGISTIC, ds, [4], np.zeros(3))


def test_full_grad_bit_identical_across_workers(rng):
    ds = random_dataset(rng, 300, 8)  # spans two shards
    x = rng.standard_normal(8)
    g1 = full_grad(LossKind.LOGISTIC, ds, x, workers=1)
    g8 = full_grad(LossKind.LOGISTIC, ds, x, workers=8)
    assert np.array_equal(g1, g8)


def test_full_grad_single_example(rng):
    ex = _ex([(0, 1.0)], 2, 1.0)
    ds = Dataset.build([ex], 2)
    x = rng.standard_normal(2)
    assert np.array_equal(
        full_grad(LossKind.LOGISTIC, ds, x),
        loss_grad(LossKind.LOGISTIC, ex, x).to_dense(),
    )


def test_hand_dataset_full_grad_direct_sum(rng):
    ds = _hand_dataset()
    x = rng.standard_normal(3)
    direct = sum(
        loss_grad(LossKind.LEAST_SQUARES, ex, x).to_dense() for ex in ds.examples
    ) / ds.n
    assert np.allclose(full_grad(LossKind.LEAST_SQUARES, ds, x), direct, atol=1e-14)


# ---------------------------------------------------------------- VR gradient


def test_vr_at_anchor_returns_full_grad_exactly(rng):
    ds = _hand_dataset()
    xt = rng.standard_normal(3)
    anchor = Problem(ds, LossKind.LOGISTIC, Regularizer()).make_anchor(xt)
    out = vr_gradient(LossKind.LOGISTIC, ds, [1, 3], anchor.x_tilde, anchor)
    assert np.array_equal(out, anchor.full_grad)


def test_vr_full_batch_equals_full_grad_exactly(rng):
    ds = _hand_dataset()
    anchor = Problem(ds, LossKind.LOGISTIC, Regularizer()).make_anchor(rng.standard_normal(3))
    x = rng.standard_normal(3)
    out = vr_gradient(LossKind.LOGISTIC, ds, range(ds.n), x, anchor)
    assert np.array_equal(out, full_grad(LossKind.LOGISTIC, ds, x))


def test_vr_unbiased_over_all_batches(rng):
    ds = random_dataset(rng, 6, 5)
    prob = Problem(ds, LossKind.LOGISTIC, Regularizer())
    anchor = prob.make_anchor(rng.standard_normal(5))
    x = rng.standard_normal(5)
    batches = list(itertools.combinations(range(6), 2))
    assert len(batches) == 15
    mean = sum(vr_gradient(LossKind.LOGISTIC, ds, b, x, anchor) for b in batches) / len(batches)
    assert np.max(np.abs(mean - full_grad(LossKind.LOGISTIC, ds, x))) < 1e-12


# ---------------------------------------------------------------- prox


def test_prox_hand_case():
    # step * lambda1 = 1, lambda2 = 0
    out = prox_elastic(np.array([2.0, -0.5]), 1.0, Regularizer(1.0, 0.0))
    assert out.tolist() == [1.0, 0.0]


def test_prox_identity_and_zero_fixed_point():
    y = np.array([0.3, -2.0, 0.0])
    assert np.array_equal(prox_elastic(y, 0.7, Regularizer(0.0, 0.0)), y)
    assert np.array_equal(prox_elastic(np.zeros(3), 1.0, Regularizer(0.5, 0.5)), np.zeros(3))


def test_prox_rejects_nonpositive_step():
    with pytest.raises(ContractViolation):
        prox_elastic(np.zeros(2), 0.0, Regularizer(0.1, 0.0))


def test_prox_matches_ternary_oracle(rng):
    for _ in range(200):
        y = float(rng.uniform(-5, 5))
        step = float(rng.uniform(0.05, 3.0))
        l1 = float(rng.uniform(0, 2))
        l2 = float(rng.uniform(0, 2))
        got = prox_elastic(np.array([y]), step, Regularizer(l1, l2))[0]
        assert got == pytest.approx(prox_ternary_oracle(y, step, l1, l2), abs=1e-9)


def test_prox_nonexpansive(rng):
    reg = Regularizer(0.4, 0.2)
    for _ in range(1000):
        y = rng.standard_normal(4)
        z = rng.standard_normal(4)
        py = prox_elastic(y, 0.5, reg)
        pz = prox_elastic(z, 0.5, reg)
        assert np.linalg.norm(py - pz) <= np.linalg.norm(y - z) + 1e-12


def test_prox_block_cases(rng):
    p = BlockPartition.equal(4, 2)
    y = rng.standard_normal(4)
    reg = Regularizer(0.3, 0.1)
    out = prox_block(y, p, 0, 0.5, reg)
    assert np.array_equal(out[2:], y[2:])  # untouched block bitwise unchanged
    assert np.array_equal(out[:2], prox_elastic(y[:2], 0.5, reg))
    whole = BlockPartition.equal(4, 1)
    assert np.array_equal(prox_block(y, whole, 0, 0.5, reg), prox_elastic(y, 0.5, reg))
    assert np.array_equal(prox_block(y, p, 1, 0.5, Regularizer(0.0, 0.0)), y)
    with pytest.raises(ContractViolation):
        prox_block(y, p, 2, 0.5, reg)


# ---------------------------------------------------------------- objective


def test_objective_at_zero_logistic():
    ds = _hand_dataset()
    got = objective_value(LossKind.LOGISTIC, ds, Regularizer(0.5, 0.5), np.zeros(3))
    assert got == pytest.approx(LN2, abs=1e-15)


def test_objective_hand_two_examples():
    # least squares on two 1-D examples, evaluated independently via decimal
    exs = [_ex([(0, 2.0)], 1, 1.0), _ex([(0, -1.0)], 1, 0.5)]
    ds = Dataset.build(exs, 1)
    x = np.array([0.75])
    got = objective_value(LossKind.LEAST_SQUARES, ds, Regularizer(0.25, 0.5), x)
    getcontext().prec = 50
    xd = Decimal("0.75")
    loss = (Decimal(2) * xd - 1) ** 2 / 2 + (Decimal(-1) * xd - Decimal("0.5")) ** 2 / 2
    expected = loss / 2 + Decimal("0.25") * xd + Decimal("0.5") / 2 * xd * xd
    assert got == pytest.approx(float(expected), abs=1e-15)


def test_strong_convexity_witness(rng):
    prob = make_problem(rng, 30, 6, lambda1=0.2, lambda2=0.3)
    mu = prob.reg.lambda2
    for _ in range(50):
        x = rng.standard_normal(6)
        y = rng.standard_normal(6)
        xi = prob.full_grad(x) + prob.reg.lambda1 * np.sign(x) + prob.reg.lambda2 * x
        lhs = prob.objective(y)
        rhs = prob.objective(x) + xi @ (y - x) + 0.5 * mu * np.dot(y - x, y - x)
        assert lhs >= rhs - 1e-10


def test_logistic_labels_validated():
    ex = _ex([(0, 1.0)], 1, 2.0)
    with pytest.raises(ContractViolation):
        Problem(Dataset.build([ex], 1), LossKind.LOGISTIC, Regularizer())
