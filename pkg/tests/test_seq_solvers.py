import numpy as np
import pytest

from conftest import make_problem, one_dim_problem, separable_quadratic
from proxvr.errors import ContractViolation
from proxvr.problem import LossKind, Regularizer, prox_elastic
from proxvr.seq_solvers import (
    SolverConfig,
    draw_batch,
    make_streams,
    prox_scd_run,
    prox_sgd_run,
    prox_svrcd_run,
    prox_svrg_run,
)


def _traces_equal(a, b):
    if [r.objective for r in a.records] != [r.objective for r in b.records]:
        return False
    if not np.array_equal(a.x_final, b.x_final):
        return False
    if (a.iterates is None) != (b.iterates is None):
        return False
    if a.iterates is not None:
        return all(np.array_equal(u, v) for u, v in zip(a.iterates, b.iterates))
    return True


# ---------------------------------------------------------------- ProxSGD


def test_sgd_zero_iterations_returns_x0(rng):
    prob = make_problem(rng, 10, 4)
    x0 = rng.standard_normal(4)
    tr = prox_sgd_run(prob, SolverConfig(eta=0.1, B=1, K=0, S=0), x0)
    assert np.array_equal(tr.x_final, x0)
    assert tr.records == []


def test_sgd_converges_on_soft_threshold_problem():
    # minimizer of (x-1)^2/2 + 0.3 |x| is 0.7
    prob = one_dim_problem(0.3)
    cfg = SolverConfig(eta=0.5, B=1, K=1000, S=20, eta_decay=(0.5, 100.0), seed=3)
    tr = prox_sgd_run(prob, cfg, np.zeros(1))
    assert abs(tr.x_final[0] - 0.7) < 1e-3


def test_sgd_full_batch_no_reg_is_plain_gd(rng):
    prob = make_problem(rng, 12, 4, kind=LossKind.LEAST_SQUARES, lambda1=0.0, lambda2=0.0)
    eta = 0.05
    cfg = SolverConfig(eta=eta, B=prob.n, K=7, S=2, seed=5, with_replacement=False)
    tr = prox_sgd_run(prob, cfg, np.zeros(4), record_iterates=True)
    x = np.zeros(4)
    for k, got in enumerate(tr.iterates):
        x = x - eta * prob.full_grad(x)
        assert np.array_equal(got, x), f"diverged from hand GD at update {k}"


def test_sgd_decay_formula_starts_at_eta0(rng):
    prob = one_dim_problem(0.0)
    cfg = SolverConfig(eta=1.0, B=1, K=1, S=1, eta_decay=(0.25, 50.0))
    tr = prox_sgd_run(prob, cfg, np.zeros(1), record_iterates=True)
    # first step: x1 = x0 - eta0 * (x0 - 1) = 0.25
    assert tr.iterates[0][0] == pytest.approx(0.25, abs=1e-15)


def test_invalid_configs_rejected(rng):
    prob = make_problem(rng, 10, 4)
    with pytest.raises(ContractViolation):
        prox_sgd_run(prob, SolverConfig(eta=-1.0, B=1, K=1, S=1), np.zeros(4))
    with pytest.raises(ContractViolation):
        prox_sgd_run(prob, SolverConfig(eta=0.1, B=99, K=1, S=1), np.zeros(4))
    with pytest.raises(ContractViolation):
        prox_svrcd_run(prob, SolverConfig(eta=0.1, B=1, K=1, S=1, m=9), np.zeros(4))
    with pytest.raises(ContractViolation):
        prox_sgd_run(prob, SolverConfig(eta=0.1, B=1, K=1, S=1), np.zeros(5))


# ---------------------------------------------------------------- ProxSCD


def test_scd_single_block_is_prox_full_gradient_descent(rng):
    prob = make_problem(rng, 15, 5, lambda1=0.05, lambda2=0.1)
    eta = 0.3
    cfg = SolverConfig(eta=eta, B=1, K=9, S=1, m=1, seed=2)
    tr = prox_scd_run(prob, cfg, np.zeros(5), record_iterates=True)
    x = np.zeros(5)
    for got in tr.iterates:
        x = prox_elastic(x - eta * prob.full_grad(x), eta, prob.reg)
        assert np.array_equal(got, x)


def test_scd_updates_touch_only_sampled_block(rng):
    prob = make_problem(rng, 15, 6, lambda1=0.05, lambda2=0.1)
    cfg = SolverConfig(eta=0.3, B=1, K=30, S=1, m=3, seed=7)
    tr = prox_scd_run(prob, cfg, rng.standard_normal(6), record_iterates=True)
    # replay the block stream to know which block each update touched
    _, block_rng = make_streams(cfg.seed)
    blocks = [int(block_rng.integers(0, cfg.m)) for _ in range(30)]
    x_prev = None
    for x_now, j in zip(tr.iterates, blocks):
        if x_prev is not None:
            lo, hi = 2 * j, 2 * j + 2
            outside = np.r_[0:lo, hi:6]
            assert np.array_equal(x_now[outside], x_prev[outside])
        x_prev = x_now


def test_scd_separable_quadratic_jumps_to_target():
    c = np.array([1.5, -2.0, 0.5, 3.0])
    prob = separable_quadratic(c)
    cfg = SolverConfig(eta=1.0, B=1, K=40, S=1, m=4, seed=11)
    tr = prox_scd_run(prob, cfg, np.zeros(4), record_iterates=True)
    _, block_rng = make_streams(cfg.seed)
    seen = set()
    for it, x_now in enumerate(tr.iterates):
        j = int(block_rng.integers(0, 4))
        seen.add(j)
        assert x_now[j] == pytest.approx(c[j], abs=1e-12)
        for j2 in seen:
            assert x_now[j2] == pytest.approx(c[j2], abs=1e-12)


# ---------------------------------------------------------------- ProxSVRG


def test_svrg_single_inner_step_uses_exact_full_gradient(rng):
    prob = make_problem(rng, 20, 5)
    eta = 0.2
    cfg = SolverConfig(eta=eta, B=2, K=1, S=4, seed=1)
    tr = prox_svrg_run(prob, cfg, np.zeros(5))
    x = np.zeros(5)
    for rec in tr.records:
        x = prox_elastic(x - eta * prob.full_grad(x), eta, prob.reg)
        assert rec.objective == prob.objective(x)
    assert np.array_equal(tr.x_final, x)


def test_svrg_full_batch_matches_prox_gd_bitwise(rng):
    prob = make_problem(rng, 30, 6, lambda1=0.01, lambda2=0.05)
    eta = 0.25
    cfg = SolverConfig(eta=eta, B=prob.n, K=12, S=1, seed=4, with_replacement=False)
    tr = prox_svrg_run(prob, cfg, np.zeros(6), record_iterates=True)
    x = np.zeros(6)
    for got in tr.iterates:
        x = prox_elastic(x - eta * prob.full_grad(x), eta, prob.reg)
        assert np.array_equal(got, x)


def test_svrg_deterministic(rng):
    prob = make_problem(rng, 25, 5)
    cfg = SolverConfig(eta=0.2, B=2, K=20, S=3, seed=123)
    a = prox_svrg_run(prob, cfg, np.zeros(5), record_iterates=True)
    b = prox_svrg_run(prob, cfg, np.zeros(5), record_iterates=True)
    assert _traces_equal(a, b)


def test_svrg_stage_records_are_consecutive(rng):
    prob = make_problem(rng, 25, 5)
    tr = prox_svrg_run(prob, SolverConfig(eta=0.2, B=2, K=10, S=5, seed=0), np.zeros(5))
    assert [r.stage for r in tr.records] == [1, 2, 3, 4, 5]
    assert all(r.updates == 10 for r in tr.records)


def test_svrg_median_trace_monotone(rng):
    prob = make_problem(rng, 40, 8, lambda2=0.1)
    objs = []
    for seed in range(9):
        tr = prox_svrg_run(prob, SolverConfig(eta=0.2, B=1, K=60, S=5, seed=seed), np.zeros(8))
        objs.append(tr.objectives)
    med = np.median(np.array(objs), axis=0)
    assert all(a >= b - 1e-12 for a, b in zip(med, med[1:]))


def test_svrg_early_stop(rng):
    prob = make_problem(rng, 30, 5, lambda2=0.2)
    cfg = SolverConfig(eta=0.2, B=1, K=100, S=50, seed=6)
    full = prox_svrg_run(prob, cfg, np.zeros(5))
    target = full.objectives[-1] + 1e-4
    stopped = prox_svrg_run(prob, cfg, np.zeros(5), stop_below=target)
    assert len(stopped.records) < len(full.records)
    assert stopped.objectives[-1] <= target


# ---------------------------------------------------------------- ProxSVRCD


def test_svrcd_single_block_degenerates_to_svrg(rng):
    prob = make_problem(rng, 30, 6)
    svrg = prox_svrg_run(prob, SolverConfig(eta=0.15, B=2, K=25, S=3, seed=9), np.zeros(6),
                         record_iterates=True)
    svrcd = prox_svrcd_run(prob, SolverConfig(eta=0.15, B=2, K=25, S=3, m=1, seed=9),
                           np.zeros(6), record_iterates=True)
    assert _traces_equal(svrg, svrcd)


def test_svrcd_updates_touch_only_sampled_block(rng):
    prob = make_problem(rng, 20, 8)
    cfg = SolverConfig(eta=0.1, B=2, K=40, S=1, m=4, seed=13)
    tr = prox_svrcd_run(prob, cfg, rng.standard_normal(8), record_iterates=True)
    _, block_rng = make_streams(cfg.seed)
    x_prev = None
    for x_now in tr.iterates:
        j = int(block_rng.integers(0, cfg.m))
        if x_prev is not None:
            lo, hi = 2 * j, 2 * j + 2
            outside = np.r_[0:lo, hi:8]
            assert np.array_equal(x_now[outside], x_prev[outside])
        x_prev = x_now


def test_svrcd_deterministic(rng):
    prob = make_problem(rng, 25, 6)
    cfg = SolverConfig(eta=0.1, B=2, K=30, S=2, m=3, seed=77)
    a = prox_svrcd_run(prob, cfg, np.zeros(6))
    b = prox_svrcd_run(prob, cfg, np.zeros(6))
    assert _traces_equal(a, b)


# ---------------------------------------------------------------- sampling


def test_draw_batch_without_replacement_sorted_full():
    rng = np.random.default_rng(0)
    batch = draw_batch(rng, 10, 10, with_replacement=False)
    assert batch.tolist() == list(range(10))


def test_make_streams_independent_of_each_other():
    b1, j1 = make_streams(42)
    b2, j2 = make_streams(42)
    assert b1.integers(0, 1000, 5).tolist() == b2.integers(0, 1000, 5).tolist()
    assert j1.integers(0, 1000, 5).tolist() == j2.integers(0, 1000, 5).tolist()
