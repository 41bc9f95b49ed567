"""Sequential proximal solvers: ProxSGD, ProxSCD, ProxSVRG, ProxSVRCD.

These single-threaded runs are the deterministic references: the asynchronous
engine must reproduce them bit-for-bit at zero delay. Two dedicated RNG
streams (mini-batch sampling, block sampling) are derived from the seed, so a
one-block ProxSVRCD run consumes the same batch stream as ProxSVRG and walks
the identical trajectory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .linalg import BlockPartition, DenseVec
from .problem import Problem, prox_elastic


def make_streams(seed: int):
    """(batch_rng, block_rng) pair derived independently from one seed."""
    batch_ss, block_ss = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.Generator(np.random.PCG64(batch_ss)),
        np.random.Generator(np.random.PCG64(block_ss)),
    )


def draw_batch(rng, n: int, B: int, with_replacement: bool = True) -> np.ndarray:
    """Sample a mini-batch of indices; without-replacement batches are sorted
    so the FP mean does not depend on the draw order."""
    if with_replacement:
        return rng.integers(0, n, size=B)
    return np.sort(rng.choice(n, size=B, replace=False))


def draw_block(rng, m: int) -> int:
    return int(rng.integers(0, m))


@dataclass
class SolverConfig:
    """Shared solver knobs.

    eta        -- step size (> 0)
    B          -- mini-batch size, 1 <= B <= n
    K          -- inner updates per stage (trace period for SGD/SCD)
    S          -- number of stages (= max stages under early stopping)
    m          -- coordinate block count (block methods only)
    eta_decay  -- optional (eta0, sigma0); ProxSGD then uses
                  eta_k = eta0 * sqrt(sigma0 / (k + sigma0))
    seed       -- RNG seed for the batch/block streams
    with_replacement -- mini-batch sampling law (i.i.d. draws by default)
    last_iterate     -- advance stages from the last inner iterate instead of
                        the inner-iterate average (excluded from rate checks)
    """

    eta: float
    B: int
    K: int
    S: int
    m: int = 1
    eta_decay: tuple[float, float] | None = None
    seed: int = 0
    with_replacement: bool = True
    last_iterate: bool = False

    def validate(self, n: int, d: int) -> None:
        if self.eta <= 0:
            raise ContractViolation("eta must be > 0")
        if not (1 <= self.B <= n):
            raise ContractViolation(f"need 1 <= B <= n, got B={self.B}, n={n}")
        # K = 0 or S = 0 is an explicit no-op run
        if self.K < 0 or self.S < 0:
            raise ContractViolation("K and S must be >= 0")
        if not (1 <= self.m <= d):
            raise ContractViolation(f"need 1 <= m <= d, got m={self.m}, d={d}")
        if self.eta_decay is not None:
            eta0, sigma0 = self.eta_decay
            if eta0 <= 0 or sigma0 <= 0:
                raise ContractViolation("eta_decay parameters must be > 0")


@dataclass
class StageRecord:
    stage: int
    objective: float
    seconds: float
    updates: int


@dataclass
class RunTrace:
    records: list[StageRecord] = field(default_factory=list)
    x_final: DenseVec | None = None
    iterates: list[DenseVec] | None = None

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]


def _record_stage(trace, stage, problem, x, t0, updates):
    trace.records.append(
        StageRecord(stage, problem.objective(x), time.perf_counter() - t0, updates)
    )


def _stopped(trace, stop_below) -> bool:
    return stop_below is not None and trace.records[-1].objective <= stop_below


def prox_sgd_run(
    problem: Problem,
    config: SolverConfig,
    x0: DenseVec,
    *,
    stop_below: float | None = None,
    record_iterates: bool = False,
) -> RunTrace:
    """Proximal SGD: x <- prox_{eta_k R}(x - eta_k * grad f_B(x)).

    Runs S*K updates with a trace record every K; the step decays per
    ``config.eta_decay`` when set, else stays constant.
    """
    config.validate(problem.n, problem.d)
    if x0.shape[0] != problem.d:
        raise ContractViolation("x0 dimension mismatch")
    batch_rng, _ = make_streams(config.seed)
    x = x0.copy()
    trace = RunTrace(iterates=[] if record_iterates else None)
    k_global = 0
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        for _ in range(config.K):
            if config.eta_decay is not None:
                eta0, sigma0 = config.eta_decay
                eta_k = eta0 * np.sqrt(sigma0 / (k_global + sigma0))
            else:
                eta_k = config.eta
            batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
            g = problem.minibatch_grad(batch, x)
            x = prox_elastic(x - eta_k * g, eta_k, problem.reg)
            k_global += 1
            if record_iterates:
                trace.iterates.append(x.copy())
        _record_stage(trace, s, problem, x, t0, config.K)
        if _stopped(trace, stop_below):
            break
    trace.x_final = x
    return trace


def prox_scd_run(
    problem: Problem,
    config: SolverConfig,
    x0: DenseVec,
    *,
    stop_below: float | None = None,
    record_iterates: bool = False,
) -> RunTrace:
    """Proximal stochastic coordinate descent on the full-data gradient.

    Each update samples one block uniformly, takes a prox step on that block
    using the exact partial gradient of F at the current iterate, and leaves
    every other coordinate bitwise unchanged.
    """
    config.validate(problem.n, problem.d)
    if x0.shape[0] != problem.d:
        raise ContractViolation("x0 dimension mismatch")
    _, block_rng = make_streams(config.seed)
    part = BlockPartition.equal(problem.d, config.m)
    x = x0.copy()
    trace = RunTrace(iterates=[] if record_iterates else None)
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        for _ in range(config.K):
            j = draw_block(block_rng, config.m)
            g = problem.full_grad(x)
            lo, hi = part.block_bounds(j)
            x[lo:hi] = prox_elastic(x[lo:hi] - config.eta * g[lo:hi], config.eta, problem.reg)
            if record_iterates:
                trace.iterates.append(x.copy())
        _record_stage(trace, s, problem, x, t0, config.K)
        if _stopped(trace, stop_below):
            break
    trace.x_final = x
    return trace


def prox_svrg_run(
    problem: Problem,
    config: SolverConfig,
    x0: DenseVec,
    *,
    stop_below: float | None = None,
    record_iterates: bool = False,
) -> RunTrace:
    """Stage-based variance-reduced proximal SGD.

    Per stage: compute the anchor (snapshot + full gradient), run K inner
    updates x <- prox_{eta R}(x - eta * v) with the variance-corrected
    gradient v evaluated at the current iterate, then advance to the average
    of the K inner iterates.
    """
    config.validate(problem.n, problem.d)
    if x0.shape[0] != problem.d:
        raise ContractViolation("x0 dimension mismatch")
    batch_rng, _ = make_streams(config.seed)
    x_tilde = x0.copy()
    trace = RunTrace(iterates=[] if record_iterates else None)
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        anchor = problem.make_anchor(x_tilde)
        x = x_tilde.copy()
        inner_sum = np.zeros_like(x)
        for _ in range(config.K):
            batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
            v = problem.vr_grad(batch, x, anchor)
            x = prox_elastic(x - config.eta * v, config.eta, problem.reg)
            inner_sum += x
            if record_iterates:
                trace.iterates.append(x.copy())
        x_tilde = x if (config.last_iterate or config.K == 0) else inner_sum / config.K
        _record_stage(trace, s, problem, x_tilde, t0, config.K)
        if _stopped(trace, stop_below):
            break
    trace.x_final = x_tilde
    return trace


def prox_svrcd_run(
    problem: Problem,
    config: SolverConfig,
    x0: DenseVec,
    *,
    stop_below: float | None = None,
    record_iterates: bool = False,
) -> RunTrace:
    """Variance-reduced proximal coordinate descent.

    Same stage structure as ``prox_svrg_run``; each inner update additionally
    samples a coordinate block and applies the prox step on that block only.
    With m = 1 this consumes the same batch stream as ProxSVRG and the
    trajectories coincide bitwise.
    """
    config.validate(problem.n, problem.d)
    if x0.shape[0] != problem.d:
        raise ContractViolation("x0 dimension mismatch")
    batch_rng, block_rng = make_streams(config.seed)
    part = BlockPartition.equal(problem.d, config.m)
    x_tilde = x0.copy()
    trace = RunTrace(iterates=[] if record_iterates else None)
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        anchor = problem.make_anchor(x_tilde)
        x = x_tilde.copy()
        inner_sum = np.zeros_like(x)
        for _ in range(config.K):
            batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
            j = draw_block(block_rng, config.m)
            v = problem.vr_grad(batch, x, anchor)
            lo, hi = part.block_bounds(j)
            x_next = x.copy()
            x_next[lo:hi] = prox_elastic(x[lo:hi] - config.eta * v[lo:hi], config.eta, problem.reg)
            x = x_next
            inner_sum += x
            if record_iterates:
                trace.iterates.append(x.copy())
        x_tilde = x if (config.last_iterate or config.K == 0) else inner_sum / config.K
        _record_stage(trace, s, problem, x_tilde, t0, config.K)
        if _stopped(trace, stop_below):
            break
    trace.x_final = x_tilde
    return trace
