"""Asynchronous execution of the variance-reduced solvers.

Two algorithms, two read disciplines:

* consistent read (whole-vector): a worker pulls one atomic snapshot of the
  parameter vector, possibly ``tau_k`` commits stale, and the commit applies a
  whole-vector prox step;
* inconsistent read (block-level): a worker's view mixes coordinate blocks
  from different clocks -- the old iterate plus exactly the updates in an
  applied subset J(k) of the pending window -- and the commit touches one
  block.

Two execution modes:

* simulate: one logical thread replays a pre-drawn delay schedule against a
  master state with bounded iterate history; fully deterministic, and with an
  all-zero schedule it reproduces the sequential solvers bit-for-bit;
* threads: P worker threads against an internally synchronized master (one
  exclusive region for the whole vector in consistent mode, one per block in
  inconsistent mode). Delays are measured from commit-clock stamps.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractViolation
from .linalg import BlockPartition, DenseVec
from .problem import Problem, prox_elastic
from .seq_solvers import RunTrace, SolverConfig, StageRecord, draw_batch, draw_block, make_streams


class ReadMode(str, Enum):
    CONSISTENT = "consistent"      # whole-vector snapshot (SVRG)
    INCONSISTENT = "inconsistent"  # block-mixed view (SVRCD)


@dataclass
class DelaySchedule:
    """Pre-drawn per-update delays, plus applied-update subsets for the
    inconsistent read model.

    ``taus[k]`` is the delay of update k (0-based global position); it never
    exceeds ``tau_bound`` nor k itself. ``applied_offsets[k]`` lists offsets
    o in {1..taus[k]} meaning "the update committed o clocks before k is
    already visible"; None means empty subsets everywhere.
    """

    taus: np.ndarray
    tau_bound: int
    applied_offsets: list | None = None
    law: str = "constant"

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=np.int64)
        object.__setattr__(self, "taus", t)
        if self.tau_bound < 0:
            raise ContractViolation("tau_bound must be >= 0")
        if t.size and (t.min() < 0 or t.max() > self.tau_bound):
            raise ContractViolation("delays must lie in [0, tau_bound]")
        if t.size and np.any(t > np.arange(t.size)):
            raise ContractViolation("delay tau_k cannot exceed the clock k")
        if self.applied_offsets is not None:
            if len(self.applied_offsets) != t.size:
                raise ContractViolation("applied_offsets length mismatch")
            for k, offs in enumerate(self.applied_offsets):
                offs = np.asarray(offs, dtype=np.int64)
                if offs.size and (offs.min() < 1 or offs.max() > t[k]):
                    raise ContractViolation(
                        f"applied set at k={k} outside the window {{1..tau_k}}"
                    )

    def __len__(self) -> int:
        return int(self.taus.size)

    @staticmethod
    def zeros(length: int, inconsistent: bool = False) -> "DelaySchedule":
        offs = [np.empty(0, dtype=np.int64)] * length if inconsistent else None
        return DelaySchedule(np.zeros(length, dtype=np.int64), 0, offs, law="constant")


def sample_delay_schedule(
    kind: str,
    tau: int,
    length: int,
    seed: int,
    *,
    inconsistent: bool = False,
    include_prob: float = 0.5,
) -> DelaySchedule:
    """Draw i.i.d. delays, clipped so tau_k <= k.

    ``kind`` is "constant" (always tau) or "uniform" (uniform on {0..tau}).
    For the inconsistent model each pending update enters J(k) independently
    with probability ``include_prob``.
    """
    if tau < 0:
        raise ContractViolation("tau must be >= 0")
    if kind not in ("constant", "uniform"):
        raise ContractViolation(f"unknown delay law {kind!r}")
    rng = np.random.default_rng(seed)
    if kind == "constant":
        raw = np.full(length, tau, dtype=np.int64)
    else:
        raw = rng.integers(0, tau + 1, size=length)
    taus = np.minimum(raw, np.arange(length, dtype=np.int64))
    offsets = None
    if inconsistent:
        offsets = []
        for k in range(length):
            win = int(taus[k])
            if win == 0 or include_prob <= 0.0:
                offsets.append(np.empty(0, dtype=np.int64))
            elif include_prob >= 1.0:
                offsets.append(np.arange(1, win + 1, dtype=np.int64))
            else:
                mask = rng.random(win) < include_prob
                offsets.append((np.flatnonzero(mask) + 1).astype(np.int64))
    return DelaySchedule(taus, tau, offsets, law=kind)


class MasterState:
    """Simulation-mode master: current iterate, global clock, and a ring
    buffer of the last ``tau_bound + 1`` iterates for delayed reads."""

    def __init__(self, x0: DenseVec, tau_bound: int):
        self.x = np.array(x0, dtype=np.float64, copy=True)
        self.clock = 0
        self.stage_sum = np.zeros_like(self.x)
        self._hist = deque([self.x.copy()], maxlen=tau_bound + 1)

    def commit(self, x_new: DenseVec) -> None:
        self.x = x_new
        self.clock += 1
        self.stage_sum += x_new
        self._hist.append(x_new.copy())

    def iterate_at(self, clock_idx: int) -> DenseVec:
        """Iterate as of clock ``clock_idx`` (0 = stage start)."""
        back = self.clock - clock_idx
        if back < 0 or back >= len(self._hist):
            raise ContractViolation(
                f"clock {clock_idx} not retained (clock={self.clock}, "
                f"history={len(self._hist)})"
            )
        return self._hist[len(self._hist) - 1 - back]


def read_consistent(state: MasterState, tau_k: int) -> DenseVec:
    """Atomic snapshot of the full iterate from ``tau_k`` commits ago."""
    if tau_k < 0:
        raise ContractViolation("tau_k must be >= 0")
    return state.iterate_at(state.clock - tau_k).copy()


def read_inconsistent(state: MasterState, tau_k: int, applied) -> DenseVec:
    """Block-mixed view: the iterate from ``tau_k`` commits ago plus exactly
    the updates in ``applied`` (absolute update indices inside the window
    {clock - tau_k .. clock - 1}).

    Updates are applied in order; where the running view still bitwise-equals
    the pre-update iterate the update lands by substitution, which keeps the
    all-applied case exactly equal to the current iterate.
    """
    if tau_k < 0:
        raise ContractViolation("tau_k must be >= 0")
    lo = state.clock - tau_k
    xhat = state.iterate_at(lo).copy()
    for h in sorted(int(h) for h in applied):
        if h < lo or h >= state.clock:
            raise ContractViolation(
                f"applied update {h} outside window [{lo}, {state.clock - 1}]"
            )
        before = state.iterate_at(h)
        after = state.iterate_at(h + 1)
        xhat = np.where(xhat == before, after, xhat + (after - before))
    return xhat


@dataclass(frozen=True)
class SimulateMode:
    schedule: DelaySchedule


@dataclass(frozen=True)
class ThreadsMode:
    workers: int
    declared_tau: int | None = None  # the tau used to pick eta, if any


@dataclass
class CommitRecord:
    stage: int
    clock: int
    worker: int
    block: int  # -1 for whole-vector commits
    delay: int
    block_values: np.ndarray | None = None


@dataclass
class AsyncReport:
    """RunTrace plus observed-delay statistics and per-worker update counts."""

    trace: RunTrace
    read_mode: str
    delay_mean: float
    delay_max: int
    delay_histogram: np.ndarray
    stage_mean_delays: list
    worker_updates: list
    total_commits: int
    delay_law: str | None = None
    declared_tau: int | None = None
    mean_delay_exceeded: bool = False
    commit_log: list | None = None


def format_commit_log(log) -> str:
    """Line-oriented `clock,worker_id,block_id_or_-1,delay` records."""
    return "\n".join(f"{r.clock},{r.worker},{r.block},{r.delay}" for r in log)


def _finish_report(
    trace, read_mode, all_delays, stage_means, worker_updates, law, declared_tau, log
) -> AsyncReport:
    delays = np.asarray(all_delays, dtype=np.int64)
    mean = float(delays.mean()) if delays.size else 0.0
    mx = int(delays.max()) if delays.size else 0
    hist = np.bincount(delays) if delays.size else np.zeros(1, dtype=np.int64)
    exceeded = declared_tau is not None and mean > declared_tau
    return AsyncReport(
        trace=trace,
        read_mode=read_mode,
        delay_mean=mean,
        delay_max=mx,
        delay_histogram=hist,
        stage_mean_delays=stage_means,
        worker_updates=worker_updates,
        total_commits=int(delays.size),
        delay_law=law,
        declared_tau=declared_tau,
        mean_delay_exceeded=exceeded,
        commit_log=log,
    )


def _check_simulate(config: SolverConfig, mode: SimulateMode) -> None:
    need = config.S * config.K
    if len(mode.schedule) < need:
        raise ContractViolation(
            f"schedule length {len(mode.schedule)} < S*K = {need}"
        )


def async_svrg_run(
    problem: Problem,
    config: SolverConfig,
    x0: DenseVec,
    mode,
    *,
    stop_below: float | None = None,
    record_iterates: bool = False,
    debug: bool = False,
) -> AsyncReport:
    """Asynchronous SVRG under the consistent (whole-vector) read model."""
    config.validate(problem.n, problem.d)
    if x0.shape[0] != problem.d:
        raise ContractViolation("x0 dimension mismatch")
    if isinstance(mode, SimulateMode):
        _check_simulate(config, mode)
        return _simulate_consistent(
            problem, config, x0, mode.schedule, stop_below, record_iterates, debug
        )
    if isinstance(mode, ThreadsMode):
        if mode.workers < 1:
            raise ContractViolation("need at least one worker")
        return _threads_consistent(problem, config, x0, mode, stop_below, debug)
    raise ContractViolation(f"unknown mode {mode!r}")


def async_svrcd_run(
    problem: Problem,
    config: SolverConfig,
    x0: DenseVec,
    mode,
    *,
    stop_below: float | None = None,
    record_iterates: bool = False,
    debug: bool = False,
) -> AsyncReport:
    """Asynchronous SVRCD under the inconsistent (block-level) read model."""
    config.validate(problem.n, problem.d)
    if x0.shape[0] != problem.d:
        raise ContractViolation("x0 dimension mismatch")
    if isinstance(mode, SimulateMode):
        _check_simulate(config, mode)
        return _simulate_inconsistent(
            problem, config, x0, mode.schedule, stop_below, record_iterates, debug
        )
    if isinstance(mode, ThreadsMode):
        if mode.workers < 1:
            raise ContractViolation("need at least one worker")
        return _threads_inconsistent(problem, config, x0, mode, stop_below, debug)
    raise ContractViolation(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# simulate mode
# --------------------------------------------------------------------------

def _simulate_consistent(problem, config, x0, schedule, stop_below, record_iterates, debug):
    batch_rng, _ = make_streams(config.seed)
    x_tilde = x0.copy()
    trace = RunTrace(iterates=[] if record_iterates else None)
    all_delays, stage_means = [], []
    log = [] if debug else None
    g = 0
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        anchor = problem.make_anchor(x_tilde)
        state = MasterState(x_tilde, schedule.tau_bound)
        stage_delays = []
        for _ in range(config.K):
            # full-gradient phase is a barrier: delays never reach past the
            # stage start
            tau = min(int(schedule.taus[g]), state.clock)
            x_read = read_consistent(state, tau)
            batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
            u = problem.vr_grad(batch, x_read, anchor)
            state.commit(prox_elastic(state.x - config.eta * u, config.eta, problem.reg))
            stage_delays.append(tau)
            if record_iterates:
                trace.iterates.append(state.x.copy())
            if log is not None:
                log.append(CommitRecord(s, state.clock, 0, -1, tau))
            g += 1
        x_tilde = state.x if (config.last_iterate or config.K == 0) else state.stage_sum / config.K
        trace.records.append(
            StageRecord(s, problem.objective(x_tilde), time.perf_counter() - t0, config.K)
        )
        all_delays.extend(stage_delays)
        stage_means.append(float(np.mean(stage_delays)) if stage_delays else 0.0)
        if stop_below is not None and trace.records[-1].objective <= stop_below:
            break
    trace.x_final = x_tilde
    return _finish_report(
        trace, ReadMode.CONSISTENT.value, all_delays, stage_means, [len(all_delays)],
        schedule.law, schedule.tau_bound, log,
    )


def _simulate_inconsistent(problem, config, x0, schedule, stop_below, record_iterates, debug):
    batch_rng, block_rng = make_streams(config.seed)
    part = BlockPartition.equal(problem.d, config.m)
    x_tilde = x0.copy()
    trace = RunTrace(iterates=[] if record_iterates else None)
    all_delays, stage_means = [], []
    log = [] if debug else None
    g = 0
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        anchor = problem.make_anchor(x_tilde)
        state = MasterState(x_tilde, schedule.tau_bound)
        stage_delays = []
        for _ in range(config.K):
            tau = min(int(schedule.taus[g]), state.clock)
            if schedule.applied_offsets is None:
                applied = ()
            else:
                offs = np.asarray(schedule.applied_offsets[g], dtype=np.int64)
                applied = (state.clock - offs[offs <= tau]).tolist()
            x_hat = read_inconsistent(state, tau, applied)
            batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
            j = draw_block(block_rng, config.m)
            u = problem.vr_grad(batch, x_hat, anchor)
            lo, hi = part.block_bounds(j)
            x_next = state.x.copy()
            x_next[lo:hi] = prox_elastic(
                state.x[lo:hi] - config.eta * u[lo:hi], config.eta, problem.reg
            )
            state.commit(x_next)
            stage_delays.append(tau)
            if record_iterates:
                trace.iterates.append(state.x.copy())
            if log is not None:
                log.append(CommitRecord(s, state.clock, 0, j, tau))
            g += 1
        x_tilde = state.x if (config.last_iterate or config.K == 0) else state.stage_sum / config.K
        trace.records.append(
            StageRecord(s, problem.objective(x_tilde), time.perf_counter() - t0, config.K)
        )
        all_delays.extend(stage_delays)
        stage_means.append(float(np.mean(stage_delays)) if stage_delays else 0.0)
        if stop_below is not None and trace.records[-1].objective <= stop_below:
            break
    trace.x_final = x_tilde
    return _finish_report(
        trace, ReadMode.INCONSISTENT.value, all_delays, stage_means, [len(all_delays)],
        schedule.law, schedule.tau_bound, log,
    )


# --------------------------------------------------------------------------
# threads mode
# --------------------------------------------------------------------------

def _worker_streams(seed: int, workers: int):
    pairs = []
    for child in np.random.SeedSequence(seed).spawn(workers):
        b, j = child.spawn(2)
        pairs.append(
            (np.random.Generator(np.random.PCG64(b)), np.random.Generator(np.random.PCG64(j)))
        )
    return pairs


def _threads_consistent(problem, config, x0, mode, stop_below, debug):
    P = mode.workers
    streams = _worker_streams(config.seed, P)
    x_tilde = x0.copy()
    trace = RunTrace()
    all_delays, stage_means, worker_updates = [], [], [0] * P
    log = [] if debug else None
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        anchor = problem.make_anchor(x_tilde, workers=P)
        lock = threading.Lock()
        shared = {
            "x": x_tilde.copy(),
            "clock": 0,
            "tickets": config.K,
            "sum": np.zeros_like(x_tilde),
        }
        stage_delays = []

        def run_worker(wid):
            batch_rng, _ = streams[wid]
            while True:
                with lock:
                    if shared["tickets"] == 0:
                        return
                    shared["tickets"] -= 1
                    snap = shared["x"].copy()
                    pulled_at = shared["clock"]
                batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
                u = problem.vr_grad(batch, snap, anchor)
                with lock:
                    delay = shared["clock"] - pulled_at
                    shared["x"] = prox_elastic(
                        shared["x"] - config.eta * u, config.eta, problem.reg
                    )
                    shared["clock"] += 1
                    shared["sum"] += shared["x"]
                    stage_delays.append(delay)
                    worker_updates[wid] += 1
                    if log is not None:
                        log.append(CommitRecord(s, shared["clock"], wid, -1, delay))

        threads = [threading.Thread(target=run_worker, args=(w,)) for w in range(P)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        x_tilde = (
            shared["x"]
            if (config.last_iterate or config.K == 0)
            else shared["sum"] / config.K
        )
        trace.records.append(
            StageRecord(s, problem.objective(x_tilde), time.perf_counter() - t0, config.K)
        )
        all_delays.extend(stage_delays)
        stage_means.append(float(np.mean(stage_delays)) if stage_delays else 0.0)
        if stop_below is not None and trace.records[-1].objective <= stop_below:
            break
    trace.x_final = x_tilde
    return _finish_report(
        trace, ReadMode.CONSISTENT.value, all_delays, stage_means, worker_updates,
        None, mode.declared_tau, log,
    )


def _threads_inconsistent(problem, config, x0, mode, stop_below, debug):
    P = mode.workers
    streams = _worker_streams(config.seed, P)
    part = BlockPartition.equal(problem.d, config.m)
    x_tilde = x0.copy()
    trace = RunTrace()
    all_delays, stage_means, worker_updates = [], [], [0] * P
    log = [] if debug else None
    for s in range(1, config.S + 1):
        t0 = time.perf_counter()
        anchor = problem.make_anchor(x_tilde, workers=P)
        x = x_tilde.copy()
        stage_sum = np.zeros_like(x)
        # lock order is always block lock -> clock lock; the pull phase takes
        # block locks one at a time and never holds the clock lock
        block_locks = [threading.Lock() for _ in range(config.m)]
        clock_lock = threading.Lock()
        shared = {"clock": 0, "tickets": config.K}
        last_commit = [0] * config.m
        stage_delays = []

        def run_worker(wid):
            batch_rng, block_rng = streams[wid]
            d = problem.d
            while True:
                with clock_lock:
                    if shared["tickets"] == 0:
                        return
                    shared["tickets"] -= 1
                    pulled_at = shared["clock"]
                # block-by-block pull: blocks may come from different clocks
                x_hat = np.empty(d)
                for jj in range(config.m):
                    lo, hi = part.block_bounds(jj)
                    with block_locks[jj]:
                        x_hat[lo:hi] = x[lo:hi]
                batch = draw_batch(batch_rng, problem.n, config.B, config.with_replacement)
                jk = draw_block(block_rng, config.m)
                u = problem.vr_grad(batch, x_hat, anchor)
                lo, hi = part.block_bounds(jk)
                with block_locks[jk]:
                    old_block = x[lo:hi].copy()
                    new_block = prox_elastic(
                        x[lo:hi] - config.eta * u[lo:hi], config.eta, problem.reg
                    )
                    with clock_lock:
                        shared["clock"] += 1
                        t_commit = shared["clock"]
                        delay = (t_commit - 1) - pulled_at
                        stage_delays.append(delay)
                        worker_updates[wid] += 1
                    # lazy stage sum: the old block value survived the
                    # iterates since its own commit (stage start counts from
                    # iterate 1, so the initial value gets one less)
                    weight = t_commit - last_commit[jk] - (1 if last_commit[jk] == 0 else 0)
                    stage_sum[lo:hi] += old_block * weight
                    x[lo:hi] = new_block
                    last_commit[jk] = t_commit
                    if log is not None:
                        log.append(
                            CommitRecord(s, t_commit, wid, jk, delay, new_block.copy())
                        )

        threads = [threading.Thread(target=run_worker, args=(w,)) for w in range(P)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if config.K > 0 and not config.last_iterate:
            for jj in range(config.m):
                lo, hi = part.block_bounds(jj)
                weight = config.K - last_commit[jj] + 1 - (1 if last_commit[jj] == 0 else 0)
                stage_sum[lo:hi] += x[lo:hi] * weight
            x_tilde = stage_sum / config.K
        else:
            x_tilde = x
        trace.records.append(
            StageRecord(s, problem.objective(x_tilde), time.perf_counter() - t0, config.K)
        )
        all_delays.extend(stage_delays)
        stage_means.append(float(np.mean(stage_delays)) if stage_delays else 0.0)
        if stop_below is not None and trace.records[-1].objective <= stop_below:
            break
    trace.x_final = x_tilde
    return _finish_report(
        trace, ReadMode.INCONSISTENT.value, all_delays, stage_means, worker_updates,
        None, mode.declared_tau, log,
    )
