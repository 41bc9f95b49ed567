"""Benchmark driver: reference-optimum computation, suboptimality traces down
to a configured stopping tolerance, and speedup measurement across worker
counts.

Experiments are described by flat key=value config files; command-line
``--set key=value`` flags override file values, which override defaults.

Subcommands:
    stats <dataset>                     dataset statistics (key=value or JSON)
    synth <spec> -o <path>              generate a synthetic LIBSVM file
    ref <config>                        compute and store the reference optimum
    run <config>                        one experiment; per-stage CSV + summary
    speedup <config> --workers 1,2,4    threads-mode speedup table

Exit codes: 0 success, 1 usage errors, 2 DNF or fatally inadmissible runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import async_engine, data_io, seq_solvers, theory
from .errors import ContractViolation, ConvergenceFailure
from .linalg import DenseVec
from .problem import Dataset, LossKind, Problem, Regularizer, prox_elastic

SEQ_ALGOS = ("prox_sgd", "prox_scd", "prox_svrg", "prox_svrcd")
ASYNC_ALGOS = ("async_svrg", "async_svrcd")

# default regularizer weights for the standard benchmark files
_DATASET_LAMBDAS = {
    "rcv1": (1e-5, 1e-4),
    "real-sim": (1e-4, 1e-4),
    "news20": (1e-6, 1e-4),
}


@dataclass
class ExperimentConfig:
    dataset: str
    algorithm: str
    eta: float
    K: int
    loss: str = "logistic"
    lambda1: float = 0.0
    lambda2: float = 1e-4
    normalize: bool = True
    B: int = 1
    m: int = 1
    max_stages: int = 20
    eta_decay: tuple | None = None
    mode: str = "seq"
    include_prob: float = 0.5
    schedule_seed: int | None = None
    tau: int | None = None
    stop_tol: float = 1e-10
    seed: int = 0
    ref_tol: float = 1e-12
    ref_eta: float | None = None
    ref_max_iter: int = 1_000_000
    p_star: float | None = None
    mu: float | None = None
    L_const: float | None = None
    T_const: float | None = None
    speedup_target: float = 1e-4
    with_replacement: bool = True
    last_iterate: bool = False


_BOOL_KEYS = {"normalize", "with_replacement", "last_iterate"}
_INT_KEYS = {"K", "B", "m", "max_stages", "seed", "ref_max_iter", "tau", "schedule_seed"}
_FLOAT_KEYS = {
    "eta", "lambda1", "lambda2", "include_prob", "stop_tol", "ref_tol", "ref_eta",
    "p_star", "mu", "L_const", "T_const", "speedup_target",
}
_ALIASES = {"S": "max_stages"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ContractViolation(f"bad boolean for {key}: {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "eta_decay":
        eta0, sigma0 = (float(tok) for tok in raw.split(","))
        return (eta0, sigma0)
    return raw


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractViolation(f"{path}:{lineno}: expected key=value")
            key, raw = line.split("=", 1)
            out[key.strip()] = raw.strip()
    return out


def build_experiment(mapping: dict) -> ExperimentConfig:
    fields_ = set(ExperimentConfig.__dataclass_fields__)
    kwargs = {}
    for key, raw in mapping.items():
        key = _ALIASES.get(key, key)
        if key not in fields_:
            raise ContractViolation(f"unknown config key: {key!r}")
        kwargs[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    for required in ("dataset", "algorithm", "eta", "K"):
        if required not in kwargs:
            raise ContractViolation(f"missing required config key: {required!r}")
    cfg = ExperimentConfig(**kwargs)
    if cfg.algorithm not in SEQ_ALGOS + ASYNC_ALGOS:
        raise ContractViolation(f"unknown algorithm {cfg.algorithm!r}")
    if cfg.algorithm in ASYNC_ALGOS and cfg.mode == "seq":
        raise ContractViolation("async algorithms need mode=simulate:... or threads:P")
    if cfg.algorithm in SEQ_ALGOS and cfg.mode != "seq":
        raise ContractViolation("sequential algorithms use mode=seq")
    if cfg.stop_tol <= 0:
        raise ContractViolation("stop_tol must be > 0")
    # Table-defaults for the standard benchmark files when lambdas were not given
    if "lambda1" not in kwargs and "lambda2" not in kwargs:
        name = Path(cfg.dataset).name.lower()
        for tag, (l1, l2) in _DATASET_LAMBDAS.items():
            if tag in name:
                cfg = replace(cfg, lambda1=l1, lambda2=l2)
                break
    return cfg


def _parse_synth_spec(spec: str) -> dict:
    out = {"seed": 0, "label": "logistic"}
    for tok in spec.split(","):
        if not tok:
            continue
        key, _, raw = tok.partition("=")
        key = key.strip()
        if key == "n" or key == "d" or key == "seed":
            out[key] = int(raw)
        elif key == "delta":
            out[key] = float(raw)
        elif key == "label":
            out[key] = raw.strip()
        else:
            raise ContractViolation(f"unknown synth key {key!r}")
    for required in ("n", "d", "delta"):
        if required not in out:
            raise ContractViolation(f"synth spec needs {required}=...")
    return out


def load_dataset(source: str, normalize: bool = True) -> Dataset:
    """`path/to/file[.gz]` or `synth:n=..,d=..,delta=..[,seed=..][,label=..]`."""
    if source.startswith("synth:"):
        spec = _parse_synth_spec(source[len("synth:"):])
        ds = data_io.synth_dataset(
            spec["n"], spec["d"], spec["delta"], label_rule=spec["label"], seed=spec["seed"]
        )
        return ds  # synth_dataset already normalizes
    ds = data_io.read_libsvm(source)
    if normalize:
        ds = data_io.normalize_rows(ds)
    return ds


def build_problem(cfg: ExperimentConfig) -> Problem:
    dataset = load_dataset(cfg.dataset, cfg.normalize)
    return Problem(dataset, LossKind.parse(cfg.loss), Regularizer(cfg.lambda1, cfg.lambda2))


@dataclass
class ReferenceOptimum:
    x_star: DenseVec
    p_star: float
    certificate: float
    iterations: int


def compute_reference_optimum(
    problem: Problem,
    ref_tol: float = 1e-12,
    *,
    eta: float | None = None,
    max_iter: int = 1_000_000,
    x0: DenseVec | None = None,
) -> ReferenceOptimum:
    """Deterministic proximal gradient descent until the prox-gradient
    mapping G_eta(x) = (x - prox_{eta R}(x - eta grad F(x))) / eta has norm
    below ``ref_tol``. Needs a unique minimizer (lambda2 > 0 suffices)."""
    if eta is None:
        L, _ = theory.estimate_lipschitz(problem.dataset, problem.loss)
        eta = 1.0 / L if L > 0 else 1.0
    x = np.zeros(problem.d) if x0 is None else x0.copy()
    best = math.inf
    cert = math.inf
    for it in range(1, max_iter + 1):
        g = problem.full_grad(x)
        x_next = prox_elastic(x - eta * g, eta, problem.reg)
        cert = float(np.linalg.norm(x - x_next)) / eta
        x = x_next
        best = min(best, cert)
        if cert <= ref_tol:
            return ReferenceOptimum(x, problem.objective(x), cert, it)
    raise ConvergenceFailure(
        f"reference optimum did not reach {ref_tol:g} in {max_iter} iterations "
        f"(best certificate {best:g})",
        best_certificate=best,
    )


def _parse_mode(cfg: ExperimentConfig, total_updates: int):
    """Translate the mode string into an engine mode object."""
    if cfg.mode == "seq":
        return None
    parts = cfg.mode.split(":")
    if parts[0] == "threads":
        if len(parts) != 2:
            raise ContractViolation("threads mode is threads:<P>")
        return async_engine.ThreadsMode(int(parts[1]), declared_tau=cfg.tau)
    if parts[0] == "simulate":
        if len(parts) != 3:
            raise ContractViolation("simulate mode is simulate:<law>:<tau>")
        law, tau = parts[1], int(parts[2])
        schedule = async_engine.sample_delay_schedule(
            law,
            tau,
            total_updates,
            cfg.schedule_seed if cfg.schedule_seed is not None else cfg.seed,
            inconsistent=cfg.algorithm.endswith("svrcd"),
            include_prob=cfg.include_prob,
        )
        return async_engine.SimulateMode(schedule)
    raise ContractViolation(f"unknown mode {cfg.mode!r}")


def _theory_verdict(cfg: ExperimentConfig, problem: Problem, tau_for_theory: float):
    """(constants, admissible, rho) for the configured run; rho may be nan."""
    delta = theory.data_sparsity_delta(problem.dataset)
    L_est, T_est = theory.estimate_lipschitz(problem.dataset, problem.loss)
    L = cfg.L_const if cfg.L_const is not None else L_est
    T = cfg.T_const if cfg.T_const is not None else T_est
    mu = cfg.mu if cfg.mu is not None else problem.reg.lambda2
    if mu <= 0 or delta <= 0:
        return None, None, None
    consts = theory.ProblemConstants(
        mu=mu, L=L, T=T, Delta=delta, tau=tau_for_theory,
        B=cfg.B, K=cfg.K, m=cfg.m, eta=cfg.eta,
    )
    if cfg.algorithm.endswith("svrcd"):
        admissible = theory.svrcd_stepsize_admissible(consts)
        rate_fn = theory.svrcd_rate
    elif cfg.algorithm.endswith("svrg"):
        admissible = theory.svrg_stepsize_admissible(consts)
        rate_fn = theory.svrg_rate
    else:
        return consts, None, None  # no stage-rate result for SGD/SCD
    try:
        rho = rate_fn(consts)
    except theory.RateDomainError:
        rho = math.nan
    return consts, admissible, rho


def _solver_config(cfg: ExperimentConfig) -> seq_solvers.SolverConfig:
    return seq_solvers.SolverConfig(
        eta=cfg.eta,
        B=cfg.B,
        K=cfg.K,
        S=cfg.max_stages,
        m=cfg.m,
        eta_decay=cfg.eta_decay,
        seed=cfg.seed,
        with_replacement=cfg.with_replacement,
        last_iterate=cfg.last_iterate,
    )


_SEQ_RUNNERS = {
    "prox_sgd": seq_solvers.prox_sgd_run,
    "prox_scd": seq_solvers.prox_scd_run,
    "prox_svrg": seq_solvers.prox_svrg_run,
    "prox_svrcd": seq_solvers.prox_svrcd_run,
}


def _execute(cfg: ExperimentConfig, problem: Problem, stop_below: float | None):
    """Run the configured solver; returns (RunTrace, AsyncReport | None)."""
    sc = _solver_config(cfg)
    x0 = np.zeros(problem.d)
    if cfg.algorithm in SEQ_ALGOS:
        trace = _SEQ_RUNNERS[cfg.algorithm](problem, sc, x0, stop_below=stop_below)
        return trace, None
    mode = _parse_mode(cfg, sc.S * sc.K)
    runner = (
        async_engine.async_svrg_run
        if cfg.algorithm == "async_svrg"
        else async_engine.async_svrcd_run
    )
    report = runner(problem, sc, x0, mode, stop_below=stop_below)
    return report.trace, report


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Execute one experiment; write trace.csv and summary.txt.

    Returns the summary mapping (status OK/DNF/FAILED included). An
    inadmissible step size is a warning, not an error; the theory fields in
    the summary record the verdict either way.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    stats = data_io.dataset_stats(problem.dataset)

    if cfg.p_star is not None:
        ref = ReferenceOptimum(np.zeros(problem.d), cfg.p_star, math.nan, 0)
    else:
        ref = compute_reference_optimum(
            problem, cfg.ref_tol, eta=cfg.ref_eta, max_iter=cfg.ref_max_iter
        )

    if cfg.mode.startswith("simulate:"):
        tau_for_theory = float(cfg.mode.split(":")[2])
    elif cfg.tau is not None:
        tau_for_theory = float(cfg.tau)
    else:
        tau_for_theory = 0.0
    consts, admissible, rho = _theory_verdict(cfg, problem, tau_for_theory)
    if admissible is False:
        warnings.warn(
            f"step size eta={cfg.eta:g} is not admissible for {cfg.algorithm}; "
            "the run proceeds with the theory fields marked inadmissible"
        )

    stopping = None if math.isinf(cfg.stop_tol) else ref.p_star + cfg.stop_tol
    t_start = time.perf_counter()
    trace, report = _execute(cfg, problem, stopping)
    wall = time.perf_counter() - t_start

    subopts = [rec.objective - ref.p_star for rec in trace.records]
    status = "OK"
    if any(s < -1e-12 for s in subopts):
        status = "FAILED"  # reference optimum too loose for this run
    elif not math.isinf(cfg.stop_tol) and (not subopts or subopts[-1] > cfg.stop_tol):
        status = "DNF"

    trace_path = out / "trace.csv"
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "suboptimality", "seconds", "updates", "observed_mean_delay"])
        for i, rec in enumerate(trace.records):
            mean_delay = report.stage_mean_delays[i] if report is not None else 0.0
            writer.writerow(
                [rec.stage, f"{subopts[i]:.17g}", f"{rec.seconds:.6f}", rec.updates,
                 f"{mean_delay:.6g}"]
            )

    summary = {
        "status": status,
        "algorithm": cfg.algorithm,
        "mode": cfg.mode,
        "dataset": cfg.dataset,
        "loss": cfg.loss,
        "n": stats.n,
        "d": stats.d,
        "nnz": stats.nnz,
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "seed": cfg.seed,
        "eta": cfg.eta,
        "B": cfg.B,
        "K": cfg.K,
        "m": cfg.m,
        "max_stages": cfg.max_stages,
        "stop_tol": cfg.stop_tol,
        "stages_used": len(trace.records),
        "total_updates": sum(r.updates for r in trace.records),
        "final_suboptimality": subopts[-1] if subopts else math.nan,
        "seconds": wall,
        "p_star": ref.p_star,
        "ref_certificate": ref.certificate,
        "delta": stats.delta,
        "mu": consts.mu if consts else math.nan,
        "L": consts.L if consts else math.nan,
        "T": consts.T if consts else math.nan,
        "tau_theory": tau_for_theory,
        "eta_admissible": "n/a" if admissible is None else str(bool(admissible)).lower(),
        "rho": "n/a" if rho is None else f"{rho:.17g}",
    }
    if report is not None:
        summary["observed_mean_delay"] = report.delay_mean
        summary["observed_max_delay"] = report.delay_max
        summary["mean_delay_exceeded"] = str(report.mean_delay_exceeded).lower()
    _write_summary(out / "summary.txt", summary)
    return summary


def _write_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        for key, val in summary.items():
            if isinstance(val, float):
                fh.write(f"{key}={val:.17g}\n")
            else:
                fh.write(f"{key}={val}\n")


def speedup_report(cfg: ExperimentConfig, worker_counts, out_dir) -> list:
    """Threads-mode wall-clock to a fixed target suboptimality across worker
    counts; writes speedup.csv. Rows that never reach the target within the
    stage budget are marked DNF."""
    if cfg.algorithm not in ASYNC_ALGOS:
        raise ContractViolation("speedup needs an async algorithm")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    if cfg.p_star is not None:
        ref = ReferenceOptimum(np.zeros(problem.d), cfg.p_star, math.nan, 0)
    else:
        ref = compute_reference_optimum(
            problem, cfg.ref_tol, eta=cfg.ref_eta, max_iter=cfg.ref_max_iter
        )
    target = ref.p_star + cfg.speedup_target
    sc = _solver_config(cfg)
    runner = (
        async_engine.async_svrg_run
        if cfg.algorithm == "async_svrg"
        else async_engine.async_svrcd_run
    )

    # sequential-solver baseline for the summary record
    seq_runner = _SEQ_RUNNERS["prox_svrg" if cfg.algorithm == "async_svrg" else "prox_svrcd"]
    t0 = time.perf_counter()
    seq_trace = seq_runner(problem, sc, np.zeros(problem.d), stop_below=target)
    seq_seconds = time.perf_counter() - t0
    seq_reached = seq_trace.records and seq_trace.records[-1].objective <= target

    rows = []
    base_seconds = None
    for P in worker_counts:
        mode = async_engine.ThreadsMode(int(P), declared_tau=cfg.tau)
        t0 = time.perf_counter()
        report = runner(problem, sc, np.zeros(problem.d), mode, stop_below=target)
        seconds = time.perf_counter() - t0
        reached = report.trace.records[-1].objective <= target if report.trace.records else False
        row = {
            "P": int(P),
            "seconds": seconds if reached else None,
            "updates_per_sec": report.total_commits / seconds if seconds > 0 else 0.0,
            "observed_mean_delay": report.delay_mean,
            "observed_max_delay": report.delay_max,
            "dnf": not reached,
        }
        if reached and base_seconds is None and int(P) == int(worker_counts[0]):
            base_seconds = seconds
        row["speedup_vs_P1"] = (
            base_seconds / seconds if (reached and base_seconds) else None
        )
        rows.append(row)

    path = out / "speedup.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["P", "seconds", "updates_per_sec", "speedup_vs_P1",
             "observed_mean_delay", "observed_max_delay"]
        )
        for row in rows:
            writer.writerow([
                row["P"],
                "DNF" if row["dnf"] else f"{row['seconds']:.6f}",
                f"{row['updates_per_sec']:.3f}",
                "" if row["speedup_vs_P1"] is None else f"{row['speedup_vs_P1']:.3f}",
                f"{row['observed_mean_delay']:.6g}",
                row["observed_max_delay"],
            ])
    _write_summary(
        out / "speedup_summary.txt",
        {
            "algorithm": cfg.algorithm,
            "target_suboptimality": cfg.speedup_target,
            "p_star": ref.p_star,
            "seq_seconds": seq_seconds if seq_reached else math.nan,
            "seq_reached": str(bool(seq_reached)).lower(),
            "worker_counts": ",".join(str(int(P)) for P in worker_counts),
        },
    )
    return rows


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(args) -> ExperimentConfig:
    mapping = parse_config_file(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise ContractViolation(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        mapping[key.strip()] = raw.strip()
    return build_experiment(mapping)


def main(argv=None) -> int:
    parser = _Parser(prog="proxvr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="dataset statistics")
    p_stats.add_argument("dataset")
    p_stats.add_argument("--expected-dim", type=int, default=None)
    p_stats.add_argument("--normalize", action="store_true")
    p_stats.add_argument("--json", action="store_true")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("spec", help="n=..,d=..,delta=..[,seed=..][,label=..]")
    p_synth.add_argument("-o", "--output", required=True)

    for name in ("ref", "run", "speedup"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("-o", "--out", default="proxvr_out")
        p.add_argument("--set", action="append", metavar="KEY=VALUE")
        if name == "speedup":
            p.add_argument("--workers", default="1,2,4")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ContractViolation, FileNotFoundError) as exc:
        print(f"proxvr: error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceFailure as exc:
        print(f"proxvr: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "stats":
        if args.dataset.startswith("synth:"):
            ds = load_dataset(args.dataset, normalize=args.normalize)
        else:
            ds = data_io.read_libsvm(args.dataset, args.expected_dim)
            if args.normalize:
                ds = data_io.normalize_rows(ds)
        stats = data_io.dataset_stats(ds)
        if args.json:
            print(json.dumps(data_io.stats_record(stats), indent=2))
        else:
            print(data_io.format_stats(stats))
        return 0

    if args.command == "synth":
        spec = _parse_synth_spec(args.spec)
        ds = data_io.synth_dataset(
            spec["n"], spec["d"], spec["delta"], label_rule=spec["label"], seed=spec["seed"]
        )
        data_io.write_libsvm(ds, args.output)
        print(data_io.format_stats(data_io.dataset_stats(ds)))
        return 0

    cfg = _load_config(args)

    if args.command == "ref":
        problem = build_problem(cfg)
        ref = compute_reference_optimum(
            problem, cfg.ref_tol, eta=cfg.ref_eta, max_iter=cfg.ref_max_iter
        )
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_summary(
            out / "reference.txt",
            {
                "p_star": ref.p_star,
                "certificate": ref.certificate,
                "iterations": ref.iterations,
            },
        )
        np.savetxt(out / "x_star.txt", ref.x_star)
        print(f"p_star={ref.p_star:.17g} certificate={ref.certificate:.3g} "
              f"iterations={ref.iterations}")
        return 0

    if args.command == "run":
        summary = run_experiment(cfg, args.out)
        for key in ("status", "final_suboptimality", "stages_used", "rho", "eta_admissible"):
            val = summary[key]
            print(f"{key}={val:.6g}" if isinstance(val, float) else f"{key}={val}")
        return 0 if summary["status"] == "OK" else 2

    if args.command == "speedup":
        counts = [int(tok) for tok in args.workers.split(",") if tok]
        rows = speedup_report(cfg, counts, args.out)
        for row in rows:
            mark = "DNF" if row["dnf"] else f"{row['seconds']:.3f}s"
            print(f"P={row['P']} {mark} updates/s={row['updates_per_sec']:.1f}")
        return 2 if any(row["dnf"] for row in rows) else 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
