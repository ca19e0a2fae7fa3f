"""Command-line entry point.

    fidsta dist       --n-qubits N --rank K [--form exact|approx|auto] [--fidelity F]
    fidsta moments    --n-qubits N --ranks 1..K
    fidsta estimate   INPUT... --ranks 1..20 [--method prob|count] [--mode fixed-rank|per-circuit|pooled]
    fidsta simulate   --n-qubits N --fidelity F --shots S [--top-k K] [--trials M]
    fidsta min-shots  --n-qubits N --fidelity F --eps-rel E [--trials M]
    fidsta scaling    --n-min 12 --n-max 28 --fidelity 0.48 --ranks 1,2,3,5,6 [--ranks 3..6]
    fidsta ingest     FILE... [--top-k K] [--format counts|shots]

Exit codes: 0 success, 2 input parse error, 3 estimation failure,
4 configuration or usage error, 1 anything else (I/O failures included).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import ConfigError, FidstaError
from .estimator import (
    DEFAULT_GRID,
    JacobianMode,
    RankSelection,
    estimate,
    estimate_fixed_rank,
    estimate_single_circuit,
)
from .noise import DeformedRankPdf, NoiseModel, apply_noise
from .orderstat import Dims, rank_pdf, second_moment
from .simulator import (
    SimConfig,
    error_scaling_experiment,
    min_shots_bisection,
    run_trials,
)

log = logging.getLogger("fidsta")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_ESTIMATION = 3
EXIT_CONFIG = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors here; exit 2 is reserved for input files
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _add_globals(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(0), help="64-bit base seed (default 0)")
    g.add_argument("--out", default=d("-"), help="output path, '-' for stdout (default)")
    g.add_argument("--log-level", default=d("WARNING"),
                   choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    g.add_argument("--threads", type=int, default=d(1), help="worker threads (results do not depend on it)")


def _fidelity(s: str) -> float:
    f = float(s)
    if not 0.0 <= f <= 1.0:
        raise argparse.ArgumentTypeError(f"fidelity must lie in [0, 1], got {s}")
    return f


def _positive(s: str) -> int:
    v = int(float(s)) if "e" in s.lower() else int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _ranks(s: str) -> RankSelection:
    try:
        return RankSelection.parse(s)
    except (FidstaError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_dist(a) -> str:
    dims = Dims(a.n_qubits)
    base = rank_pdf(dims, a.rank, a.form)
    m = second_moment(dims, a.rank)
    sd = math.sqrt(max(m.variance, 0.0))
    lo_s, hi_s = base.support
    lo = max(lo_s, m.mean - 8.0 * sd) if a.x_min is None else a.x_min
    hi = min(hi_s, m.mean + 12.0 * sd) if a.x_max is None else a.x_max
    if a.fidelity is None:
        x = np.linspace(lo, hi, a.grid)
        y = base.pdf(x)
    else:
        noise = NoiseModel(a.fidelity)
        d = DeformedRankPdf(base, noise, JacobianMode.parse(a.jacobian))
        if a.x_min is None:
            lo = apply_noise(lo, noise, dims)
        if a.x_max is None:
            hi = apply_noise(hi, noise, dims)
        x = np.linspace(lo, hi, a.grid)
        y = d.pdf(x)
    return io._csv_text(("x", "pdf"), zip(x.tolist(), np.atleast_1d(y).tolist()))


def cmd_moments(a) -> str:
    dims = Dims(a.n_qubits)
    a.ranks.check_available(dims.dim, f"D={dims.dim} outcomes")
    rows = []
    for k in a.ranks.ranks:
        m = second_moment(dims, k)
        rows.append((k, m.mean, m.second_moment, m.variance))
    return io._csv_text(("k", "mean", "second_moment", "variance"), rows)


def _curve_path(base: str, label: str) -> Path:
    p = Path(base)
    return p.with_name(f"{p.stem}_{label}{p.suffix or '.csv'}")


def cmd_estimate(a) -> str:
    data = io.load_inputs(a.inputs, a.top_k, a.format, a.threads)
    dims = data.dims
    kw = dict(form=a.form, jacobian=a.jacobian, grid=a.grid)
    records = list(data.records)
    if a.mode == "pooled":
        res = estimate(records, a.ranks, dims, a.method, **kw)
        if a.curve:
            io.write_text(io.curve_csv(res.curve), a.curve)
        return io.canonical_json({"mode": a.mode, "n_qubits": dims.n_qubits, "result": res})
    results = []
    if a.mode == "fixed-rank":
        for k in a.ranks.ranks:
            res = estimate_fixed_rank(records, k, dims, a.method, **kw)
            results.append({"rank": k, "result": res})
            if a.curve:
                io.write_text(io.curve_csv(res.curve), _curve_path(a.curve, f"rank{k}"))
    else:
        for r in records:
            res = estimate_single_circuit(r, a.ranks, dims, a.method, **kw)
            results.append({"circuit_id": r.circuit_id, "result": res})
            if a.curve:
                io.write_text(io.curve_csv(res.curve), _curve_path(a.curve, r.circuit_id))
    peaks = [x["result"].f_hat for x in results]
    return io.canonical_json({
        "mode": a.mode,
        "n_qubits": dims.n_qubits,
        "results": results,
        "summary": {"min": min(peaks), "max": max(peaks), "mean": math.fsum(peaks) / len(peaks)},
    })


def _sim_config(a, shots: int = 1) -> SimConfig:
    dims = Dims(a.n_qubits)
    return SimConfig(dims, a.fidelity, shots, top_k=min(a.top_k, dims.dim), trials=a.trials, seed=a.seed,
                     eps_rel=getattr(a, "eps_rel", 0.1), statistic=getattr(a, "statistic", "mean"),
                     law=a.law, rerank=not a.no_rerank)


def cmd_simulate(a) -> str:
    cfg = _sim_config(a, a.shots)
    est = run_trials(cfg, threads=a.threads)
    rel = np.abs(est - cfg.true_fidelity) / cfg.true_fidelity if cfg.true_fidelity > 0 else np.full(est.size, np.nan)
    log.info("mean f_hat=%.6g mean relative error=%.6g", float(np.mean(est)), float(np.mean(rel)))
    if str(a.out).endswith(".json"):
        return io.canonical_json({"n_qubits": a.n_qubits, "fidelity": a.fidelity, "shots": a.shots,
                                  "top_k": cfg.top_k, "seed": a.seed, "estimates": est,
                                  "mean_rel_error": math.fsum(rel) / rel.size})
    return io.trials_csv(est, cfg.true_fidelity)


def cmd_min_shots(a) -> str:
    cfg = _sim_config(a)
    res = min_shots_bisection(cfg, a.s_lo, a.s_hi, threads=a.threads, ceiling=a.ceiling)
    return io.canonical_json(res)


def cmd_scaling(a) -> str:
    if a.n_max < a.n_min:
        raise ConfigError("--n-max must be >= --n-min")
    sets = a.ranks or [RankSelection.parse("1,2,3,5,6"), RankSelection.parse("3..6")]
    n_values = list(range(a.n_min, a.n_max + 1, a.n_step))
    rows = error_scaling_experiment(n_values, a.fidelity, sets, a.trials, seed=a.seed, threads=a.threads,
                                    form=a.form, jacobian=a.jacobian, shots=a.shots)
    return io.render(rows, ".json" if str(a.out).endswith(".json") else ".csv")


def cmd_ingest(a) -> str:
    if a.from_samples:
        if a.n_qubits is None:
            raise ConfigError("--from-samples needs --n-qubits")
        raws = []
        for p in a.files:
            with open(p, encoding="utf-8") as fh:
                raws.append(io.convert_sycamore(fh, a.n_qubits, Path(p).stem))
        if a.write_counts:
            out_dir = Path(a.write_counts)
            out_dir.mkdir(parents=True, exist_ok=True)
            for raw in raws:
                with open(out_dir / f"{raw.circuit_id}.csv", "w", encoding="utf-8", newline="\n") as fh:
                    io.write_raw(raw, fh)
        data = io.Dataset(tuple(io.to_record(r, a.top_k) for r in raws), Dims(a.n_qubits),
                          tuple((str(p), io._sha256(p)) for p in a.files))
    else:
        data = io.load_dataset(a.files, a.top_k, a.format, a.threads)
    for r in data.records:
        if r.truncated:
            log.warning("%s: truncated to %d ranks", r.circuit_id, r.n_ranks)
    return io.canonical_json(data)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fidsta", description="Fidelity estimation from ranked output probabilities.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        _add_globals(sp, suppress=True)
        sp.set_defaults(func=fn)
        return sp

    def form_arg(sp):
        sp.add_argument("--form", choices=["exact", "approx", "auto"], default="auto")

    def jac_arg(sp):
        sp.add_argument("--jacobian", choices=["on", "off"], default="on",
                        type=lambda s: s.lower(), help="include the 1/f factor (on) or not (off)")

    sp = cmd("dist", cmd_dist, "tabulate the rank-k density as CSV x,pdf")
    sp.add_argument("--n-qubits", type=int, required=True)
    sp.add_argument("--rank", type=_positive, required=True)
    form_arg(sp)
    sp.add_argument("--grid", type=_positive, default=400)
    sp.add_argument("--fidelity", type=_fidelity, default=None, help="tabulate the noisy density instead")
    jac_arg(sp)
    sp.add_argument("--x-min", type=float, default=None)
    sp.add_argument("--x-max", type=float, default=None)

    sp = cmd("moments", cmd_moments, "closed-form moments as CSV k,mean,second_moment,variance")
    sp.add_argument("--n-qubits", type=int, required=True)
    sp.add_argument("--ranks", type=_ranks, required=True)

    sp = cmd("estimate", cmd_estimate, "maximum-likelihood fidelity from ranked records")
    sp.add_argument("inputs", nargs="*", help="records JSON or raw count/shot files")
    sp.add_argument("--input", dest="inputs_opt", action="append", default=[], help="same as positional inputs")
    sp.add_argument("--ranks", type=_ranks, required=True)
    sp.add_argument("--method", choices=["prob", "count"], default="prob")
    sp.add_argument("--mode", choices=["fixed-rank", "per-circuit", "pooled"], default="pooled")
    form_arg(sp)
    jac_arg(sp)
    sp.add_argument("--grid", type=_positive, default=DEFAULT_GRID)
    sp.add_argument("--curve", default=None, help="write f,loglik CSV here (one file per estimate)")
    sp.add_argument("--top-k", type=_positive, default=20, help="ranks kept from raw files")
    sp.add_argument("--format", choices=["counts", "shots"], default=None)

    def sim_args(sp):
        sp.add_argument("--n-qubits", type=int, required=True)
        sp.add_argument("--fidelity", type=_fidelity, required=True)
        sp.add_argument("--top-k", type=_positive, default=500)
        sp.add_argument("--trials", type=_positive, default=100)
        sp.add_argument("--law", choices=["poisson", "binomial"], default="poisson")
        sp.add_argument("--no-rerank", action="store_true", help="fit counts in their true rank order")

    sp = cmd("simulate", cmd_simulate, "repeated count-MLE trials on synthetic counts")
    sim_args(sp)
    sp.add_argument("--shots", type=_positive, required=True)

    sp = cmd("min-shots", cmd_min_shots, "bisect for the smallest shot count meeting an error threshold")
    sim_args(sp)
    sp.add_argument("--eps-rel", type=float, required=True)
    sp.add_argument("--statistic", choices=["mean", "median"], default="mean")
    sp.add_argument("--s-lo", type=_positive, default=None)
    sp.add_argument("--s-hi", type=_positive, default=None)
    sp.add_argument("--ceiling", type=_positive, default=None)

    sp = cmd("scaling", cmd_scaling, "probability-MLE error versus system size")
    sp.add_argument("--n-min", type=int, default=12)
    sp.add_argument("--n-max", type=int, default=28)
    sp.add_argument("--n-step", type=_positive, default=4)
    sp.add_argument("--fidelity", type=_fidelity, default=0.48)
    sp.add_argument("--ranks", type=_ranks, action="append", default=None, help="repeat for several rank sets")
    sp.add_argument("--trials", type=_positive, default=10)
    sp.add_argument("--shots", type=_positive, default=None, help="finite-shot records instead of exact probabilities")
    form_arg(sp)
    jac_arg(sp)

    sp = cmd("ingest", cmd_ingest, "validate count files and emit a records JSON document")
    sp.add_argument("files", nargs="+")
    sp.add_argument("--top-k", type=_positive, default=20)
    sp.add_argument("--format", choices=["counts", "shots"], default=None)
    sp.add_argument("--from-samples", action="store_true",
                    help="inputs are raw sample dumps (bitstrings or integer outcomes), one per line")
    sp.add_argument("--n-qubits", type=int, default=None)
    sp.add_argument("--write-counts", default=None, help="directory for converted count files")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, a.log_level), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if a.command == "estimate":
        a.inputs = list(a.inputs) + list(a.inputs_opt)
        if not a.inputs:
            sys.stderr.write("fidsta estimate: error: no input files\n")
            return EXIT_CONFIG
    if a.threads < 1:
        sys.stderr.write("fidsta: error: --threads must be >= 1\n")
        return EXIT_CONFIG
    if hasattr(a, "jacobian"):
        a.jacobian = JacobianMode.parse(a.jacobian)
    try:
        text = a.func(a)
        io.write_text(text, a.out)
    except FidstaError as exc:
        sys.stderr.write(f"fidsta {a.command}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"fidsta {a.command}: {exc}\n")
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
