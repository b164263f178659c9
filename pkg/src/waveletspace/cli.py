"""Command-line front end.

Exit codes: 0 success, 2 malformed input or config, 3 infeasible
configuration (including a refused non-contraction), 4 numerical
non-convergence. Every output file is written atomically after all the
computation has finished, so failing runs leave nothing behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .core import CoefficientField, GridFunction, ParameterError, SpaceParams
from .counterexample import (
    InfeasibleError,
    build_sequences,
    divergence_experiment,
    fractal_log_morrey,
    increment_ratios,
    kernel_lower_bound_ratios,
)
from .decompositions import atom_decompose, product_decompose
from .io import FormatError, atomic_write, atomic_write_text, coeffs_to_text, dumps, read_coeffs, read_grid, grid_to_bytes
from .plotting import render_table
from .solver import ContractionError, neumann_solve
from .spaces import NormReport, bmo_r_seminorm, decay_envelope, log_morrey_norm, morrey_norm, sobolev_norm
from .wavelets import HAAR, WaveletSpec, forward_dwt, inverse_dwt

EXIT_OK, EXIT_MALFORMED, EXIT_INFEASIBLE, EXIT_NONCONVERGED = 0, 2, 3, 4
THREADS_ENV = "WAVELETSPACE_THREADS"
U64 = 2**64


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- run configuration -----------------------------------------------------------------

def _take(d: dict, allowed: dict, where: str) -> dict:
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be a JSON object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    out = dict(allowed)
    out.update(d)
    return out


FRACTAL_DEFAULTS = {"S_max": 3, "delta": 0.1, "v_floor": 8, "normalization": "l2", "log_morrey_depth": 8}
SOLVER_DEFAULTS = {"t": None, "r": None, "tol": 1e-10, "max_iter": 500, "power_iters": 200}
DICTIONARY_DEFAULTS = {"random_per_level": 1}
PARAM_DEFAULTS = SpaceParams().to_dict()


@dataclass(frozen=True)
class RunConfig:
    params: SpaceParams = field(default_factory=SpaceParams)
    wavelet: WaveletSpec = HAAR
    J: int = 10
    seed: int = 0
    fractal: dict = field(default_factory=lambda: dict(FRACTAL_DEFAULTS))
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    dictionary: dict = field(default_factory=lambda: dict(DICTIONARY_DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        top = _take(d, {"params": {}, "wavelet": HAAR.to_dict(), "J": 10, "seed": 0,
                        "fractal": {}, "solver": {}, "dictionary": {}}, "config")
        p = _take(top["params"], PARAM_DEFAULTS, "params")
        params = SpaceParams(n=int(p["n"]), t=float(p["t"]), r=float(p["r"]),
                             p=float(p["p"]), tau=float(p["tau"]))
        wavelet = WaveletSpec.from_dict(top["wavelet"])
        J = top["J"]
        if not isinstance(J, int) or isinstance(J, bool) or not 1 <= J <= 62:
            raise ValueError(f"J must be an integer in 1..62, got {J!r}")
        seed = _seed(top["seed"])
        fr = _take(top["fractal"], FRACTAL_DEFAULTS, "fractal")
        fr = {"S_max": int(fr["S_max"]), "delta": float(fr["delta"]), "v_floor": int(fr["v_floor"]),
              "normalization": str(fr["normalization"]), "log_morrey_depth": int(fr["log_morrey_depth"])}
        so = _take(top["solver"], SOLVER_DEFAULTS, "solver")
        so = {"t": None if so["t"] is None else float(so["t"]),
              "r": None if so["r"] is None else float(so["r"]),
              "tol": float(so["tol"]), "max_iter": int(so["max_iter"]),
              "power_iters": int(so["power_iters"])}
        di = _take(top["dictionary"], DICTIONARY_DEFAULTS, "dictionary")
        di = {"random_per_level": int(di["random_per_level"])}
        return cls(params, wavelet, J, seed, fr, so, di)

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "wavelet": self.wavelet.to_dict(), "J": self.J,
                "seed": self.seed, "fractal": dict(self.fractal), "solver": dict(self.solver),
                "dictionary": dict(self.dictionary)}

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config is not JSON: {exc.msg}", exc.pos) from None
        return cls.from_dict(d)

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        d = self.to_dict()
        d["seed"] = seed
        return RunConfig.from_dict(d)


def _seed(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {x!r}")
    return x


def threads_from_env(env=None) -> Optional[int]:
    """Validate the thread cap; it is recorded in provenance, never used to
    split work, so results cannot depend on it."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return val


# -- helpers --------------------------------------------------------------------------------

def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if x is None else (repr(x) if isinstance(x, float) else x) for x in row])
    return buf.getvalue()


def _commit(out_dir: str, files: dict) -> None:
    """Write every (name -> bytes | str) only after all content exists."""
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        path = os.path.join(out_dir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        if isinstance(content, str):
            atomic_write_text(path, content)
        else:
            atomic_write(path, content)


def _provenance(cfg: RunConfig, threads, **extra) -> dict:
    d = {"config": cfg.to_dict(), "seed": cfg.seed, "threads": threads, "version": __version__}
    d.update(extra)
    return d


# -- commands ----------------------------------------------------------------------------------

def cmd_transform(args, cfg: RunConfig, threads) -> int:
    with open(args.input, "rb") as fh:
        raw = fh.read()
    from .io import coeffs_from_text, grid_from_bytes
    if args.inverse:
        g = inverse_dwt(coeffs_from_text(raw), cfg.wavelet)
        atomic_write(args.output, grid_to_bytes(g))
    else:
        c = forward_dwt(grid_from_bytes(raw), cfg.wavelet)
        atomic_write_text(args.output, coeffs_to_text(c))
    return EXIT_OK


def compute_norm(c: CoefficientField, cfg: RunConfig, which: str, table: bool = False) -> NormReport:
    prm = cfg.params
    if c.n != prm.n:
        raise ValueError(f"field has n={c.n} but config params have n={prm.n}")
    if which == "sobolev":
        return sobolev_norm(c, prm.r, prm.p)
    if which == "morrey":
        return morrey_norm(c, prm, table)
    if which == "logmorrey":
        return log_morrey_norm(c, prm, table)
    if which == "bmo":
        return bmo_r_seminorm(c, prm.r, prm.p, table)
    if which == "envelope":
        return NormReport(decay_envelope(c, prm.r, prm.tau))
    raise ValueError(f"unknown norm {which!r}")


def cmd_norm(args, cfg: RunConfig, threads) -> int:
    c = read_coeffs(args.input)
    rep = compute_norm(c, cfg, args.which, args.table)
    sys.stdout.write(dumps(rep.to_dict()))
    return EXIT_OK


def counterexample_outputs(cfg: RunConfig, threads) -> dict:
    fr = cfg.fractal
    prm = cfg.params
    rows = divergence_experiment(prm, fr["delta"], fr["S_max"], fr["v_floor"], cfg.J)
    seq = build_sequences(prm, fr["S_max"], fr["v_floor"], fr["delta"], fr["normalization"])
    header = ["S", "q_power_p", "reference_sum", "ratio"]
    table = _csv_text(header, [[r["S"], r["q_power_p"], r["reference_sum"], r["ratio"]] for r in rows])
    deep = build_sequences(prm, max(fr["log_morrey_depth"], 1), fr["v_floor"], fr["delta"],
                           fr["normalization"])
    lm_tau = 1.0 / prm.p_conj
    lm = [[S, fractal_log_morrey(deep.truncated(S), tau=lm_tau)["value"]]
          for S in range(1, deep.depth + 1)]
    extra = {"v_floor": fr["v_floor"], "J": cfg.J, "sequences": seq.to_dict(),
             "increment_ratios": [[s, v] for s, v in increment_ratios(rows, fr["delta"])]}
    if prm.n == 1:
        extra["kernel_lower_bound_ratios"] = kernel_lower_bound_ratios(seq)
    return {"counterexample.csv": table,
            "log_morrey.csv": _csv_text(["S", "log_morrey"], lm),
            "counterexample.json": dumps(_provenance(cfg, threads, **extra))}


def cmd_counterexample(args, cfg: RunConfig, threads) -> int:
    _commit(args.out, counterexample_outputs(cfg, threads))
    return EXIT_OK


def cmd_solve(args, cfg: RunConfig, threads) -> int:
    so = cfg.solver
    t = args.t if args.t is not None else (so["t"] if so["t"] is not None else cfg.params.t)
    r = args.r if args.r is not None else (so["r"] if so["r"] is not None else cfg.params.r)
    tol = args.tol if args.tol is not None else so["tol"]
    max_iter = args.max_iter if args.max_iter is not None else so["max_iter"]
    V = read_grid(args.potential)
    g = read_grid(args.rhs)
    if (V.n, V.J) != (g.n, g.J):
        raise ValueError("potential and right-hand side live on different grids")
    from .solver import spectral_radius_estimate
    est = spectral_radius_estimate(V, t, r, iters=so["power_iters"], seed=cfg.seed)
    rep = neumann_solve(V, g, t, r, tol, max_iter, estimate=est)
    ratios = [None] + list(rep.contraction_estimates)
    rows = [[i + 1, ratios[i], rep.residual_history[i]] for i in range(rep.iterations)]
    report = _provenance(cfg, threads, t=t, r=r, tol=tol, max_iter=max_iter, **rep.to_dict())
    _commit(args.out, {"solve.json": dumps(report),
                       "solve.csv": _csv_text(["iteration", "ratio", "residual"], rows),
                       "solution.wgf": grid_to_bytes(rep.solution)})
    if not rep.converged:
        sys.stderr.write(f"no convergence in {max_iter} iterations (residual {rep.residual:.3e})\n")
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_decompose(args, cfg: RunConfig, threads) -> int:
    f, g = read_grid(args.f), read_grid(args.g)
    terms = product_decompose(f, g, args.N, cfg.wavelet)
    named = {"diagonal": terms.diagonal, "low_high": terms.low_high,
             "high_low": terms.high_low, "base": terms.base, "tail": terms.tail}
    named.update({f"shift_{s}": x for s, x in enumerate(terms.shifts, 1)})
    files = {f"decompose/{k}.wcf": coeffs_to_text(forward_dwt(v, cfg.wavelet)) for k, v in named.items()}
    err = float(np.max(np.abs((terms.total() - f * g).values)))
    err_ref = float(np.max(np.abs((terms.refinement_total() - terms.high_low).values)))
    manifest = _provenance(cfg, threads, N=args.N, terms=sorted(named), sup_error=err,
                           refinement_sup_error=err_ref)
    files["decompose/manifest.json"] = dumps(manifest)
    _commit(args.out, files)
    return EXIT_OK


def cmd_atoms(args, cfg: RunConfig, threads) -> int:
    c = read_coeffs(args.input)
    dec = atom_decompose(c, cfg.params.r, cfg.params.p, args.multiple)
    ok = bool(np.array_equal(dec.reconstruct().data, c.data))
    files, rows = {}, []
    for a in dec.atoms:
        files[f"atoms/atom_{a.v}.wcf"] = coeffs_to_text(a.coeffs)
        rows.append({"v": a.v, "entries": int(np.count_nonzero(a.coeffs.data)),
                     "measure": a.measure, "cubes": len(a.cubes)})
    manifest = _provenance(cfg, threads, multiple=args.multiple, atoms=rows,
                           chebyshev_sum=dec.chebyshev_sum(), chebyshev_bound=dec.chebyshev_bound(),
                           reconstruction_ok=ok)
    files["atoms/manifest.json"] = dumps(manifest)
    _commit(args.out, files)
    print(f"reconstruction_ok={'true' if ok else 'false'}")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _read_csv(path: str):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"empty CSV {path}", 0)
    return rows[0], rows[1:]


def cmd_report(args, cfg: RunConfig, threads) -> int:
    """Merge same-named CSVs of several run directories, add a run_id column,
    and render one PNG per merged table."""
    merged: dict = {}
    for i, run in enumerate(args.runs):
        if not os.path.isdir(run):
            raise FormatError(f"run directory {run!r} not found", 0)
        run_id = f"{i}:{os.path.basename(os.path.normpath(run))}"
        for name in sorted(os.listdir(run)):
            if not name.endswith(".csv"):
                continue
            header, rows = _read_csv(os.path.join(run, name))
            if name in merged and merged[name][0] != header:
                raise FormatError(f"{name}: header mismatch across runs", 0)
            entry = merged.setdefault(name, (header, []))
            entry[1].extend([run_id] + r for r in rows)
    if not merged:
        raise FormatError("no CSV files in the given runs", 0)
    files = {}
    for name, (header, rows) in sorted(merged.items()):
        full = ["run_id"] + header
        files[f"report/{name}"] = _csv_text(full, rows)
        files[f"report/{name[:-4]}.png"] = render_table(full, rows, name[:-4])
    files["report/manifest.json"] = dumps(_provenance(
        cfg, threads, runs=list(args.runs), tables={k: len(v[1]) for k, v in sorted(merged.items())}))
    _commit(args.out, files)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    common.add_argument("--out", default=".", help="output directory")

    p = argparse.ArgumentParser(prog="waveletspace", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("transform", parents=[common], help="forward or inverse DWT of a file")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--inverse", action="store_true", help="WCF1 in, WGF1 out")
    s.set_defaults(func=cmd_transform)

    s = sub.add_parser("norm", parents=[common], help="wavelet norm of a WCF1 field (JSON on stdout)")
    s.add_argument("input")
    s.add_argument("--which", required=True, choices=["sobolev", "morrey", "logmorrey", "bmo", "envelope"])
    s.add_argument("--table", action="store_true", help="include the per-cube table")
    s.set_defaults(func=cmd_norm)

    s = sub.add_parser("counterexample", parents=[common], help="divergence table of the fractal construction")
    s.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("solve", parents=[common], help="Neumann-series solve")
    s.add_argument("--t", type=float)
    s.add_argument("--r", type=float)
    s.add_argument("--tol", type=float)
    s.add_argument("--max-iter", dest="max_iter", type=int)
    s.add_argument("--potential", required=True, help="WGF1 potential V")
    s.add_argument("--rhs", required=True, help="WGF1 right-hand side g")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("decompose", parents=[common], help="product decomposition of two grids")
    s.add_argument("f")
    s.add_argument("g")
    s.add_argument("--N", type=int, default=3)
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("atoms", parents=[common], help="combination-atom decomposition of a field")
    s.add_argument("input")
    s.add_argument("--multiple", type=float, default=4.0)
    s.set_defaults(func=cmd_atoms)

    s = sub.add_parser("report", parents=[common], help="merge run CSVs and render PNGs")
    s.add_argument("runs", nargs="+")
    s.set_defaults(func=cmd_report)
    return p


def load_config(path: Optional[str], seed: Optional[int]) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        with open(path, "rb") as fh:
            raw = fh.read()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("config is not UTF-8", exc.start) from None
        cfg = RunConfig.from_json(text)
    if seed is not None:
        cfg = cfg.with_seed(_seed(seed))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = threads_from_env()
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg, threads)
    except InfeasibleError as exc:
        msg = str(exc)
        if exc.max_feasible is not None and "max feasible" not in msg:
            msg += f"; max feasible S is {exc.max_feasible}"
        sys.stderr.write(f"infeasible: {msg}\n")
        return EXIT_INFEASIBLE
    except ContractionError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except (FormatError, ParameterError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
