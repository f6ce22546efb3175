"""``sgdesign`` command line: mask evaluation, design generation, solves, sweeps.

Exit codes: 0 success, 2 input error, 3 domain error, 4 solver divergence.
Human output prints floats at 6 decimals; ``--json`` carries full precision.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .completion import (
    ObservedData,
    SolverOptions,
    generate_incoherent,
    read_matrix,
    snr,
    solve_factorized,
    solve_nuclear_norm,
    write_matrix,
)
from .config import Settings, dumps_config, load_config, to_bool, to_floats, to_pairs
from .designs import (
    JitterConfig,
    RngSeed,
    coil_point_cloud,
    jittered_selection,
    periodic_selection,
    read_points,
    relocate_random,
    uniform_random_selection,
)
from .errors import InputError, SGError
from .experiments import (
    DataModel,
    JitterGeometry,
    RelocationGeometry,
    density_sweep,
    design_comparison,
    jitter_sweep,
    metadata_to_json,
    relocation_sweep,
    write_outputs,
)
from .mask import MatricizationMap, gap_stats, read_mask, receiver_layout_mask, sampling_percentage, write_mask
from .spectral import connected_components, top_two_singular_values


def _f(x) -> str:
    return f"{x:.6f}"


def _write_sidecar(path: str, command: str, args: dict, extra: dict | None = None) -> None:
    meta = {"command": command, "args": args, "version": __version__}
    if extra:
        meta.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metadata_to_json(meta))


def _plain_args(ns: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(ns).items()) if k not in ("func",)}


# -- sg -------------------------------------------------------------------


def cmd_sg(ns) -> int:
    mask = read_mask(ns.mask)
    s = top_two_singular_values(mask, trim_empty=ns.trim_empty)
    comp = connected_components(mask)
    result = dict(
        s.as_dict(),
        components=comp.n_components,
        isolated_rows=comp.isolated_rows,
        isolated_cols=comp.isolated_cols,
        regular=mask.is_regular(),
        shape=list(mask.shape),
        nnz=mask.nnz,
        trim_empty=ns.trim_empty,
    )
    if ns.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(f"sigma1={_f(s.sigma1)} sigma2={_f(s.sigma2)} sg_ratio={_f(s.sg_ratio)}")
        print(
            f"components={comp.n_components} isolated_rows={comp.isolated_rows} "
            f"isolated_cols={comp.isolated_cols} regular={str(mask.is_regular()).lower()}"
        )
    if ns.out:
        with open(ns.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(result, sort_keys=True, indent=2) + "\n")
        _write_sidecar(ns.out + ".meta.json", "sg", _plain_args(ns))
    return 0


# -- generate -------------------------------------------------------------


def _selection(ns, n_pos: int) -> np.ndarray:
    seed = RngSeed(ns.seed)
    if ns.design == "periodic":
        return periodic_selection(n_pos, ns.keep_every, ns.offset)
    if ns.design == "relocation":
        return relocate_random(periodic_selection(n_pos, ns.keep_every, ns.offset), n_pos, ns.p, seed)
    if ns.design == "jitter":
        cfg = JitterConfig(n_pos, ns.interval, ns.rho, not ns.restrict_all, ns.partial_tail)
        return jittered_selection(cfg, seed)
    if ns.design == "random":
        if ns.count is None:
            raise InputError("--count is required for the random design")
        return uniform_random_selection(n_pos, ns.count, seed)
    raise InputError(f"unknown design '{ns.design}'")


def cmd_generate(ns) -> int:
    if min(ns.n_src, ns.n_rec_x, ns.n_rec_y) < 1:
        raise InputError("--n-src, --n-rec-x and --n-rec-y must be positive")
    n_pos = ns.n_rec_x * ns.n_rec_y
    sel = _selection(ns, n_pos)
    grid = np.zeros(n_pos, dtype=bool)
    grid[sel] = True
    mmap = MatricizationMap(ns.n_src, ns.n_rec_x, ns.n_src, ns.n_rec_y)
    mask = receiver_layout_mask(mmap, grid.reshape(ns.n_rec_x, ns.n_rec_y))
    write_mask(mask, ns.out)
    _write_sidecar(ns.out + ".meta.json", "generate", _plain_args(ns))
    frac = sampling_percentage(mask)
    g = gap_stats(mask)
    info = {
        "shape": list(mask.shape),
        "nnz": mask.nnz,
        "sampling_pct": frac,
        "missing_pct": 1 - frac,
        "max_gap": g.max_gap,
        "mean_gap": g.mean_gap,
    }
    if ns.json:
        print(json.dumps(info, sort_keys=True))
    else:
        print(f"shape={mask.n}x{mask.m} entries={mask.nnz}")
        print(f"sampling={_f(100 * frac)}% missing={_f(100 * (1 - frac))}%")
        print(f"max_gap={g.max_gap} mean_gap={_f(g.mean_gap)}")
    return 0


# -- solve ----------------------------------------------------------------


def _solver_options(ns) -> SolverOptions:
    return SolverOptions(
        tol=ns.tol,
        stage_tol=ns.stage_tol,
        abs_tol=ns.abs_tol,
        max_iter=ns.max_iter,
        delta=ns.delta,
        decay=ns.decay,
        seed=ns.seed,
    )


def cmd_solve(ns) -> int:
    mask = read_mask(ns.mask)
    truth = None
    if ns.data:
        full = read_matrix(ns.data)
        if full.shape != mask.shape:
            raise InputError(f"data {full.shape} does not match mask {mask.shape}")
        if ns.truth:
            truth = read_matrix(ns.truth)
    elif ns.synth_rank:
        truth = generate_incoherent(mask.n, mask.m, ns.synth_rank, RngSeed(ns.seed)).matrix()
        full = truth
    else:
        raise InputError("give --data or --synth-rank")
    data = ObservedData.observe(full, mask, eta=ns.eta)
    if ns.method == "als":
        if not ns.rank:
            raise InputError("--rank is required for --method als")
        rep = solve_factorized(data, ns.rank, max_iter=ns.max_iter)
    else:
        rep = solve_nuclear_norm(data, _solver_options(ns))
    summary = rep.summary()
    if truth is not None:
        summary["snr_db"] = snr(rep.estimate, truth)
    if ns.out:
        write_matrix(rep.estimate, ns.out)
        _write_sidecar(ns.out + ".meta.json", "solve", _plain_args(ns), {"report": summary})
    if ns.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        line = (
            f"method={rep.method} objective={_f(rep.objective)} residual={_f(rep.residual)} "
            f"iterations={rep.iterations} converged={str(rep.converged).lower()} criterion={rep.criterion}"
        )
        if "snr_db" in summary:
            line += f" snr_db={_f(summary['snr_db'])}"
        print(line)
    return 0


# -- sweep ----------------------------------------------------------------

_SOLVER_KEYS = {
    "stage_tol": (float, 1e-4),
    "tol": (float, 1e-8),
    "max_iter": (int, 3000),
    "decay": (float, 0.5),
}

SWEEP_KEYS = {
    "relocation": {
        "n_src": (int, 4),
        "n_rec": (int, 64),
        "keep_every": (int, 3),
        "rank": (int, 5),
        "noise": (float, 0.05),
        "eta_factor": (float, 1.0),
        "p_grid": (to_floats, [i / 10 for i in range(11)]),
        "trials": (int, 20),
        "seed": (int, 0),
        **_SOLVER_KEYS,
    },
    "jitter": {
        "n_src": (int, 32),
        "n_rec": (int, 32),
        "rho_grid": (to_floats, [0.2, 0.4, 0.6, 0.8, 1.0]),
        "missing": (to_floats, [0.8, 0.9, 0.95]),
        "trials": (int, 50),
        "seed": (int, 0),
        "partial_tail": (to_bool, True),
        "restrict_alternate_only": (to_bool, True),
        "per_source": (to_bool, True),
    },
    "design": {
        "rows": (int, 120),
        "cols": (int, 121),
        "keep_every": (int, 4),
        "rank": (int, 5),
        "noise": (float, 0.0),
        "eta_factor": (float, 0.0),
        "trials": (int, 3),
        "seed": (int, 0),
        **_SOLVER_KEYS,
        "stage_tol": (float, 1e-5),
    },
    "density": {
        "points": (str, ""),
        "cloud_seed": (int, 0),
        "extent": (float, 10_000.0),
        "n_circles": (int, 9),
        "radius": (float, 2_500.0),
        "point_spacing": (float, 75.0),
        "jitter": (float, 10.0),
        "spacings": (to_pairs, [(100.0, 200.0), (50.0, 100.0), (50.0, 50.0)]),
        "rank": (int, 0),
        "noise": (float, 0.05),
        "eta_factor": (float, 0.0),
        "seed": (int, 0),
        **_SOLVER_KEYS,
    },
}


def _sweep_solver(cfg: Settings) -> SolverOptions:
    return SolverOptions(stage_tol=cfg["stage_tol"], tol=cfg["tol"], max_iter=cfg["max_iter"], decay=cfg["decay"])


def run_sweep(kind: str, raw: dict, threads: int = 1, seed: int | None = None):
    """Run a sweep from a raw config dict; returns ``(result, resolved config)``."""
    if kind not in SWEEP_KEYS:
        raise InputError(f"unknown sweep kind '{kind}'")
    cfg = Settings(raw, SWEEP_KEYS[kind])
    if seed is not None:
        cfg.values["seed"] = seed
    if kind == "relocation":
        res = relocation_sweep(
            RelocationGeometry(cfg["n_src"], cfg["n_rec"], cfg["keep_every"]),
            DataModel(cfg["rank"], cfg["noise"], cfg["eta_factor"]) if cfg["rank"] > 0 else None,
            cfg["p_grid"],
            cfg["trials"],
            cfg["seed"],
            _sweep_solver(cfg),
            threads,
        )
    elif kind == "jitter":
        res = jitter_sweep(
            JitterGeometry(
                cfg["n_src"], cfg["n_rec"], cfg["partial_tail"], cfg["restrict_alternate_only"], cfg["per_source"]
            ),
            cfg["rho_grid"],
            cfg["missing"],
            cfg["trials"],
            cfg["seed"],
            threads,
        )
    elif kind == "design":
        res = design_comparison(
            (cfg["rows"], cfg["cols"]),
            cfg["keep_every"],
            DataModel(cfg["rank"], cfg["noise"], cfg["eta_factor"]) if cfg["rank"] > 0 else None,
            cfg["trials"],
            cfg["seed"],
            _sweep_solver(cfg),
            threads,
        )
    else:
        if cfg["points"]:
            pts = read_points(cfg["points"])
            bounds = None
        else:
            pts = coil_point_cloud(
                RngSeed(cfg["cloud_seed"]),
                cfg["extent"],
                cfg["n_circles"],
                cfg["radius"],
                cfg["point_spacing"],
                cfg["jitter"],
            )
            bounds = ((0.0, 0.0), (cfg["extent"], cfg["extent"]))
        res = density_sweep(
            pts,
            cfg["spacings"],
            DataModel(cfg["rank"], cfg["noise"], cfg["eta_factor"]) if cfg["rank"] > 0 else None,
            cfg["seed"],
            bounds,
            _sweep_solver(cfg),
            threads,
        )
    res.metadata["config"] = dumps_config(cfg.values)
    return res, cfg


def cmd_sweep(ns) -> int:
    raw = load_config(ns.config) if ns.config else {}
    if ns.threads < 1:
        raise InputError("--threads must be >= 1")
    res, cfg = run_sweep(ns.kind, raw, ns.threads, ns.seed)
    prefix = ns.out or f"{ns.kind}_sweep"
    paths = write_outputs(res, prefix)
    if ns.json:
        print(json.dumps({"paths": paths, "records": len(res.records), **_headline(ns.kind, res)}, sort_keys=True))
        return 0
    print(f"records={len(res.records)} csv={paths['csv']} meta={paths['meta']}")
    for key, value in _headline(ns.kind, res).items():
        print(f"{key}={value if not isinstance(value, float) else _f(value)}")
    return 0


def _headline(kind, res) -> dict:
    meta = res.metadata
    if kind == "relocation":
        return {"spearman_sg_snr": meta["correlation"]["spearman_sg_snr"]}
    if kind == "jitter":
        return {"trend_passes": all(v["passes"] for v in meta["trend"].values())}
    if kind == "design":
        return {f"{r.param_value}_sg_ratio": r.mean_sg_ratio for r in res.records} | {
            f"{r.param_value}_snr_db": r.mean_snr_db for r in res.records if r.mean_snr_db is not None
        }
    return {"ranking": " < ".join(meta["ranking"])}


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgdesign", description="Spectral-gap tools for sampling masks")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sg", help="sigma1, sigma2, SG ratio and connectivity of a mask file")
    p.add_argument("mask")
    p.add_argument("--json", action="store_true")
    p.add_argument("--trim-empty", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sg)

    p = sub.add_parser("generate", help="write a receiver-design mask")
    p.add_argument("--design", choices=("periodic", "relocation", "jitter", "random"), required=True)
    p.add_argument("--n-src", type=int, default=1)
    p.add_argument("--n-rec-x", type=int, required=True)
    p.add_argument("--n-rec-y", type=int, default=1)
    p.add_argument("--keep-every", type=int, default=3)
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--interval", type=int, default=5)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--restrict-all", action="store_true", help="restrict every interval, not alternate ones")
    p.add_argument("--partial-tail", action="store_true")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="nuclear-norm completion on a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--data", help="full n x m matrix file; only masked entries are used")
    p.add_argument("--truth", help="matrix file to score the estimate against")
    p.add_argument("--synth-rank", type=int, help="generate an incoherent model of this rank")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--method", choices=("svt", "als"), default="svt")
    p.add_argument("--rank", type=int, help="rank for --method als")
    defaults = SolverOptions()
    p.add_argument("--tol", type=float, default=defaults.tol)
    p.add_argument("--stage-tol", type=float, default=defaults.stage_tol)
    p.add_argument("--abs-tol", type=float, default=defaults.abs_tol)
    p.add_argument("--max-iter", type=int, default=defaults.max_iter)
    p.add_argument("--delta", type=float, default=defaults.delta)
    p.add_argument("--decay", type=float, default=defaults.decay)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a relocation, jitter, design or density sweep")
    p.add_argument("kind", choices=tuple(SWEEP_KEYS))
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", help="output prefix for .csv, .json and .meta.json")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except SGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
