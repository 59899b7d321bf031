"""Command line: lloglog {content,decompose,czd,op,harness,selftest}.

Exit codes: 0 success, 1 usage or input error, 2 an invariant was violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from .config import FORMAT_VERSION, ConfigError, RunConfig
from .dyadic import GridFunction, InvariantViolation


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, range)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _jsonable(obj)
    if isinstance(data, dict):
        data.setdefault("version", FORMAT_VERSION)
    path.write_text(json.dumps(data, sort_keys=True, indent=1) + "\n")
    return path


def write_csv(path: Path, rows: list) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["version"] + keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({"version": FORMAT_VERSION, **{k: _jsonable(v) for k, v in r.items()}})
    return path


def read_grid(path) -> GridFunction:
    try:
        return GridFunction.from_json(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ConfigError(f"malformed grid function in {path}: {e}") from e


def _dil(text):
    from .dilation import DilationGroup

    try:
        p = json.loads(text)
        return DilationGroup(tuple(float(x) for x in p))
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise ConfigError(f"bad dilation exponents {text!r}: {e}") from e


def _krange(text):
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError as e:
        raise ConfigError(f"bad k range {text!r}; expected KMIN:KMAX") from e
    if lo > hi:
        raise ConfigError("k range is empty")
    return range(lo, hi + 1)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_content(a) -> int:
    from .content import ContentParams, critical_thickness, length, length_cover, thickness

    v = read_grid(a.input)
    p = ContentParams(a.n, a.beta)
    if a.op == "length":
        out = {"value": length(v, p), "certificate": {"cover": length_cover(v, p).to_list()}}
    elif a.op == "thickness":
        out = {"value": thickness(v, p), "certificate": {"integral": v.abs_integral()}}
    else:
        res = critical_thickness(v.with_values(np.abs(v.values)), p, method=a.method)
        out = {"value": res.theta,
               "certificate": {"minimizing_collection": res.minimizing_collection.to_list(),
                               "length": res.length, "residual_mass": res.residual_mass,
                               "identity_gap": res.identity_gap(a.beta), "iterations": res.iterations}}
    out.update({"op": a.op, "n": a.n, "beta": a.beta})
    write_json(Path(a.out) / f"{a.op}.json", out)
    print(json.dumps({"op": a.op, "value": _jsonable(out["value"])}))
    return 0


def cmd_decompose(a) -> int:
    from .decompose import thickness_split, iterate_split

    f = read_grid(a.input)
    out = Path(a.out)
    if a.prop == "21":
        g, h, cert = thickness_split(f, f.root, a.n, a.beta)
        write_json(out / "g.json", g.to_json_dict())
        write_json(out / "h.json", h.to_json_dict())
        write_json(out / "cert.json", cert.to_dict())
    elif a.prop == "23":
        m = a.m if a.m is not None else a.n
        pieces, h, cert = iterate_split(f, a.n, m, a.beta)
        for i, g in enumerate(pieces, start=1):
            write_json(out / f"g{i}.json", g.to_json_dict())
        write_json(out / "h.json", h.to_json_dict())
        write_json(out / "cert.json", cert.to_dict())
    else:
        from .czd import cz_split
        from .decompose import stopping_time_split

        if a.alpha is None:
            raise ConfigError("--prop 41 needs --alpha")
        dil = _dil(a.dil)
        cz = cz_split(f, a.alpha, dil)
        rows = []
        for n in cz.levels:
            for l in cz.l_values(n):
                try:
                    r = stopping_time_split(cz.bad_pieces(n, l, dil), n, l, a.alpha, dil, a.beta)
                except MemoryError:
                    rows.append({"n": n, "l": l, "skipped": "out of memory"})
                    continue
                except ValueError as e:
                    # grids too fine after dilation are reported, not fatal
                    if "dilated unit cubes" not in str(e):
                        raise
                    rows.append({"n": n, "l": l, "skipped": str(e)})
                    continue
                rows.append({"n": n, "l": l, **r.measured})
        write_json(out / "cert.json", {"blocks": rows, "alpha": a.alpha})
    print(f"wrote {out}")
    return 0


def cmd_czd(a) -> int:
    from .czd import cz_split

    f = read_grid(a.input)
    dil = _dil(a.dil)
    cz = cz_split(f, a.alpha, dil, c=a.c)
    out = Path(a.out)
    cells = [{"index": w.index, "scale": w.scale, "lower": list(w.lower), "shape": list(w.shape),
              "forced": w.forced} for w in cz.whitney.cells]
    write_json(out / "czd.json", {"alpha": a.alpha, "c": cz.c, "levels": cz.levels,
                                  "measured": cz.measured, "whitney": cz.whitney.measured,
                                  "cells": cells, "good": cz.good.to_json_dict()})
    if a.cells_csv:
        write_csv(Path(a.cells_csv), [{"index": c["index"], "scale": c["scale"], "x": c["lower"][0],
                                       "y": c["lower"][1] if len(c["lower"]) > 1 else 0,
                                       "w": c["shape"][0], "forced": c["forced"]} for c in cells])
    print(json.dumps(_jsonable(cz.whitney.measured), sort_keys=True))
    return 0


def cmd_op(a) -> int:
    from . import operators as ops
    from .surface import SurfaceMeasure

    f = read_grid(a.input)
    try:
        mu = SurfaceMeasure.parse(a.surface)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    dil = mu.natural_dilation()
    kr = _krange(a.krange) if a.krange else None
    if a.kind == "maximal":
        res = ops.maximal_fn(mu, f, dil, kr)
    elif a.kind == "radon":
        res = ops.radon_transform(mu, f, dil, kr)
    elif a.kind == "hilbert":
        res = ops.hilbert_parabola(f, mu.b if mu.kind == "parabola" else 2.0, kr)
    else:
        g = ops.parabola_average(f, a.r, mu.b if mu.kind == "parabola" else 2.0)
        res = ops.OperatorResult(g, range(0, 1), {})
    out = Path(a.out)
    write_json(out / "field.json", res.field.to_json_dict())
    rows = [{"k": k, "sup": v} for k, v in sorted(res.diagnostics.get("sup_per_k", {}).items())]
    write_csv(out / "diagnostics.csv", rows)
    print(f"sup = {res.field.sup():.6g}")
    return 0


def cmd_harness(a) -> int:
    from .families import dyadic_comb, lambda_stack, random_sparse, spike_train
    from .harness import convergence_experiment, term_budget_report, weak_type_sweep

    cfg = RunConfig.load(a.config) if a.config else RunConfig().validate()
    mu = cfg.surface_measure()
    out = Path(a.out or cfg.output)
    summary = {"suite": a.suite, "config": cfg.to_dict(), "config_digest": cfg.digest()}
    if a.suite == "weaktype":
        r = weak_type_sweep(partial(lambda_stack, resolution=cfg.n_work), range(0, 11), mu, workers=cfg.workers)
        rows = [{"j": j, "lambda": lam, **{phi: r[phi][i] for phi in ("t", "tloglog")}}
                for i, (j, lam) in enumerate(zip(r["j"], r["lambda"]))]
        write_csv(out / "weaktype.csv", rows)
        summary.update({k: v for k, v in r.items() if k.startswith("slope")})
    elif a.suite == "convergence":
        rows = []
        for seed in cfg.seeds:
            f = spike_train(4, resolution=cfg.n_work, seed=seed)
            r = convergence_experiment(f, [2.0 ** -i for i in range(1, cfg.n_work)], seed=seed)
            rows += [{"seed": seed, **row} for row in r["rows"]]
            summary[f"nonincreasing_seed{seed}"] = r["nonincreasing"]
        write_csv(out / "convergence.csv", rows)
    else:
        rows = []
        for seed in cfg.seeds:
            for fam, f in (("random", random_sparse(cfg.n_work, seed=seed)),
                           ("comb", dyadic_comb(4, resolution=cfg.n_work, seed=seed))):
                alpha = (cfg.alphas or [1.0])[0]
                r = term_budget_report(f, mu, alpha=alpha, gamma=cfg.gamma,
                                       k_range=range(cfg.k_range[0], cfg.k_range[1] + 1) if cfg.k_range else None)
                rows.append({"seed": seed, "family": fam, **{k: v for k, v in r.items() if np.isscalar(v)}})
        write_csv(out / "cor31.csv", rows)
    write_json(out / "summary.json", summary)
    print(f"wrote {out}")
    return 0


def cmd_selftest(a) -> int:
    from .acceptance import run_all

    only = [int(x) for x in a.only.split(",")] if a.only else None
    results = run_all(only)
    if a.json:
        write_json(Path(a.json), {"results": [r.to_dict() for r in results]})
    return 0 if all(r.passed for r in results) else 2


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lloglog", description="Dyadic content, decompositions and curve-measure operators on grids.")
    p.add_argument("--workers", type=int, default=None, help="worker processes (env LLOGLOG_WORKERS)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("content", help="length, thickness and critical thickness")
    s.add_argument("--op", choices=("length", "thickness", "theta"), default="theta")
    s.add_argument("--input", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--method", choices=("ratio", "bisect"), default="ratio")
    s.add_argument("--out", default="out")
    s.set_defaults(fn=cmd_content)

    s = sub.add_parser("decompose", help="g/h split, iterated split or stopping-time split")
    s.add_argument("--prop", choices=("21", "23", "41"), required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--dil", default="[1]")
    s.add_argument("--out", default="out")
    s.set_defaults(fn=cmd_decompose)

    s = sub.add_parser("czd", help="Calderon-Zygmund split with Whitney regions")
    s.add_argument("--input", required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--dil", default="[1,2]")
    s.add_argument("--c", type=float, default=None)
    s.add_argument("--cells-csv", default=None)
    s.add_argument("--out", default="out")
    s.set_defaults(fn=cmd_czd)

    s = sub.add_parser("op", help="apply an operator built from a curve measure")
    s.add_argument("--kind", choices=("maximal", "radon", "average", "hilbert"), required=True)
    s.add_argument("--surface", default="parabola:b=2")
    s.add_argument("--input", required=True)
    s.add_argument("--krange", default=None)
    s.add_argument("--r", type=float, default=0.25)
    s.add_argument("--out", default="out")
    s.set_defaults(fn=cmd_op)

    s = sub.add_parser("harness", help="weak-type, convergence and term-budget sweeps")
    s.add_argument("--suite", choices=("weaktype", "convergence", "cor31"), required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_harness)

    s = sub.add_parser("selftest", help="run the acceptance suite")
    s.add_argument("--only", default=None, help="comma-separated criterion numbers")
    s.add_argument("--json", default=None)
    s.set_defaults(fn=cmd_selftest)
    return p


def _join_negative_values(argv):
    """Let ``--krange -12:0`` through: argparse would read ``-12:0`` as a flag."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--krange":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--krange={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_join_negative_values(argv))
        if args.workers is not None:
            os.environ["LLOGLOG_WORKERS"] = str(args.workers)
        return args.fn(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
