"""``quditsum`` command-line interface.

Exit codes: 0 success, 1 a ``verify`` check failed, 2 invalid arguments,
3 output could not be written.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Callable, Sequence

from . import __version__
from .adder import AdderConfig, Backend, BackendError, run_adder
from .banding import (
    SweepGrid,
    banding_bound,
    fidelity_at,
    min_banding_order,
    qbest_map,
    qbest_search,
    saturation,
)
from .channels import ChannelKind, NoiseSpec
from .closed_form import dimension_fixed_value_fidelity, fixed_value_qudits
from .metrics import coherence_from_fidelity
from .records import RUN_CSV_HEADER, csv_text, json_text, run_csv_rows, run_to_dict, write_text
from .spin_chain import scaling_metadata, spin_trace
from .tensor import DomainError, ResourceError

EXIT_OK, EXIT_VERIFY, EXIT_ARGS, EXIT_IO = 0, 1, 2, 3
JOBS_ENV = "QUDITSUM_JOBS"


class UsageError(Exception):
    pass


class OutputError(Exception):
    pass


# ---------------------------------------------------------------------------
# value parsing


def _range(text: str, cast: Callable) -> list:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"bad range {text!r}; expected lo:hi[:step]")
    lo, hi = cast(parts[0]), cast(parts[1])
    step = cast(parts[2]) if len(parts) == 3 else cast("1")
    if step <= 0 or hi < lo:
        raise UsageError(f"bad range {text!r}; need lo <= hi and step > 0")
    count = int(round((hi - lo) / step))
    if lo + count * step > hi + 1e-9 * max(1.0, abs(hi)):
        count -= 1
    vals = [lo + k * step for k in range(count + 1)]
    if cast is float:
        vals = [float(f"{v:.12g}") for v in vals]
    return vals


def parse_values(text: str, cast: Callable = float) -> list:
    """Comma-separated scalars and inclusive ``lo:hi[:step]`` ranges."""
    out: list = []
    try:
        for item in str(text).split(","):
            item = item.strip()
            if not item:
                continue
            out.extend(_range(item, cast) if ":" in item else [cast(item)])
    except ValueError as exc:
        raise UsageError(f"cannot parse {text!r}: {exc}") from None
    if not out:
        raise UsageError("empty value list")
    return out


def _ints(text: str) -> list[int]:
    return parse_values(text, int)


def _floats(text: str) -> list[float]:
    return parse_values(text, float)


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _jobs_default() -> int:
    raw = os.environ.get(JOBS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        v = int(raw)
    except ValueError:
        raise UsageError(f"{JOBS_ENV}={raw!r} is not an integer") from None
    if v < 1:
        raise UsageError(f"{JOBS_ENV} must be >= 1")
    return v


# ---------------------------------------------------------------------------
# output


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        write_text(path, text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None


def _noise(args) -> NoiseSpec:
    kind = ChannelKind.parse(args.noise)
    return NoiseSpec(
        kind,
        args.p if kind is not ChannelKind.NONE else 0.0,
        after_qft_rotations=not args.no_qft_noise,
        after_sum_rotations=not args.no_sum_noise,
        after_iqft_rotations=args.decode_noise,
        on_control=args.on_control,
    )


def _config(args, a: int, b: int, trace: bool) -> AdderConfig:
    return AdderConfig(
        d=args.dim,
        n=args.qudits,
        a=a,
        b=b,
        q=args.band,
        noise=_noise(args),
        backend=Backend.parse(args.backend),
        modular=not args.non_modular,
        trace=trace,
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# verbs


def cmd_add(args) -> int:
    a, b = args.a, args.b
    if not args.non_modular:
        # only the low n digits of each addend fit in the register
        D = args.dim**args.qudits
        a, b = a % D, b % D
    rec = run_adder(_config(args, a, b, not args.no_trace))
    doc = run_to_dict(rec, args.run_id, with_distribution=args.distribution)
    if (a, b) != (args.a, args.b):
        doc["inputs_reduced"] = {"a": args.a, "b": args.b, "modulus": args.dim**args.qudits}
    _emit(json_text(doc), args.out)
    if args.csv:
        _emit(csv_text(RUN_CSV_HEADER, run_csv_rows(rec, args.run_id)), args.csv)
    return EXIT_OK


def cmd_trace(args) -> int:
    D = args.dim**args.qudits
    a = 0 if args.a is None else args.a
    b = D - 1 if args.b is None else args.b
    rec = run_adder(_config(args, a, b, True))
    _emit(csv_text(RUN_CSV_HEADER, run_csv_rows(rec, args.run_id)), args.out)
    return EXIT_OK


def cmd_band_curve(args) -> int:
    kind = ChannelKind.parse(args.noise)
    ps = [0.0] if kind is ChannelKind.NONE else _floats(args.p)
    rows = []
    for d in _ints(args.dim):
        for n in _ints(args.qudits):
            for p in ps:
                for q in range(1, n + 1):
                    rows.append((d, n, p, kind.value, q, fidelity_at(d, n, q, p, kind, _policy(args.input))))
    _emit(csv_text(("d", "n", "p", "channel", "q", "fidelity"), rows), args.out)
    return EXIT_OK


def cmd_bound(args) -> int:
    q = min_banding_order(args.dim, args.qudits, args.eps)
    text = f"{q}\n"
    if args.verbose:
        text += f"raw_bound {banding_bound(args.dim, args.qudits, args.eps):.12g}\n"
    _emit(text, args.out)
    return EXIT_OK


def _policy(text: str):
    if text in ("worst",) or text.startswith("digit:"):
        return text
    return [int(x) for x in text.split(",")]


_QBEST_HEADER = ("d", "n", "p", "channel", "q_best", "f_max")


def _cell_row(c) -> tuple:
    return (c.d, c.n, c.p, c.channel, c.q_best, c.f_max)


def cmd_qbest(args) -> int:
    c = qbest_search(args.dim, args.qudits, args.p, args.noise, _policy(args.input))
    _emit(csv_text(_QBEST_HEADER, [_cell_row(c)]), args.out)
    return EXIT_OK


def cmd_qbest_map(args) -> int:
    grid = SweepGrid(_ints(args.dim), _ints(args.n), _floats(args.p), args.noise, _policy(args.input))
    cells = qbest_map(grid, jobs=args.jobs)
    _emit(csv_text(_QBEST_HEADER, [_cell_row(c) for c in cells]), args.out)
    if args.json:
        doc = {
            "grid": {
                "d": list(grid.ds),
                "n": list(grid.ns),
                "p": list(grid.ps),
                "channel": grid.channel,
                "input": args.input,
                "order": "d, n, p",
                "skipped": [{"d": d, "p": p} for d, p in grid.skipped()],
            },
            "cells": [c.as_dict() for c in cells],
            "saturation": [vars(s) for s in saturation(cells)],
        }
        _emit(json_text(doc), args.json)
    return EXIT_OK


def cmd_dim_compare(args) -> int:
    rows = []
    for p in _floats(args.p):
        for d in _ints(args.dim):
            row = [d, p]
            for inclusive in (False, True):
                n = fixed_value_qudits(args.value, d) + int(inclusive)
                f = dimension_fixed_value_fidelity(args.value, d, p, inclusive_upper=inclusive)
                D = d**n
                row += [n, f, D * f - 1, coherence_from_fidelity(f, D)]
            rows.append(row)
    header = ("d", "p", "n", "fidelity", "c_l1", "c_l1_norm",
              "n_inclusive", "fidelity_inclusive", "c_l1_inclusive", "c_l1_norm_inclusive")
    _emit(csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_spin_evolve(args) -> int:
    taus = _floats(args.tau)
    bands = _ints(args.band) if args.band else [args.qudits]
    rows = []
    for q in bands:
        for pt in spin_trace(args.a, args.b, args.qudits, taus, q, jobs=args.jobs):
            rows.append((pt.tau, pt.f_out, pt.c_l1_norm, q))
    _emit(csv_text(("tau", "f_out", "c_l1_norm", "q"), rows), args.out)
    if args.meta:
        ints = sorted({int(t) for t in taus if t >= 1 and float(t).is_integer()})
        doc = {
            "a": args.a,
            "b": args.b,
            "n": args.qudits,
            "bands": bands,
            "scaling": [scaling_metadata(t, q) for q in bands for t in ints],
            "scaling_rule": "m_direct is read from the evolved unitary; m_formula is the combinatorial count",
        }
        _emit(json_text(doc), args.meta)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    t0 = time.perf_counter()
    results = run_checks(quick=args.quick)
    lines = [r.line() for r in results]
    failed = [r.name for r in results if not r.ok]
    lines.append(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        lines.append("failed: " + ", ".join(failed))
    _emit("\n".join(lines) + "\n", args.out)
    print(f"verify took {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p: argparse.ArgumentParser, jobs: bool = False) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value defaults, overridden by explicit flags")
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    if jobs:
        p.add_argument("--jobs", type=_pos_int, default=None, help=f"worker processes (default ${JOBS_ENV} or 1)")


def _circuit_opts(p: argparse.ArgumentParser, qudits_required: bool = True) -> None:
    p.add_argument("--dim", type=int, default=2, help="qudit dimension d")
    p.add_argument("--qudits", type=_pos_int, required=qudits_required, help="digits per register n")
    p.add_argument("--band", type=_pos_int, default=None, help="banding order q (default: unbanded)")
    p.add_argument("--noise", default="none", choices=[k.value for k in ChannelKind], help="noise channel")
    p.add_argument("--p", type=float, default=0.0, help="noise strength")
    p.add_argument("--backend", default="product", choices=[b.value for b in Backend])
    p.add_argument("--seed", type=int, default=None, help="recorded only; every path is exact")
    p.add_argument("--non-modular", action="store_true", help="extra target qudit holding the carry")
    p.add_argument("--on-control", action="store_true", help="noise also hits control qudits")
    p.add_argument("--decode-noise", action="store_true", help="noise after decoding rotations")
    p.add_argument("--no-qft-noise", action="store_true", help="noiseless encoding rotations")
    p.add_argument("--no-sum-noise", action="store_true", help="noiseless SUM rotations")
    p.add_argument("--run-id", default="run-0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quditsum", description="Noisy, banded QFT adders on qudits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", metavar="VERB")
    sub.required = True

    p = sub.add_parser("add", help="run one addition; JSON record")
    p.add_argument("a", type=_nonneg_int)
    p.add_argument("b", type=_nonneg_int)
    _circuit_opts(p)
    _common(p)
    p.add_argument("--csv", metavar="PATH", help="also write the per-checkpoint CSV")
    p.add_argument("--no-trace", action="store_true", help="named checkpoints only")
    p.add_argument("--distribution", action="store_true", help="include the output distribution")
    p.set_defaults(func=cmd_add)

    p = sub.add_parser("trace", help="per-gate fidelity and coherence CSV")
    _circuit_opts(p)
    _common(p)
    p.add_argument("--a", type=_nonneg_int, default=None, help="first addend (default 0)")
    p.add_argument("--b", type=_nonneg_int, default=None, help="second addend (default d**n - 1)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("band-curve", help="post-SUM fidelity against banding order")
    p.add_argument("--dim", default="2", help="d values")
    p.add_argument("--qudits", required=True, help="n values")
    p.add_argument("--noise", default="none", choices=[k.value for k in ChannelKind])
    p.add_argument("--p", default="0", help="noise strengths")
    p.add_argument("--input", default="worst", help="worst, digit:K or comma-separated digits")
    _common(p)
    p.set_defaults(func=cmd_band_curve)

    p = sub.add_parser("bound", help="smallest banding order meeting an infidelity budget")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--qudits", type=_pos_int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--verbose", action="store_true", help="also print the real-valued bound")
    _common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("qbest", help="best banding order for one point")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--qudits", type=_pos_int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--noise", default="pdc", choices=[k.value for k in ChannelKind])
    p.add_argument("--input", default="worst")
    _common(p)
    p.set_defaults(func=cmd_qbest)

    p = sub.add_parser("qbest-map", help="best banding order over a (d, n, p) grid")
    p.add_argument("--dim", default="2")
    p.add_argument("--n", required=True, help="n values, e.g. 5:50")
    p.add_argument("--p", required=True, help="p values, e.g. 0.0:0.2:0.02")
    p.add_argument("--noise", default="pdc", choices=[k.value for k in ChannelKind])
    p.add_argument("--input", default="worst")
    p.add_argument("--json", metavar="PATH", help="JSON mirror with grid metadata and saturation")
    _common(p, jobs=True)
    p.set_defaults(func=cmd_qbest_map)

    p = sub.add_parser("dim-compare", help="fixed-value fidelity and coherence across dimensions")
    p.add_argument("--value", type=_pos_int, default=500)
    p.add_argument("--dim", default="2:8")
    p.add_argument("--p", default="0.1")
    _common(p)
    p.set_defaults(func=cmd_dim_compare)

    p = sub.add_parser("spin-evolve", help="spin-chain adder fidelity against evolution time")
    p.add_argument("--a", type=_nonneg_int, default=7)
    p.add_argument("--b", type=_nonneg_int, default=7)
    p.add_argument("--qudits", type=_pos_int, default=4)
    p.add_argument("--band", default=None, help="banding orders (default: unbanded)")
    p.add_argument("--tau", default="0:48:0.25", help="tau values")
    p.add_argument("--meta", metavar="PATH", help="JSON with phase-scaling metadata")
    _common(p, jobs=True)
    p.set_defaults(func=cmd_spin_evolve)

    p = sub.add_parser("verify", help="run the self-check suite")
    p.add_argument("--quick", action="store_true", help="small grids only")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def _read_config(path: str) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    out = {}
    for i, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _subparser(parser: argparse.ArgumentParser, verb: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[verb]
    raise AssertionError("no subcommands")


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    by_dest = {a.dest: a for a in sub._actions if a.option_strings}
    defaults = {}
    for key, raw in values.items():
        action = by_dest.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = _bool(raw)
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config {key}: {exc}") from None
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config {key}: {raw!r} not in {sorted(action.choices)}")
        if action.required:
            action.required = False
    sub.set_defaults(**defaults)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        verb = next((x for x in argv if not x.startswith("-")), None)
        if known.config and verb is not None:
            try:
                sub = _subparser(parser, verb)
            except KeyError:
                parser.error(f"unknown verb {verb!r}")
            _apply_config(sub, _read_config(known.config))
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 0) is None:
            args.jobs = _jobs_default()
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_ARGS
    except UsageError as exc:
        print(f"quditsum: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except OutputError as exc:
        print(f"quditsum: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, BackendError, ResourceError, ValueError) as exc:
        print(f"quditsum: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
