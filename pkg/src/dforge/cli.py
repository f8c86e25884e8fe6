"""Command-line front door.

Verification subcommands wrap the module checkers one-to-one, `forge` drives
the construction loop, and every report carries the seed it ran under so a
rerun with the same flags reproduces the output byte for byte.

Exit codes: 0 clean, 1 violation, 2 indeterminate, 3 malformed input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import random
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from dforge.apcalc import KernelSum, KSKernel, PairSampler, check_ap
from dforge.coding import CodePrefix, DepthExhausted, decode, encode, flatness_certificate
from dforge.corrector import Indeterminate
from dforge.dspace import FuncRep, derivative_check
from dforge.engine import (
    ONE,
    Condition,
    Height,
    HeightConflict,
    LabeledPoint,
    NoAdmissiblePoint,
    NotClose,
    ValidationFailed,
    advance,
    extend_with_target,
    run_construction,
    validate,
)
from dforge.rint import Enclosure, fraction_of, rounder
from dforge.serialize import (
    condition_to_json,
    digest,
    frac_str,
    load_condition,
    parse_frac,
    rep_to_json,
    save_condition,
)
from dforge.slopegap import BoxSchedule, ScheduleViolation, delta_for_eps
from dforge.ternary import BlockSchedule, InsufficientDepth, random_point

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INDET = 2
EXIT_INPUT = 3


@dataclass(frozen=True)
class RunConfig:
    """The resolved invocation: what ran, under which knobs."""

    subcommand: str
    seed: int
    prec: int
    tolerance: Optional[str] = None
    out: Optional[str] = None
    samples: Optional[str] = None

    def __post_init__(self) -> None:
        if self.tolerance is not None and parse_frac(self.tolerance) <= 0:
            raise ValueError("tolerance must be positive")
        if self.prec <= 0:
            raise ValueError("precision cap must be positive")


def _emit(ns, report: dict) -> None:
    if getattr(ns, "emit_json", None):
        with open(ns.emit_json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _float_ceil(x: Fraction) -> float:
    v = float(x)
    if Fraction(v) < x:
        v = math.nextafter(v, math.inf)
    return v


def emit_samples(
    rep: FuncRep, grid: Sequence[Fraction], path: str, seed: int, prec: int = 192
) -> None:
    """CSV of certified midpoints: x, g(x), f(x), errBound, sorted by x.

    The header comment pins the stack digest and seed, so a file can be
    matched to the exact rep that produced it.
    """
    R = rounder(prec)
    xs = sorted(Fraction(x) for x in grid)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# rep={digest(rep_to_json(rep))} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "g", "f", "errBound"])
        for x in xs:
            ge = rep.g_enclosure(Enclosure.exact(R, x))
            fe = rep.f_enclosure(Enclosure.exact(R, x))
            err = max(
                fraction_of(ge.hi) - fraction_of(ge.lo),
                fraction_of(fe.hi) - fraction_of(fe.lo),
            )
            writer.writerow(
                [
                    repr(float(x)),
                    repr(float(ge.mid_fraction())),
                    repr(float(fe.mid_fraction())),
                    repr(_float_ceil(err)),
                ]
            )


# -- subcommand handlers -----------------------------------------------------


def _cmd_ap_check(ns) -> int:
    terms = []
    for spec in ns.kernel or ["1,1,0"]:
        parts = [parse_frac(p) for p in spec.split(",")]
        if len(parts) != 3:
            raise ValueError(f"kernel needs c,r,a: {spec!r}")
        terms.append(KSKernel(*parts))
    psi = KernelSum(tuple(terms))
    sampler = PairSampler(
        pairs=ns.pairs,
        seed=ns.seed,
        span=float(ns.span),
        centers=psi.centers,
        scales=tuple(Fraction(1) / t.r for t in psi.terms),
    )
    report = check_ap(psi, parse_frac(ns.C), sampler)
    out = {
        "subcommand": "ap-check",
        "seed": ns.seed,
        "pairs": report.checked,
        "worst_ratio": report.worst_ratio,
        "violations": len(report.violations),
        "ok": report.ok,
    }
    _emit(ns, out)
    print(
        f"ap-check: {report.checked} pairs, worst ratio {report.worst_ratio:.6f}, "
        f"{len(report.violations)} violations -> {'PASS' if report.ok else 'FAIL'}"
    )
    return EXIT_OK if report.ok else EXIT_VIOLATION


def _cmd_code(ns) -> int:
    sched = BlockSchedule.minimal(ns.levels)
    if ns.depth not in sched.gamma[3:]:
        raise ValueError(
            f"depth must be a stored block boundary {sched.gamma[3:]} for a full round trip"
        )
    rng = random.Random(ns.seed)
    ys = [random_point(ns.depth, rng) for _ in range(ns.words)]
    res = decode(ys, sched)
    bad = []
    for i, y in enumerate(ys):
        z = encode(i, res.prefixes[i], res.x, sched, depth=y.depth)
        if z.digits != y.digits:
            bad.append(i)
    out = {
        "subcommand": "code",
        "seed": ns.seed,
        "words": ns.words,
        "depth": ns.depth,
        "prefix_lengths": [len(p.digits) for p in res.prefixes],
        "mismatches": bad,
        "ok": not bad,
    }
    _emit(ns, out)
    print(
        f"code: {ns.words} words at depth {ns.depth} -> "
        f"{'round trip exact' if not bad else f'mismatch at {bad}'}"
    )
    return EXIT_OK if not bad else EXIT_VIOLATION


def _cmd_flat_cert(ns) -> int:
    sched = BlockSchedule.minimal(ns.levels)
    prefix = CodePrefix(
        tuple(int(d) for d in ns.prefix.split(",")) if ns.prefix else ()
    )
    rng = random.Random(ns.seed)
    report = flatness_certificate(
        ns.index, prefix, ns.q, sched, depth=ns.depth, pairs=ns.pairs, rng=rng
    )
    out = {
        "subcommand": "flat-cert",
        "seed": ns.seed,
        "pairs_checked": report.pairs_checked,
        "violations": len(report.violations),
        "exponents": {str(k): v for k, v in sorted(report.exponents.items())},
        "threshold": report.threshold,
        "ok": report.ok,
    }
    _emit(ns, out)
    exps = " ".join(f"e({k},{ns.q})={v}" for k, v in sorted(report.exponents.items()))
    print(
        f"flat-cert: {report.pairs_checked} pairs, {len(report.violations)} violations; "
        f"{exps}; negative from k={report.threshold} -> "
        f"{'PASS' if report.ok else 'FAIL'}"
    )
    return EXIT_OK if report.ok else EXIT_VIOLATION


def _cmd_slopegap(ns) -> int:
    sched = BoxSchedule.geometric(ns.ratio, ns.depth)
    levels = {
        str(n): {
            "small_max": frac_str(sched.small_max(n)),
            "large_min": frac_str(sched.large_min(n)),
        }
        for n in range(ns.depth - 1)
    }
    out = {
        "subcommand": "slopegap",
        "seed": ns.seed,
        "ratio": ns.ratio,
        "depth": ns.depth,
        "levels": levels,
    }
    lines = [
        f"slopegap: ratio {ns.ratio} depth {ns.depth}; "
        + " ".join(
            f"level {n}: small<={v['small_max']} large>={v['large_min']}"
            for n, v in sorted(levels.items(), key=lambda kv: int(kv[0]))
        )
    ]
    if ns.eps is not None:
        accel = BoxSchedule.accelerating(ns.ratio, ns.accel_levels)
        delta, n_star = delta_for_eps(accel, parse_frac(ns.eps))
        out["eps"] = ns.eps
        out["delta"] = frac_str(delta)
        out["level"] = n_star
        lines.append(
            f"eps {ns.eps}: corner pairs within delta={float(delta):.3e} "
            f"classify at level >= {n_star}"
        )
    _emit(ns, out)
    print("; ".join(lines))
    return EXIT_OK


def _parse_targets(spec: str) -> list[Fraction]:
    if spec.strip().lower() in ("", "none"):
        return []
    if spec.startswith("@"):
        with open(spec[1:], "r", encoding="utf-8") as fh:
            return [parse_frac(t) for t in json.load(fh)]
    return [parse_frac(t) for t in spec.split(",")]


def _load_pool(path: str) -> list[LabeledPoint]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return [
        LabeledPoint(parse_frac(p["v"]), Height(parse_frac(p["h"][0]), int(p["h"][1])))
        for p in doc
    ]


def _default_grid(cond: Condition, n: int = 257) -> list[Fraction]:
    lo = min(cond.domain) - 1
    hi = max(cond.domain) + 1
    step = Fraction(hi - lo, n - 1)
    return [lo + k * step for k in range(n)]


def _cmd_forge(ns) -> int:
    targets = _parse_targets(ns.targets)
    rounds = ns.rounds if ns.rounds is not None else len(targets)
    slack = parse_frac(ns.final_slack)

    if ns.D or ns.E:
        dpool = _load_pool(ns.D) if ns.D else None
        epool = {p.value: p for p in _load_pool(ns.E)} if ns.E else {}
        cond = ONE
        offset = 2
        for k in range(rounds):
            if k < len(targets):
                ev = targets[k]
                if epool:
                    if ev not in epool:
                        raise ValueError(f"target {frac_str(ev)} not in the E pool")
                    e_pt = epool[ev]
                else:
                    e_pt = LabeledPoint(ev, Height(Fraction(0), offset))
                    offset += 1
                if dpool is None:
                    raise ValueError("targets with --E need a --D pool")
                cond = extend_with_target(cond, e_pt, dpool, prec=ns.prec)
            cond = advance(cond, final_slack=slack if k == rounds - 1 else None)
        realized = [
            (pr.d.value, pr.e.value) for pr in cond.sigma if pr.d.value != 0
        ]
    else:
        if rounds == 0:
            cond = ONE
            realized = []
        else:
            res = run_construction(
                targets, rounds=rounds, final_slack=slack, prec=ns.prec
            )
            cond = res.condition
            realized = list(res.realized)

    if ns.out:
        save_condition(cond, ns.out, seed=ns.seed)
    if ns.samples:
        grid = _default_grid(cond)
        emit_samples(cond.rep, grid, ns.samples, ns.seed, prec=min(ns.prec, 192))
    out = {
        "subcommand": "forge",
        "seed": ns.seed,
        "rounds": rounds,
        "N": cond.N,
        "realized": [[frac_str(d), frac_str(e)] for d, e in realized],
    }
    _emit(ns, out)
    pts = ", ".join(f"{float(d):.6f}->{float(e):g}" for d, e in realized) or "origin only"
    print(f"forge: N={cond.N}, realized {pts}")
    return EXIT_OK


def _cmd_validate(ns) -> int:
    cond = load_condition(ns.cond)
    report = validate(cond, prec=ns.prec)
    out = {
        "subcommand": "validate",
        "seed": ns.seed,
        "N": cond.N,
        "checks": [
            {"name": c.name, "ok": c.ok, "detail": c.detail} for c in report.checks
        ],
        "ok": report.ok,
    }
    _emit(ns, out)
    for c in report.checks:
        line = f"{c.name}: {'PASS' if c.ok else 'FAIL'}"
        if c.detail:
            line += f" ({c.detail})"
        print(line)
    if report.ok:
        return EXIT_OK
    hard = [
        c
        for c in report.failed()
        if "undecided" not in c.detail and "skipped" not in c.detail
    ]
    return EXIT_VIOLATION if hard else EXIT_INDET


def _cmd_dcheck(ns) -> int:
    rep = load_condition(ns.cond).rep if ns.cond else FuncRep()
    lo, hi = (int(p) for p in ns.js.split(":"))
    tol = parse_frac(ns.tol)
    report = derivative_check(rep, parse_frac(ns.at), range(lo, hi + 1), prec=ns.prec)
    bounded = all(math.isfinite(g) for g in report.gaps)
    ok = bounded and report.final_gap < tol
    out = {
        "subcommand": "dcheck",
        "seed": ns.seed,
        "x": frac_str(report.x),
        "gaps": list(report.gaps),
        "final_gap": report.final_gap,
        "tol": ns.tol,
        "ok": ok,
    }
    _emit(ns, out)
    print(
        f"dcheck at x={ns.at}: final gap {report.final_gap:.3e} "
        f"{'<' if ok else '>='} tol {ns.tol} -> {'PASS' if ok else 'FAIL'}"
    )
    return EXIT_OK if ok else EXIT_VIOLATION


# -- parser and dispatch -----------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="dforge",
        description="certified finite-stage forcing of differentiable order isomorphisms",
    )
    parser.add_argument("--config", help="JSON file of flag defaults; flags win")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    registry: list[argparse.ArgumentParser] = []

    def common(sp):
        registry.append(sp)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--prec", type=int, default=320, help="working precision bits")
        sp.add_argument("--emit-json", dest="emit_json", help="write the report as JSON")

    sp = sub.add_parser("ap-check", help="averaged lower bound on a kernel sum")
    common(sp)
    sp.add_argument("--kernel", action="append", default=None, help="c,r,a (repeatable)")
    sp.add_argument("--C", default="4")
    sp.add_argument("--pairs", type=int, default=100000)
    sp.add_argument("--span", default="1000000")
    sp.set_defaults(handler=_cmd_ap_check)

    sp = sub.add_parser("code", help="round-trip a random word family")
    common(sp)
    sp.add_argument("--words", type=int, default=3)
    sp.add_argument("--depth", type=int, default=256)
    sp.add_argument("--levels", type=int, default=7)
    sp.set_defaults(handler=_cmd_code)

    sp = sub.add_parser("flat-cert", help="agreement depth of one coded map")
    common(sp)
    sp.add_argument("--index", type=int, default=1)
    sp.add_argument("--prefix", default="", help="comma digits, empty for none")
    sp.add_argument("--q", type=int, default=1)
    sp.add_argument("--depth", type=int, default=256)
    sp.add_argument("--pairs", type=int, default=400)
    sp.add_argument("--levels", type=int, default=7)
    sp.set_defaults(handler=_cmd_flat_cert)

    sp = sub.add_parser("slopegap", help="box-pair slope bounds per level")
    common(sp)
    sp.add_argument("--ratio", type=int, default=10)
    sp.add_argument("--depth", type=int, default=4)
    sp.add_argument("--eps", default=None, help="also solve the corner-pair delta")
    sp.add_argument("--accel-levels", dest="accel_levels", type=int, default=8)
    sp.set_defaults(handler=_cmd_slopegap)

    sp = sub.add_parser("forge", help="drive the construction loop")
    common(sp)
    sp.add_argument("--targets", default="none", help="'none', 'p/q,p/q,...', or @file.json")
    sp.add_argument("--rounds", type=int, default=None)
    sp.add_argument("--D", help="labeled point pool JSON")
    sp.add_argument("--E", help="labeled value pool JSON")
    sp.add_argument("--out", help="write the final condition JSON here")
    sp.add_argument("--samples", help="write a sample CSV here")
    sp.add_argument("--final-slack", dest="final_slack", default="1/68719476736")
    sp.set_defaults(handler=_cmd_forge)

    sp = sub.add_parser("validate", help="run every clause check on a condition")
    common(sp)
    sp.add_argument("--cond", required=True)
    sp.set_defaults(handler=_cmd_validate)

    sp = sub.add_parser("dcheck", help="difference-quotient staircase at a point")
    common(sp)
    sp.add_argument("--cond", default=None, help="condition JSON; bare base if absent")
    sp.add_argument("--at", default="0")
    sp.add_argument("--js", default="4:20", help="dyadic step exponents lo:hi")
    sp.add_argument("--tol", default="1/128")
    sp.set_defaults(handler=_cmd_dcheck)

    return parser, registry


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            with open(known.config, "r", encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config: {exc}", file=sys.stderr)
            return EXIT_INPUT
        if not isinstance(overrides, dict):
            print("config: expected a JSON object", file=sys.stderr)
            return EXIT_INPUT
        for sp in registry:
            sp.set_defaults(**overrides)

    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT

    try:
        RunConfig(
            subcommand=ns.subcommand,
            seed=ns.seed,
            prec=ns.prec,
            tolerance=getattr(ns, "tol", None),
            out=getattr(ns, "out", None),
            samples=getattr(ns, "samples", None),
        )
        return ns.handler(ns)
    except Indeterminate as exc:
        print(f"indeterminate: {exc}", file=sys.stderr)
        return EXIT_INDET
    except (NotClose, NoAdmissiblePoint, HeightConflict, ValidationFailed, ScheduleViolation) as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (
        OSError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
        ZeroDivisionError,
        DepthExhausted,
        InsufficientDepth,
    ) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
