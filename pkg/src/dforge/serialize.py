"""JSON round-tripping for conditions and represented stacks.

Rationals travel as "p/q" strings so files stay exact.  Digests are sha256
over a canonical dump (sorted keys, fixed separators), which is what makes
byte-identical reruns checkable from the emitted artifacts alone.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from typing import Any, Optional

from dforge.apcalc import KernelSum, KSKernel
from dforge.dspace import (
    BumpPiece,
    FuncRep,
    Layer,
    PiecewiseBump,
    Segment,
    SignPartition,
    ThetaLayer,
)
from dforge.engine import Condition, Height, LabeledPoint, Pair

__all__ = [
    "frac_str",
    "parse_frac",
    "rep_to_json",
    "rep_from_json",
    "condition_to_json",
    "condition_from_json",
    "save_condition",
    "load_condition",
    "canonical_dumps",
    "digest",
]


def frac_str(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(s: Any) -> Fraction:
    if isinstance(s, Fraction):
        return s
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, str):
        return Fraction(s.strip())
    raise ValueError(f"not a rational literal: {s!r}")


def _point_to_json(lp: LabeledPoint) -> dict:
    return {"v": frac_str(lp.value), "h": [frac_str(lp.height.limit), lp.height.offset]}


def _point_from_json(doc: dict) -> LabeledPoint:
    lam, off = doc["h"]
    return LabeledPoint(parse_frac(doc["v"]), Height(parse_frac(lam), int(off)))


def _layer_to_json(layer: Layer) -> dict:
    theta = layer.theta
    doc: dict = {
        "psi": [
            {"c": frac_str(t.c), "r": frac_str(t.r), "a": frac_str(t.a)}
            for t in layer.psi.terms
        ],
        "theta": {
            "clip": theta.clip,
            "eps": frac_str(theta.eps),
            "bumps": [
                [
                    {
                        "lo": frac_str(p.lo),
                        "hi": frac_str(p.hi),
                        "coeffs": [frac_str(c) for c in p.coeffs],
                        "shape": p.shape,
                    }
                    for p in bump.pieces
                ]
                for bump in theta.bumps
            ],
        },
        "partition": None,
    }
    if layer.partition is not None:
        doc["partition"] = [
            {
                "lo": None if s.lo is None else frac_str(s.lo),
                "hi": None if s.hi is None else frac_str(s.hi),
                "sign": s.sign,
            }
            for s in layer.partition.segments
        ]
    return doc


def _layer_from_json(doc: dict) -> Layer:
    psi = KernelSum(
        tuple(
            KSKernel(parse_frac(t["c"]), parse_frac(t["r"]), parse_frac(t["a"]))
            for t in doc["psi"]
        )
    )
    th = doc["theta"]
    theta = ThetaLayer(
        bool(th["clip"]),
        parse_frac(th["eps"]),
        tuple(
            PiecewiseBump(
                tuple(
                    BumpPiece(
                        parse_frac(p["lo"]),
                        parse_frac(p["hi"]),
                        tuple(parse_frac(c) for c in p["coeffs"]),
                        p["shape"],
                    )
                    for p in bump
                )
            )
            for bump in th["bumps"]
        ),
    )
    partition = None
    if doc.get("partition") is not None:
        partition = SignPartition(
            tuple(
                Segment(
                    None if s["lo"] is None else parse_frac(s["lo"]),
                    None if s["hi"] is None else parse_frac(s["hi"]),
                    int(s["sign"]),
                )
                for s in doc["partition"]
            )
        )
    return Layer(psi, theta, partition)


def rep_to_json(rep: FuncRep) -> dict:
    return {
        "kappa": frac_str(rep.kappa),
        "const": frac_str(rep.const),
        "layers": [_layer_to_json(layer) for layer in rep.layers],
    }


def rep_from_json(doc: dict) -> FuncRep:
    return FuncRep(
        parse_frac(doc["kappa"]),
        parse_frac(doc["const"]),
        tuple(_layer_from_json(l) for l in doc["layers"]),
    )


def _meta_to_json(meta: dict) -> dict:
    out = {}
    for key, val in meta.items():
        out[key] = frac_str(val) if isinstance(val, Fraction) else val
    return out


def condition_to_json(cond: Condition, seed: Optional[int] = None) -> dict:
    meta = _meta_to_json(cond.meta)
    if seed is not None:
        meta["seed"] = seed
    return {
        "sigma": [
            {"d": _point_to_json(pr.d), "e": _point_to_json(pr.e)} for pr in cond.sigma
        ],
        "N": cond.N,
        "base": {"kappa": frac_str(cond.rep.kappa), "const": frac_str(cond.rep.const)},
        "layers": [_layer_to_json(layer) for layer in cond.rep.layers],
        "meta": meta,
    }


def condition_from_json(doc: dict) -> Condition:
    base = doc.get("base", {"kappa": "1/1", "const": "0/1"})
    rep = FuncRep(
        parse_frac(base["kappa"]),
        parse_frac(base["const"]),
        tuple(_layer_from_json(l) for l in doc["layers"]),
    )
    sigma = tuple(
        Pair(_point_from_json(pr["d"]), _point_from_json(pr["e"])) for pr in doc["sigma"]
    )
    meta = {}
    for key, val in doc.get("meta", {}).items():
        meta[key] = parse_frac(val) if isinstance(val, str) and "/" in val else val
    return Condition(sigma, int(doc["N"]), rep, meta=meta)


def save_condition(cond: Condition, path: str, seed: Optional[int] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_dumps(condition_to_json(cond, seed=seed)))
        fh.write("\n")


def load_condition(path: str) -> Condition:
    with open(path, "r", encoding="utf-8") as fh:
        return condition_from_json(json.load(fh))


def canonical_dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def digest(doc: Any) -> str:
    return hashlib.sha256(canonical_dumps(doc).encode("utf-8")).hexdigest()
