"""Deterministic serialization of results.

All numeric output goes through a 17-significant-digit formatter, which
round-trips float64 exactly, so identical runs produce byte-identical JSON
and CSV artifacts.
"""

from __future__ import annotations

import numpy as np

from .experiments import MomentCurve, RateFit

__all__ = ["format_float", "to_json", "curves_to_csv", "results_document"]


def format_float(x: float) -> str:
    """Shortest-faithful decimal form with 17 significant digits."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def _emit(obj, out: list, indent: int) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON keys must be strings, got {type(key).__name__}")
            out.append(f'{pad}  "{key}": ')
            _emit(val, out, indent + 1)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            out.append("[]")
            return
        out.append("[\n")
        for i, val in enumerate(obj):
            out.append(pad + "  ")
            _emit(val, out, indent + 1)
            out.append(",\n" if i + 1 < len(obj) else "\n")
        out.append(pad + "]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        escaped = obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        out.append(f'"{escaped}"')
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out, indent)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj) -> str:
    """Canonical JSON text: insertion-ordered keys, 17-digit floats."""
    out: list[str] = []
    _emit(obj, out, 0)
    out.append("\n")
    return "".join(out)


def curves_to_csv(curves: list[MomentCurve]) -> str:
    """Flat export, one checkpoint per row: estimator, p, n, moment, stderr."""
    lines = ["estimator,p,n,moment,stderr"]
    for curve in curves:
        for n, mom, se in zip(curve.ns, curve.moments, curve.stderrs):
            lines.append(f"{curve.estimator},{curve.p},{n},{format_float(mom)},{format_float(se)}")
    return "\n".join(lines) + "\n"


def _curve_doc(curve: MomentCurve) -> dict:
    return {
        "estimator": curve.estimator,
        "p": curve.p,
        "points": [
            {"n": n, "moment": mom, "stderr": se}
            for n, mom, se in zip(curve.ns, curve.moments, curve.stderrs)
        ],
    }


def _fit_doc(fit: RateFit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "slope_stderr": fit.slope_stderr,
    }


def results_document(config_echo: dict, curves: list[MomentCurve], fits: dict, extras: dict | None = None) -> dict:
    """Assemble the persisted results structure for a replication run."""
    doc = {
        "config": config_echo,
        "curves": [_curve_doc(c) for c in curves],
        "fits": {name: _fit_doc(f) for name, f in fits.items()},
    }
    if extras:
        doc.update(extras)
    return doc
