"""CSV result tables and self-contained SVG plots.

Both writers are byte-deterministic: reals use 17 significant digits and
the SVG layout depends only on the table contents.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import rate_reference


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class ResultTable:
    header: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.header = list(self.header)
        for r in self.rows:
            self._check(r)

    def _check(self, row):
        if len(row) != len(self.header):
            raise ValueError(f"row has {len(row)} columns, header has {len(self.header)}")

    def append(self, row):
        self._check(row)
        self.rows.append(tuple(row))

    def column(self, name) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        meta = ", ".join(f"{k}={self.meta[k]}" for k in sorted(self.meta))
        lines = [",".join(self.header), f"# meta: {meta}"]
        lines += [",".join(_fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read(cls, path) -> "ResultTable":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if len(lines) < 2 or not lines[1].startswith("# meta:"):
            raise ValueError(f"{path}: not a result table")
        header = lines[0].split(",")
        meta = {}
        body = lines[1][len("# meta:"):].strip()
        if body:
            for item in body.split(", "):
                k, _, v = item.partition("=")
                meta[k] = v
        rows = []
        for ln in lines[2:]:
            vals = []
            for tok in ln.split(","):
                try:
                    vals.append(int(tok))
                except ValueError:
                    vals.append(float(tok))
            rows.append(tuple(vals))
        return cls(header, rows, meta)


# plotting ---------------------------------------------------------------

PLOT_KINDS = {
    "loglog_gradnorm": ("N", "grad_sq_norm"),
    "bias_vs_T": ("T", "bias_norm"),
    "cost_axis": ("n", "mean_cost", "mean_grad_sq_norm"),
}

_W, _H, _PAD = 480, 320, 50


def _num(v: float) -> str:
    return format(v, ".2f")


class _Panel:
    def __init__(self, x0, xs, ys, logx, logy):
        self.x0 = x0
        fx = np.log10 if logx else (lambda a: np.asarray(a, dtype=float))
        fy = np.log10 if logy else (lambda a: np.asarray(a, dtype=float))
        self.fx, self.fy = fx, fy
        tx, ty = fx(xs), fy(ys)
        self.xlo, self.xhi = float(tx.min()), float(tx.max())
        self.ylo, self.yhi = float(ty.min()), float(ty.max())
        if self.xhi == self.xlo:
            self.xhi = self.xlo + 1.0
        if self.yhi == self.ylo:
            self.yhi = self.ylo + 1.0

    def pts(self, xs, ys):
        tx = (self.fx(xs) - self.xlo) / (self.xhi - self.xlo)
        ty = (self.fy(ys) - self.ylo) / (self.yhi - self.ylo)
        px = self.x0 + _PAD + tx * (_W - 2 * _PAD)
        py = _H - _PAD - ty * (_H - 2 * _PAD)
        return list(zip(px, py))

    def frame(self, xlabel, ylabel):
        x0 = self.x0
        return [
            f'<line x1="{x0 + _PAD}" y1="{_H - _PAD}" x2="{x0 + _W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
            f'<line x1="{x0 + _PAD}" y1="{_PAD}" x2="{x0 + _PAD}" y2="{_H - _PAD}" stroke="black"/>',
            f'<text x="{x0 + _W / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>',
            f'<text x="{x0 + 14}" y="{_H / 2}" text-anchor="middle" '
            f'transform="rotate(-90 {x0 + 14} {_H / 2})">{ylabel}</text>',
        ]


def _path(points, dashed=False, color="#1f77b4"):
    d = " ".join(("M" if i == 0 else "L") + f"{_num(x)},{_num(y)}" for i, (x, y) in enumerate(points))
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>'


def render_svg(table: ResultTable, kind: str) -> str:
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    missing = [c for c in PLOT_KINDS[kind] if c not in table.header]
    if missing:
        raise ValueError(f"table lacks columns {missing} for {kind}")
    if not table.rows:
        raise ValueError("table is empty")
    body = []
    width = _W
    if kind == "loglog_gradnorm":
        N, g = table.column("N"), table.column("grad_sq_norm")
        ref = rate_reference(N)
        ref = ref * (g[0] / ref[0])  # anchor the reference at the first point
        panel = _Panel(0, np.concatenate([N, N]), np.concatenate([g, ref]), True, True)
        body += panel.frame("iterations N (log)", "E|grad V(theta_R)|^2 (log)")
        body.append(_path(panel.pts(N, g)))
        body.append(_path(panel.pts(N, ref), dashed=True, color="#d62728"))
    elif kind == "bias_vs_T":
        T = table.column("T")
        b = np.maximum(table.column("bias_norm"), 1e-300)
        panel = _Panel(0, T, b, True, True)
        body += panel.frame("truncation T (log)", "bias norm (log)")
        body.append(_path(panel.pts(T, b)))
        body += [f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2.5"/>' for x, y in panel.pts(T, b)]
    else:
        n = table.column("n")
        keep = n >= 1
        n, c, g = n[keep], table.column("mean_cost")[keep], table.column("mean_grad_sq_norm")[keep]
        if not len(n):
            raise ValueError("table has no iterations")
        g = np.maximum(g, 1e-300)
        left = _Panel(0, n, g, True, True)
        right = _Panel(_W, np.maximum(c, 1), g, True, True)
        body += left.frame("epochs (log)", "|grad V|^2 (log)")
        body.append(_path(left.pts(n, g)))
        body += right.frame("cost in chain states (log)", "|grad V|^2 (log)")
        body.append(_path(right.pts(np.maximum(c, 1), g)))
        width = 2 * _W
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{_H}" '
            f'viewBox="0 0 {width} {_H}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{width}" height="{_H}" fill="white"/>', *body, "</svg>"]) + "\n"


def emit_plot(table: ResultTable, kind: str, path) -> str:
    """Write the SVG for ``kind``; nothing is written when validation fails."""
    svg = render_svg(table, kind)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return str(path)
