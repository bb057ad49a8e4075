"""Canonical conic problems and the solver backend.

A :class:`ConicProblem` is ``minimize c^T x subject to s = b - A x, s in K``
where ``K`` is a product of zero, nonnegative, second-order, exponential and
PSD (scaled upper-triangular ``svec``) cones, listed in row order. The
representation matches Clarabel's standard form, which is the default engine.

:class:`ConicBuilder` assembles problems from small affine expressions; the
beamforming and position subproblems are written against it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError

log = logging.getLogger(__name__)

CONE_KINDS = ("zero", "nonneg", "soc", "exp", "psd")
SQRT2 = np.sqrt(2.0)


class Affine:
    """Sparse affine expression ``sum coef[i] x[i] + const``."""

    __slots__ = ("coef", "const")

    def __init__(self, coef=None, const: float = 0.0):
        self.coef = dict(coef) if coef else {}
        self.const = float(const)

    @classmethod
    def var(cls, index: int) -> "Affine":
        return cls({int(index): 1.0})

    def copy(self) -> "Affine":
        return Affine(self.coef, self.const)

    def __add__(self, other) -> "Affine":
        out = self.copy()
        if isinstance(other, Affine):
            for i, a in other.coef.items():
                out.coef[i] = out.coef.get(i, 0.0) + a
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self) -> "Affine":
        return Affine({i: -a for i, a in self.coef.items()}, -self.const)

    def __sub__(self, other) -> "Affine":
        return self + (-other)

    def __rsub__(self, other) -> "Affine":
        return (-self) + other

    def __mul__(self, scalar) -> "Affine":
        s = float(scalar)
        return Affine({i: s * a for i, a in self.coef.items()}, s * self.const)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(a * x[i] for i, a in self.coef.items())

    def __repr__(self) -> str:
        terms = " + ".join(f"{a:g}*x{i}" for i, a in sorted(self.coef.items()))
        return f"Affine({terms or '0'} + {self.const:g})"


def affine_sum(exprs) -> Affine:
    out = Affine()
    for e in exprs:
        out = out + e
    return out


@dataclass
class ConicProblem:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list[tuple[str, int]]
    objective_offset: float = 0.0

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csc_matrix(self.A)
        rows = 0
        for kind, dim in self.cones:
            if kind not in CONE_KINDS:
                raise InvalidInputError(f"unknown cone {kind!r}")
            rows += cone_rows(kind, dim)
        if self.A.shape != (rows, self.c.size) or self.b.size != rows:
            raise InvalidInputError(
                f"inconsistent dimensions: A {self.A.shape}, b {self.b.size}, n {self.c.size}, cone rows {rows}"
            )

    @property
    def n(self) -> int:
        return self.c.size


def cone_rows(kind: str, dim: int) -> int:
    if kind == "exp":
        return 3
    if kind == "psd":
        return dim * (dim + 1) // 2
    return dim


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int = 0
    solve_time: float = 0.0
    raw_status: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class ConicBuilder:
    n: int = 0
    blocks: list[tuple[str, int, list[Affine]]] = field(default_factory=list)
    objective: Affine = field(default_factory=Affine)

    def var(self, shape=()):
        """Fresh variables; returns an ndarray of :class:`Affine` of ``shape``."""
        size = int(np.prod(shape)) if shape else 1
        out = np.empty(size, dtype=object)
        for j in range(size):
            out[j] = Affine.var(self.n + j)
        self.n += size
        return out.reshape(shape) if shape else out[0]

    def eq(self, expr: Affine) -> None:
        self.blocks.append(("zero", 1, [expr]))

    def ge(self, lhs, rhs=0.0) -> None:
        """``lhs >= rhs``."""
        self.blocks.append(("nonneg", 1, [Affine() + lhs - rhs]))

    def le(self, lhs, rhs=0.0) -> None:
        self.ge(rhs, lhs)

    def soc(self, t, xs) -> None:
        """``|| xs || <= t``."""
        items = [Affine() + t] + [Affine() + x for x in xs]
        self.blocks.append(("soc", len(items), items))

    def rotated(self, p, q, r) -> None:
        """``p q >= r^2`` with ``p, q >= 0``, as ``||(2r, p - q)|| <= p + q``."""
        p = Affine() + p
        q = Affine() + q
        self.soc(p + q, [2.0 * (Affine() + r), p - q])

    def exp(self, x, y, z) -> None:
        """``y exp(x / y) <= z`` with ``y > 0``."""
        self.blocks.append(("exp", 3, [Affine() + x, Affine() + y, Affine() + z]))

    def psd(self, matrix) -> None:
        """Symmetric matrix of affine expressions is PSD (upper triangle used)."""
        n = matrix.shape[0]
        items = []
        for col in range(n):
            for row in range(col + 1):
                e = Affine() + matrix[row, col]
                items.append(e if row == col else SQRT2 * e)
        self.blocks.append(("psd", n, items))

    def minimize(self, expr) -> None:
        self.objective = Affine() + expr

    def maximize(self, expr) -> None:
        self.objective = -(Affine() + expr)

    def build(self) -> ConicProblem:
        rows, cols, vals, b, cones = [], [], [], [], []
        r = 0
        ordered = sorted(self.blocks, key=lambda blk: CONE_KINDS.index(blk[0]))
        for kind, dim, items in ordered:
            cones.append((kind, dim))
            for e in items:
                for i, a in e.coef.items():
                    if a != 0.0:
                        rows.append(r)
                        cols.append(i)
                        vals.append(-a)
                b.append(e.const)
                r += 1
        A = sp.csc_matrix((vals, (rows, cols)), shape=(r, self.n))
        c = np.zeros(self.n)
        for i, a in self.objective.coef.items():
            c[i] = a
        return ConicProblem(c, A, np.array(b), _merge_cones(cones), self.objective.const)


def _merge_cones(cones):
    # Adjacent zero/nonneg blocks are merged; other cones stay separate.
    merged = []
    for kind, dim in cones:
        if merged and kind in ("zero", "nonneg") and merged[-1][0] == kind:
            merged[-1] = (kind, merged[-1][1] + dim)
        else:
            merged.append((kind, dim))
    return merged


def _clarabel_cones(cones):
    import clarabel

    out = []
    for kind, dim in cones:
        if kind == "zero":
            out.append(clarabel.ZeroConeT(dim))
        elif kind == "nonneg":
            out.append(clarabel.NonnegativeConeT(dim))
        elif kind == "soc":
            out.append(clarabel.SecondOrderConeT(dim))
        elif kind == "exp":
            out.append(clarabel.ExponentialConeT())
        else:
            out.append(clarabel.PSDTriangleConeT(dim))
    return out


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def conic_solve(p: ConicProblem, tol: float = 1e-8, max_iter: int = 200) -> ConicSolution:
    """Solve with Clarabel's interior-point method.

    Returns status ``optimal``, ``infeasible``, ``unbounded`` or
    ``numerical-failure``; the solve is deterministic for identical input.
    """
    import clarabel

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = max_iter
    settings.max_threads = 1
    P = sp.csc_matrix((p.n, p.n))
    solver = clarabel.DefaultSolver(P, p.c, p.A, p.b, _clarabel_cones(p.cones), settings)
    res = solver.solve()
    raw = str(res.status).split(".")[-1]
    status = _STATUS.get(raw, "numerical-failure")
    x = np.asarray(res.x) if status == "optimal" else None
    obj = float(res.obj_val) + p.objective_offset if status == "optimal" else float("nan")
    return ConicSolution(status, x, obj, int(res.iterations), float(res.solve_time), raw)


# Text dump -----------------------------------------------------------------------
#
#   conic-problem v1
#   n <n> m <m>
#   offset <objective offset>
#   cones <kind>:<dim> <kind>:<dim> ...
#   c <nnz>          followed by <nnz> lines "<col> <value>"
#   A <nnz>          followed by <nnz> lines "<row> <col> <value>"
#   b <nnz>          followed by <nnz> lines "<row> <value>"
#
# Values are written with repr() so a round trip is exact.


def dump_conic(p: ConicProblem, path: str | Path) -> None:
    A = p.A.tocoo()
    lines = ["conic-problem v1", f"n {p.n} m {p.A.shape[0]}", f"offset {float(p.objective_offset)!r}"]
    lines.append("cones " + " ".join(f"{k}:{d}" for k, d in p.cones))
    nz_c = np.flatnonzero(p.c)
    lines.append(f"c {nz_c.size}")
    lines += [f"{i} {float(p.c[i])!r}" for i in nz_c]
    lines.append(f"A {A.nnz}")
    lines += [f"{r} {c} {float(v)!r}" for r, c, v in zip(A.row, A.col, A.data)]
    nz_b = np.flatnonzero(p.b)
    lines.append(f"b {nz_b.size}")
    lines += [f"{i} {float(p.b[i])!r}" for i in nz_b]
    Path(path).write_text("\n".join(lines) + "\n")


def load_conic(path: str | Path) -> ConicProblem:
    it = iter(Path(path).read_text().splitlines())
    if next(it).strip() != "conic-problem v1":
        raise InvalidInputError("not a conic-problem v1 file")
    _, n, _, m = next(it).split()
    n, m = int(n), int(m)
    offset = float(next(it).split()[1])
    cones = []
    for tok in next(it).split()[1:]:
        kind, dim = tok.split(":")
        cones.append((kind, int(dim)))

    def section(name):
        head, count = next(it).split()
        if head != name:
            raise InvalidInputError(f"expected section {name}, got {head}")
        return [next(it).split() for _ in range(int(count))]

    c = np.zeros(n)
    for i, v in section("c"):
        c[int(i)] = float(v)
    trip = section("A")
    rows = [int(t[0]) for t in trip]
    cols = [int(t[1]) for t in trip]
    vals = [float(t[2]) for t in trip]
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
    b = np.zeros(m)
    for i, v in section("b"):
        b[int(i)] = float(v)
    return ConicProblem(c, A, b, cones, offset)
