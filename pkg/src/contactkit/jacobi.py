"""Contact Hamiltonian vector fields and the Jacobi bracket on a single chart.

The generating relation is ``alpha(X_f) = f``; the field is assembled as

    X_f = f Z + sharp(df - df(Z) alpha)

and the bracket as ``[f, g] = X_f(g) - g Z(f)``.  The bracket is a Lie
bracket but not a derivation; see the tests for a concrete witness of the
failing product rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numkernel
from .errors import ContactKitError
from .expr import Expression, multiply
from .geometry import (Chart, ContactFrame, FieldLike, TangentVector, as_field,
                       frame_at)


class PreconditionFailed(ContactKitError):
    def __init__(self, what: str, where: np.ndarray, residual: float):
        self.what = what
        self.where = np.asarray(where, dtype=float)
        self.residual = residual
        super().__init__(f"{what}: residual {residual:.3e} at {self.where.tolist()}")


def _field_components(frame: ContactFrame, field) -> np.ndarray:
    value = float(field(frame.x))
    df = numkernel.grad(field, frame.x)
    eta = df - float(df @ frame.reeb) * frame.alpha
    return value * frame.reeb + frame.sharp(eta)


class HamiltonianField:
    """Evaluator for the contact vector field generated by a scalar field."""

    def __init__(self, chart: Chart, f: FieldLike):
        self.chart = chart
        self.generator = as_field(chart, f)

    def __call__(self, x) -> np.ndarray:
        return _field_components(frame_at(self.chart, x), self.generator)

    def at(self, x) -> TangentVector:
        fr = frame_at(self.chart, x)
        return TangentVector(self.chart.id, fr.x, _field_components(fr, self.generator))


def ham_field(chart: Chart, f: FieldLike, x) -> TangentVector:
    return HamiltonianField(chart, f).at(x)


def bracket(chart: Chart, f: FieldLike, g: FieldLike, x) -> float:
    fr = frame_at(chart, x)
    ff = as_field(chart, f)
    gf = as_field(chart, g)
    xf = _field_components(fr, ff)
    dg = numkernel.grad(gf, fr.x)
    df = numkernel.grad(ff, fr.x)
    return float(dg @ xf) - float(gf(fr.x)) * float(df @ fr.reeb)


def bracket_field(chart: Chart, f: FieldLike, g: FieldLike):
    """The bracket as a pointwise-evaluated scalar field (no exact gradient)."""
    ff = as_field(chart, f)
    gf = as_field(chart, g)

    def value(x):
        return bracket(chart, ff, gf, x)

    return value


def iso_residual(chart: Chart, f: FieldLike, g: FieldLike, x) -> float:
    """Norm of ``X_[f,g] - [X_f, X_g]`` at ``x``.  Both sides need derivatives
    of solved quantities, so the outer level is finite differences and the
    meaningful tolerance is around 1e-6."""
    x = np.asarray(x, dtype=float)
    lhs = _field_components(frame_at(chart, x), bracket_field(chart, f, g))
    xf = HamiltonianField(chart, f)
    xg = HamiltonianField(chart, g)
    rhs = numkernel.lie_bracket(xf, xg, x)
    return float(np.linalg.norm(lhs - rhs))


@dataclass(frozen=True)
class IndependenceReport:
    rank_wedge: int
    dim_span_with_reeb: int
    dim_span_without: int


def independence(chart: Chart, x, fs: Sequence[FieldLike],
                 tol: float = numkernel.DEFAULT_RANK_TOL) -> IndependenceReport:
    """Rank data behind the independence tests: the wedge of alpha with the
    differentials, and the span of the Hamiltonian fields with and without
    the Reeb field."""
    fr = frame_at(chart, x)
    fields = [as_field(chart, f) for f in fs]
    rows = [fr.alpha] + [numkernel.grad(f, fr.x) for f in fields]
    rank_wedge = numkernel.numerical_rank(np.array(rows), tol)
    vectors = np.array([_field_components(fr, f) for f in fields])
    without = numkernel.numerical_rank(vectors, tol) if len(fields) else 0
    stacked = np.vstack([fr.reeb[None, :], vectors]) if len(fields) else fr.reeb[None, :]
    with_reeb = numkernel.numerical_rank(stacked, tol)
    return IndependenceReport(rank_wedge, with_reeb, without)


@dataclass(frozen=True)
class SymmetryReport:
    max_residual: float
    worst_point: np.ndarray


def make_symmetry(chart: Chart, h: Expression, s: Expression, f: Expression,
                  points: Sequence[np.ndarray],
                  tol: float = 1e-8) -> tuple[Expression, SymmetryReport]:
    """Multiply a symmetry ``s`` of ``h`` by an integral ``f`` of the flow,
    returning the product together with its verified bracket residual.

    Preconditions ``[h, s] = 0`` and ``X_h(f) = 0`` are checked at the
    supplied sample points and raise :class:`PreconditionFailed` when they
    do not hold.
    """
    hf = as_field(chart, h)
    sf = as_field(chart, s)
    ff = as_field(chart, f)
    for x in points:
        fr = frame_at(chart, x)
        commutator = bracket(chart, hf, sf, x)
        if abs(commutator) > tol:
            raise PreconditionFailed("[h, s] != 0", x, abs(commutator))
        xh = _field_components(fr, hf)
        transport = float(numkernel.grad(ff, fr.x) @ xh)
        if abs(transport) > tol:
            raise PreconditionFailed("X_h(f) != 0", x, abs(transport))
    product = multiply(f, s)
    worst = 0.0
    worst_point = np.asarray(points[0], dtype=float)
    pf = as_field(chart, product)
    for x in points:
        residual = abs(bracket(chart, hf, pf, x))
        if residual > worst:
            worst = residual
            worst_point = np.asarray(x, dtype=float)
    return product, SymmetryReport(worst, worst_point)
