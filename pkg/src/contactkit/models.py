"""Built-in contact models and a loader for user-defined ones.

``canonical(n)`` is the contact vector space R^(2n+1) with the form
``dq0 + sum p_i dq_i`` on a single chart.  ``primer(n, ...)`` covers the
product of an (n+1)-torus with real projective n-space by n+1 toroidal
charts whose gluing factors are the coordinate ratios of the projective
fiber; its symmetry family consists of the n+1 ratio sections plus one
product of a ratio section with a positive angle-dependent profile.
``primer2(n, ...)`` reuses the same atlas with a fully commuting family
where the profile may vanish, which creates a nonempty common zero locus;
it also carries a reduced single-chart view equivalent to the cotangent
bundle of an n-torus times a circle.

Every constructor validates its model at load time: atlas gluing
identities, sampled contact nondegeneracy, section compatibility,
commutation residuals of the designated family, and membership of the
Hamiltonian in the designated span.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence, Union

import jsonschema
import numpy as np
import yaml

from . import expr
from .bundle import (Atlas, CheckRecord, Overlap, Section, combine_sections,
                     validate_atlas, validate_section)
from .errors import ContactKitError
from .expr import Expression, parse
from .geometry import TWO_PI, Chart, contact_check
from .jacobi import bracket

CONTACT_SAMPLES_PER_CHART = 256
COMMUTATION_SAMPLES = 100
COMMUTATION_TOL = 1e-8
OVERLAP_SAMPLES = 32
DEFAULT_J_MAX = 1e6


class PositivityViolation(ContactKitError):
    def __init__(self, where: float, value: float):
        self.where = where
        self.value = value
        super().__init__(f"profile must stay positive; value {value:.6g} "
                         f"at angle {where:.6g}")


class SchemaError(ContactKitError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"config error at {path}: {message}")


class ValidationError(ContactKitError):
    def __init__(self, check: str, subject: str, residual: float, where=None):
        self.check = check
        self.subject = subject
        self.residual = residual
        self.where = None if where is None else np.asarray(where, dtype=float)
        at = "" if self.where is None else f" at {self.where.tolist()}"
        super().__init__(f"{check} failed for {subject}: residual {residual:.3e}{at}")


@dataclass
class Model:
    """A validated atlas with its symmetry sections.

    ``sections[0 .. r]`` is the designated commuting subfamily; the
    default Hamiltonian lies in its span.
    """

    name: str
    atlas: Atlas
    sections: tuple[Section, ...]
    r: int
    hamiltonian: Section | None
    meta: dict = field(default_factory=dict)
    reduced: "Model | None" = None

    @property
    def p(self) -> int:
        return len(self.sections) - 1

    def section(self, name: str) -> Section:
        for s in self.sections:
            if s.name == name:
                return s
        raise KeyError(f"no section named {name!r}")

    def angle_indices(self, chart_id: str | None = None) -> list[int]:
        chart = self.atlas.chart(chart_id or self.atlas.chart_ids[0])
        return [i for i, per in enumerate(chart.periodic) if per]


# ---------------------------------------------------------------------------
# sampling helpers

def _low_discrepancy(dim: int, count: int) -> np.ndarray:
    """Kronecker additive-recurrence points in the unit cube, deterministic."""
    phi = 2.0
    for _ in range(64):
        phi = (1.0 + phi) ** (1.0 / (dim + 1))
    alphas = np.array([phi ** -(i + 1) for i in range(dim)])
    steps = np.arange(1, count + 1)[:, None]
    return np.mod(0.5 + steps * alphas[None, :], 1.0)


def _chart_samples(chart: Chart, count: int) -> np.ndarray:
    box = chart.effective_sample_box()
    unit = _low_discrepancy(chart.dim, count)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + unit * (hi - lo)


def validate_model(model: Model,
                   form_tol: float = 1e-9,
                   section_tol: float = 1e-9,
                   commutation_tol: float = COMMUTATION_TOL,
                   strict: bool = True) -> list[CheckRecord]:
    """Run every load-time check and return the full record list.

    With ``strict`` (the default) the first failing check raises
    :class:`ValidationError`; otherwise failures stay in the records.
    """
    records: list[CheckRecord] = []
    records.extend(validate_atlas(model.atlas, form_tol=form_tol).records)

    degenerate: set[str] = set()
    for chart in model.atlas.charts.values():
        worst = (np.inf, None)
        ok = True
        for x in _chart_samples(chart, CONTACT_SAMPLES_PER_CHART):
            result = contact_check(chart, x)
            if not result.ok:
                worst = (result.det_proxy, x)
                ok = False
                degenerate.add(chart.id)
                break
            if result.det_proxy < worst[0]:
                worst = (result.det_proxy, x)
        records.append(CheckRecord("contact-nondegeneracy", chart.id,
                                   worst[0], ok, worst[1]))

    for s in model.sections:
        records.extend(validate_section(model.atlas, s, tol=section_tol).records)

    # designated sections must commute with the whole family; brackets only
    # make sense on charts that passed the nondegeneracy test
    per_chart = max(1, COMMUTATION_SAMPLES // max(1, len(model.atlas.charts)))
    for chart in model.atlas.charts.values():
        if chart.id in degenerate:
            continue
        samples = _chart_samples(chart, per_chart)
        for i in range(model.r + 1):
            si = model.sections[i]
            for j in range(len(model.sections)):
                sj = model.sections[j]
                worst = 0.0
                where = None
                for x in samples:
                    value = abs(bracket(chart, si.on(chart.id), sj.on(chart.id), x))
                    if value > worst:
                        worst, where = value, x
                records.append(CheckRecord("commutation",
                                           f"[{si.name},{sj.name}] on {chart.id}",
                                           worst, worst <= commutation_tol, where))

    if model.hamiltonian is not None:
        records.append(_hamiltonian_span_record(model))

    if strict:
        for rec in records:
            if not rec.ok:
                raise ValidationError(rec.check, rec.subject, rec.residual, rec.where)
    return records


def _hamiltonian_span_record(model: Model, tol: float = 1e-8) -> CheckRecord:
    """Least-squares fit of the Hamiltonian by the designated sections on
    sampled points; the fit residual must vanish."""
    rows = []
    rhs = []
    for chart in model.atlas.charts.values():
        env_points = _chart_samples(chart, 16)
        h_expr = model.hamiltonian.on(chart.id)
        basis = [s.on(chart.id) for s in model.sections[: model.r + 1]]
        for x in env_points:
            env = chart.bindings(x)
            rows.append([b.eval(env) for b in basis])
            rhs.append(h_expr.eval(env))
    a = np.array(rows)
    b = np.array(rhs)
    coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.max(np.abs(a @ coeffs - b))) / (1.0 + float(np.max(np.abs(b))))
    return CheckRecord("hamiltonian-span", model.hamiltonian.name, residual,
                       residual < tol)


# ---------------------------------------------------------------------------
# built-in: contact R^(2n+1)

def canonical(n: int, validate: bool = True) -> Model:
    """Single chart (q0, q1..qn, p1..pn) with form dq0 + sum p_i dq_i.

    The section family is the single unit section, whose field is the Reeb
    translation along q0; Hamiltonians are arbitrary user expressions.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    names = tuple(["q0"] + [f"q{i}" for i in range(1, n + 1)]
                  + [f"p{i}" for i in range(1, n + 1)])
    alpha = tuple([expr.literal(1.0)]
                  + [expr.coordinate(f"p{i}") for i in range(1, n + 1)]
                  + [expr.literal(0.0)] * n)
    dim = 2 * n + 1
    chart = Chart(id="canonical", names=names, alpha=alpha,
                  periodic=(False,) * dim,
                  bounds=((-np.inf, np.inf),) * dim)
    atlas = Atlas([chart])
    unit = Section("one", {"canonical": expr.literal(1.0)})
    model = Model(name=f"canonical({n})", atlas=atlas, sections=(unit,), r=0,
                  hamiltonian=unit, meta={"n": n})
    if validate:
        validate_model(model)
    return model


# ---------------------------------------------------------------------------
# built-in: torus times projective space

def _ratio_name(j: int) -> str:
    return f"J{j}"


@lru_cache(maxsize=None)
def _projective_torus_atlas(n: int, j_max: float = DEFAULT_J_MAX,
                            samples_per_overlap: int = OVERLAP_SAMPLES) -> Atlas:
    """Charts V_i over the (n+1)-torus with fiber ratios J_j = y_j / y_i."""
    dim = 2 * n + 1
    angle_names = [f"phi{j}" for j in range(n + 1)]
    charts = []
    for i in range(n + 1):
        ratio_names = [_ratio_name(j) for j in range(n + 1) if j != i]
        names = tuple(angle_names + ratio_names)
        alpha = []
        for j in range(n + 1):
            alpha.append(expr.literal(1.0) if j == i
                         else expr.coordinate(_ratio_name(j)))
        alpha.extend([expr.literal(0.0)] * n)
        periodic = (True,) * (n + 1) + (False,) * n
        bounds = tuple([(0.0, TWO_PI)] * (n + 1) + [(-j_max, j_max)] * n)
        sample_box = tuple([(0.0, TWO_PI)] * (n + 1) + [(-2.0, 2.0)] * n)
        denom_text = "1/sqrt(1 + " + " + ".join(f"{r}^2" for r in ratio_names) + ")"
        charts.append(Chart(id=f"V{i}", names=names, alpha=tuple(alpha),
                            periodic=periodic, bounds=bounds,
                            sample_box=sample_box, denominator=parse(denom_text)))

    overlaps = []
    unit = _low_discrepancy(dim, samples_per_overlap)
    for i in range(n + 1):
        others_i = [j for j in range(n + 1) if j != i]
        for j in range(n + 1):
            if j == i:
                continue
            others_j = [m for m in range(n + 1) if m != j]
            forward = [expr.coordinate(a) for a in angle_names]
            for m in others_j:
                if m == i:
                    forward.append(expr.divide(expr.literal(1.0),
                                               expr.coordinate(_ratio_name(j))))
                else:
                    forward.append(expr.divide(expr.coordinate(_ratio_name(m)),
                                               expr.coordinate(_ratio_name(j))))
            # samples keep every ratio well away from zero so any third
            # chart also contains their image
            samples = []
            for row in unit:
                x = np.empty(dim)
                x[: n + 1] = row[: n + 1] * TWO_PI
                mags = 0.4 + 1.4 * row[n + 1:]
                signs = np.where(np.sin(37.0 * row[n + 1:] + 1.0) >= 0, 1.0, -1.0)
                x[n + 1:] = mags * signs
                samples.append(x)
            overlaps.append(Overlap(src=f"V{i}", dst=f"V{j}",
                                    forward=tuple(forward),
                                    factor=expr.coordinate(_ratio_name(j)),
                                    samples=tuple(samples)))
    return Atlas(charts, overlaps)


def _ratio_sections(n: int) -> list[Section]:
    sections = []
    for m in range(n + 1):
        local = {}
        for i in range(n + 1):
            local[f"V{i}"] = (expr.literal(1.0) if m == i
                              else expr.coordinate(_ratio_name(m)))
        sections.append(Section(f"s{m}", local))
    return sections


def _profile_times(n: int, f: Expression, base: Section, name: str) -> Section:
    local = {cid: expr.multiply(f, e) for cid, e in base.local.items()}
    return Section(name, local)


def _as_profile(n: int, f_expr: Union[str, Expression]) -> Expression:
    f = f_expr if isinstance(f_expr, Expression) else parse(f_expr)
    allowed = {f"phi{n}"}
    if not f.names <= allowed:
        raise ValueError(f"profile may only depend on phi{n}, got names {sorted(f.names)}")
    return f


def profile_zeros(f: Expression, var: str, grid: int = 2048,
                  tol: float = 1e-12) -> list[float]:
    """Zeros of a one-variable periodic profile on [0, 2 pi), located by sign
    changes on a grid and bisected to ``tol``.  Useful for seeding the common
    zero locus of a family whose last section carries the profile."""
    angles = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    values = np.array([f.eval({var: a}) for a in angles])
    zeros = []
    for i in range(grid):
        a = angles[i]
        b = angles[i + 1] if i + 1 < grid else TWO_PI
        fa, fb = values[i], values[(i + 1) % grid]
        if fa == 0.0:
            zeros.append(float(a))
            continue
        if fa * fb >= 0.0:
            continue
        lo, hi, flo = a, b, fa
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            fm = f.eval({var: mid})
            if fm == 0.0:
                lo = hi = mid
                break
            if flo * fm < 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        zeros.append(0.5 * (lo + hi))
    return zeros


def primer(n: int, omegas: Sequence[float], f_expr: Union[str, Expression],
           k: int, j_max: float = DEFAULT_J_MAX, validate: bool = True,
           samples_per_overlap: int = OVERLAP_SAMPLES) -> Model:
    """Torus times projective space with sections s_0..s_n and one extra
    product section f(phi_n) * s_k; the designated commuting family is
    s_0..s_(n-1) and the Hamiltonian is sum omega_j s_j over j < n.

    The profile must be strictly positive (checked on a dense angle grid).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in 0..{n}")
    omegas = tuple(float(w) for w in omegas)
    if len(omegas) != n:
        raise ValueError(f"need {n} frequencies, got {len(omegas)}")
    f = _as_profile(n, f_expr)
    for angle in np.linspace(0.0, TWO_PI, 1024, endpoint=False):
        value = f.eval({f"phi{n}": angle})
        if value <= 0.0:
            raise PositivityViolation(angle, value)

    atlas = _projective_torus_atlas(n, j_max, samples_per_overlap)
    base = _ratio_sections(n)
    extra = _profile_times(n, f, base[k], f"f*s{k}")
    sections = tuple(base + [extra])
    hamiltonian = combine_sections("h", [(omegas[j], base[j]) for j in range(n)])
    model = Model(name=f"primer({n})", atlas=atlas, sections=sections, r=n - 1,
                  hamiltonian=hamiltonian,
                  meta={"n": n, "omegas": omegas, "f": str(f), "k": k})
    if validate:
        validate_model(model)
    return model


def _reduced_view(n: int, omegas: Sequence[float], f: Expression) -> Model:
    """Cotangent bundle of the n-torus times a circle: the V_n chart of the
    projective model with the fiber ratios renamed to momenta."""
    angle_names = [f"phi{j}" for j in range(n + 1)]
    momenta = [f"p{j}" for j in range(n)]
    names = tuple(angle_names + momenta)
    alpha = tuple([expr.coordinate(m) for m in momenta] + [expr.literal(1.0)]
                  + [expr.literal(0.0)] * n)
    periodic = (True,) * (n + 1) + (False,) * n
    bounds = tuple([(0.0, TWO_PI)] * (n + 1) + [(-np.inf, np.inf)] * n)
    chart = Chart(id="N", names=names, alpha=alpha, periodic=periodic, bounds=bounds)
    atlas = Atlas([chart])
    sections = [Section(f"p{j}", {"N": expr.coordinate(f"p{j}")}) for j in range(n)]
    sections.append(Section("f", {"N": f}))
    hamiltonian = combine_sections(
        "h", [(float(omegas[j]), sections[j]) for j in range(n)] + [(1.0, sections[n])])
    return Model(name=f"primer2-reduced({n})", atlas=atlas,
                 sections=tuple(sections), r=n, hamiltonian=hamiltonian,
                 meta={"n": n, "omegas": tuple(map(float, omegas)), "f": str(f)})


def primer2(n: int, omegas: Sequence[float], f_expr: Union[str, Expression],
            j_max: float = DEFAULT_J_MAX, validate: bool = True,
            samples_per_overlap: int = OVERLAP_SAMPLES) -> Model:
    """Same atlas as :func:`primer` with the fully commuting family
    s_0..s_(n-1), f(phi_n) * s_n and Hamiltonian sum omega_j s_j + f s_n.

    The profile may vanish; its zero set times the vanishing fiber ratios
    forms the common zero locus.  ``model.reduced`` carries the
    single-chart cotangent-bundle view of the V_n chart.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    omegas = tuple(float(w) for w in omegas)
    if len(omegas) != n:
        raise ValueError(f"need {n} frequencies, got {len(omegas)}")
    f = _as_profile(n, f_expr)
    atlas = _projective_torus_atlas(n, j_max, samples_per_overlap)
    base = _ratio_sections(n)
    last = _profile_times(n, f, base[n], f"f*s{n}")
    sections = tuple(base[:n] + [last])
    hamiltonian = combine_sections(
        "h", [(omegas[j], base[j]) for j in range(n)] + [(1.0, last)])
    model = Model(name=f"primer2({n})", atlas=atlas, sections=sections, r=n,
                  hamiltonian=hamiltonian,
                  meta={"n": n, "omegas": omegas, "f": str(f)},
                  reduced=_reduced_view(n, omegas, f))
    if validate:
        validate_model(model)
        validate_model(model.reduced)
    return model


# ---------------------------------------------------------------------------
# config loader

_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["charts", "sections", "r", "hamiltonian"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "charts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "coordinates", "alpha"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "coordinates": {"type": "array", "items": {"type": "string"},
                                    "minItems": 3},
                    "periodic": {"type": "array", "items": {"type": "string"}},
                    "alpha": {"type": "array", "items": {"type": "string"}},
                    "domain": {"type": "object"},
                    "sample_box": {"type": "object"},
                    "denominator": {"type": "string"},
                },
            },
        },
        "overlaps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from", "to", "map", "factor"],
                "additionalProperties": False,
                "properties": {
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "map": {"type": "array", "items": {"type": "string"}},
                    "factor": {"type": "string"},
                    "samples": {"type": "array",
                                "items": {"type": "array",
                                          "items": {"type": "number"}}},
                },
            },
        },
        "sections": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "local"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "local": {"type": "object",
                              "additionalProperties": {"type": "string"}},
                },
            },
        },
        "r": {"type": "integer", "minimum": 0},
        "hamiltonian": {
            "oneOf": [{"type": "string"},
                      {"type": "object", "additionalProperties": {"type": "number"}}],
        },
    },
}


def _interval(raw, path: str) -> tuple[float, float]:
    if raw is None:
        return (-np.inf, np.inf)
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise SchemaError(path, "expected [low, high] or null")
    lo = -np.inf if raw[0] is None else float(raw[0])
    hi = np.inf if raw[1] is None else float(raw[1])
    return (lo, hi)


def _parse_expr(text: str, path: str) -> Expression:
    try:
        return parse(text)
    except ContactKitError as exc:
        raise SchemaError(path, str(exc)) from exc


def _build_chart(spec: Mapping, path: str) -> Chart:
    names = tuple(spec["coordinates"])
    if len(names) != len(set(names)):
        raise SchemaError(path + ".coordinates", "duplicate coordinate names")
    periodic_names = set(spec.get("periodic", []))
    unknown = periodic_names - set(names)
    if unknown:
        raise SchemaError(path + ".periodic", f"unknown coordinates {sorted(unknown)}")
    if len(spec["alpha"]) != len(names):
        raise SchemaError(path + ".alpha", "one coefficient required per coordinate")
    alpha = tuple(_parse_expr(t, f"{path}.alpha[{i}]")
                  for i, t in enumerate(spec["alpha"]))
    domain = spec.get("domain", {})
    bad = set(domain) - set(names)
    if bad:
        raise SchemaError(path + ".domain", f"unknown coordinates {sorted(bad)}")
    bounds = tuple(_interval(domain.get(name), f"{path}.domain.{name}")
                   for name in names)
    box_spec = spec.get("sample_box")
    sample_box = None
    if box_spec is not None:
        sample_box = tuple(
            _interval(box_spec.get(name), f"{path}.sample_box.{name}")
            if name in box_spec
            else ((0.0, TWO_PI) if name in periodic_names else (-2.0, 2.0))
            for name in names)
    denominator = None
    if "denominator" in spec:
        denominator = _parse_expr(spec["denominator"], path + ".denominator")
    try:
        return Chart(id=spec["id"], names=names, alpha=alpha,
                     periodic=tuple(n in periodic_names for n in names),
                     bounds=bounds, sample_box=sample_box, denominator=denominator)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc


def _auto_overlap_samples(atlas_charts: Mapping[str, Chart], ov: Overlap,
                          count: int = OVERLAP_SAMPLES) -> tuple:
    """Probe the source sample box and keep points whose image lands inside
    the destination chart."""
    src = atlas_charts[ov.src]
    dst = atlas_charts[ov.dst]
    kept = []
    for x in _chart_samples(src, count * 8):
        try:
            env = src.bindings(x)
            y = np.array([e.eval(env) for e in ov.forward])
        except ContactKitError:
            continue
        if not np.all(np.isfinite(y)):
            continue
        if dst.contains(dst.wrap(y)):
            kept.append(x)
        if len(kept) >= count:
            break
    return tuple(kept)


def from_config(document: Union[str, Path, Mapping]) -> Model:
    """Build and fully validate a model from a YAML/JSON document or path."""
    if isinstance(document, Mapping):
        raw = document
        name = raw.get("name", "config-model")
    else:
        path = Path(document)
        try:
            raw = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise SchemaError(str(document), f"cannot read config: {exc}") from exc
        except yaml.YAMLError as exc:
            raise SchemaError(str(document), f"invalid document: {exc}") from exc
        name = raw.get("name", path.stem) if isinstance(raw, Mapping) else None
    if not isinstance(raw, Mapping):
        raise SchemaError("$", "top level must be a mapping")
    try:
        jsonschema.validate(raw, _CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.json_path, exc.message) from None

    charts = {}
    for i, spec in enumerate(raw["charts"]):
        chart = _build_chart(spec, f"$.charts[{i}]")
        if chart.id in charts:
            raise SchemaError(f"$.charts[{i}].id", f"duplicate chart id {chart.id!r}")
        charts[chart.id] = chart

    overlaps = []
    for i, spec in enumerate(raw.get("overlaps", [])):
        path = f"$.overlaps[{i}]"
        if spec["from"] not in charts or spec["to"] not in charts:
            raise SchemaError(path, "overlap references an unknown chart")
        dst = charts[spec["to"]]
        if len(spec["map"]) != dst.dim:
            raise SchemaError(path + ".map", f"need {dst.dim} target expressions")
        forward = tuple(_parse_expr(t, f"{path}.map[{j}]")
                        for j, t in enumerate(spec["map"]))
        factor = _parse_expr(spec["factor"], path + ".factor")
        samples = tuple(np.asarray(s, dtype=float) for s in spec.get("samples", ()))
        ov = Overlap(src=spec["from"], dst=spec["to"], forward=forward,
                     factor=factor, samples=samples)
        if not ov.samples:
            ov = Overlap(ov.src, ov.dst, ov.forward, ov.factor,
                         _auto_overlap_samples(charts, ov))
            if not ov.samples:
                raise SchemaError(path, "could not find overlap sample points; "
                                        "supply them explicitly")
        overlaps.append(ov)

    atlas = Atlas(list(charts.values()), overlaps)

    sections = []
    for i, spec in enumerate(raw["sections"]):
        path = f"$.sections[{i}]"
        local = {}
        for cid, text in spec["local"].items():
            if cid not in charts:
                raise SchemaError(f"{path}.local.{cid}", "unknown chart id")
            local[cid] = _parse_expr(text, f"{path}.local.{cid}")
        sections.append(Section(spec["name"], local))
    names = [s.name for s in sections]
    if len(names) != len(set(names)):
        raise SchemaError("$.sections", "duplicate section names")

    r = raw["r"]
    if r >= len(sections):
        raise SchemaError("$.r", f"r={r} but only {len(sections)} sections")

    ham_spec = raw["hamiltonian"]
    if isinstance(ham_spec, str):
        if ham_spec not in names:
            raise SchemaError("$.hamiltonian", f"unknown section {ham_spec!r}")
        hamiltonian = sections[names.index(ham_spec)]
    else:
        terms = []
        for key, coeff in ham_spec.items():
            if key not in names:
                raise SchemaError(f"$.hamiltonian.{key}", "unknown section")
            terms.append((float(coeff), sections[names.index(key)]))
        hamiltonian = combine_sections("h", terms)

    model = Model(name=name or "config-model", atlas=atlas,
                  sections=tuple(sections), r=r, hamiltonian=hamiltonian,
                  meta={"source": "config"})
    validate_model(model)
    return model
