"""Convergence studies for recovered second derivatives.

Two drivers: an interpolation study (recover from the nodal interpolant,
measure the discrete max error over interior DOF nodes) and a finite
element study (solve the Poisson model problem, recover from u_h, measure
the L2 error over the interior elements).  Both walk a sequence of meshes,
record per-method errors, and attach convergence orders computed against
the DOF count; `h_order` gives the mesh-size rate (= 2x the DOF rate for
uniform refinement in 2D).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .fem import (Coefficients, FESpace, interpolate, l2_error_region,
                  max_error_nodes, solve_dirichlet)
from .mesh import (PATTERNS, Triangulation, generate_uniform, interior_region,
                   load_mesh, refine_uniform, smoothed_refine)
from .recovery import normalize_method, recover_hessian

EXAMPLES = ("interpolation_study", "fem_study")


class StudyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# exact solutions

@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with the derivatives the studies compare against.

    `hessian` returns one row (xx, xy, yx, yy) per point; `rhs` is -laplacian,
    the load that makes `u` solve the model problem.
    """

    name: str
    u: object
    gradient: object
    hessian: object
    rhs: object


def _sinsin():
    pi = np.pi

    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def gradient(x, y):
        return np.column_stack([pi * np.cos(pi * x) * np.sin(pi * y),
                                pi * np.sin(pi * x) * np.cos(pi * y)])

    def hessian(x, y):
        dxx = -pi * pi * np.sin(pi * x) * np.sin(pi * y)
        dxy = pi * pi * np.cos(pi * x) * np.cos(pi * y)
        return np.column_stack([dxx, dxy, dxy, dxx])

    def rhs(x, y):
        return 2.0 * pi * pi * np.sin(pi * x) * np.sin(pi * y)

    return ExactSolution("sinsin", u, gradient, hessian, rhs)


def _diff_terms(terms, dx, dy):
    out = {}
    for (p, q), c in terms.items():
        if p < dx or q < dy:
            continue
        for i in range(dx):
            c *= p - i
        for j in range(dy):
            c *= q - j
        out[(p - dx, q - dy)] = out.get((p - dx, q - dy), 0.0) + c
    return out


def _term_eval(terms):
    items = sorted(terms.items())

    def f(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        acc = np.zeros(np.broadcast(x, y).shape)
        for (p, q), c in items:
            acc += c * x**p * y**q
        return acc

    return f


def _polynomial(name, terms):
    """Catalog entry for u = sum c * x^p * y^q given as {(p, q): c}."""
    dx = _diff_terms(terms, 1, 0)
    dy = _diff_terms(terms, 0, 1)
    dxx = _diff_terms(terms, 2, 0)
    dxy = _diff_terms(terms, 1, 1)
    dyy = _diff_terms(terms, 0, 2)
    neg_lap = {key: -c for key, c in dxx.items()}
    for key, c in dyy.items():
        neg_lap[key] = neg_lap.get(key, 0.0) - c
    ux, uy = _term_eval(dx), _term_eval(dy)
    uxx, uxy, uyy = _term_eval(dxx), _term_eval(dxy), _term_eval(dyy)

    def gradient(x, y):
        return np.column_stack([ux(x, y), uy(x, y)])

    def hessian(x, y):
        hxy = uxy(x, y)
        return np.column_stack([uxx(x, y), hxy, hxy, uyy(x, y)])

    return ExactSolution(name, _term_eval(terms), gradient, hessian,
                         _term_eval(neg_lap))


SOLUTIONS = {
    "sinsin": _sinsin(),
    "poly2": _polynomial("poly2", {(2, 0): 1.0, (1, 1): 3.0, (0, 2): 2.0}),
    "poly3": _polynomial("poly3", {(3, 0): 1.0, (2, 1): 1.0, (1, 2): 1.0,
                                   (0, 3): 1.0}),
    "poly4": _polynomial("poly4", {(4, 0): 1.0, (2, 2): 1.0, (0, 4): 1.0}),
}


# ---------------------------------------------------------------------------
# configuration and report

@dataclass
class StudyConfig:
    """One study: a mesh source, an element order, methods, and a level count.

    Named patterns are regenerated with n doubled per level; an imported
    mesh (path prefix or in-memory triangulation) is refined uniformly.
    """

    example: str
    pattern: str = None
    mesh_source: object = None
    k: int = 1
    methods: tuple = ("ppr_ppr",)
    levels: int = 6
    L: float = 0.1
    solution: str = "sinsin"
    base_n: int = 10
    refinement: str = "red"

    def __post_init__(self):
        alias = {"interpolation": "interpolation_study", "fem": "fem_study"}
        self.example = alias.get(self.example, self.example)
        if self.example not in EXAMPLES:
            raise StudyError(f"unknown example {self.example!r}; "
                             f"expected one of {EXAMPLES}")
        if (self.pattern is None) == (self.mesh_source is None):
            raise StudyError("exactly one of pattern and mesh_source is required")
        if self.pattern is not None and self.pattern not in PATTERNS:
            raise StudyError(f"unknown pattern {self.pattern!r}")
        if self.k not in (1, 2):
            raise StudyError("element order k must be 1 or 2")
        if not self.methods:
            raise StudyError("methods must be nonempty")
        self.methods = tuple(normalize_method(m) for m in self.methods)
        if self.k == 2 and any(m != "ppr_ppr" for m in self.methods):
            raise StudyError("comparison methods support linear elements only")
        if self.levels < 2:
            raise StudyError("levels must be at least 2")
        if self.L < 0:
            raise StudyError("cutoff L must be nonnegative")
        if self.solution not in SOLUTIONS:
            raise StudyError(f"unknown solution {self.solution!r}; "
                             f"catalog: {tuple(SOLUTIONS)}")
        if self.pattern is not None and self.base_n < 2:
            raise StudyError("base_n must be at least 2")
        if self.refinement not in ("red", "smoothed"):
            raise StudyError("refinement must be 'red' or 'smoothed'")

    def source_label(self):
        if self.pattern is not None:
            return f"pattern={self.pattern} base_n={self.base_n}"
        name = (self.mesh_source.pattern_tag
                if isinstance(self.mesh_source, Triangulation)
                else self.mesh_source)
        return f"mesh={name} refinement={self.refinement}"


@dataclass
class StudyReport:
    """Per-level DOF counts, mesh sizes, and per-method errors and orders.

    `orders[m][0]` is None; later entries are DOF-count orders between
    consecutive levels.
    """

    config: StudyConfig
    dofs: list
    hs: list
    errors: dict
    orders: dict = field(default=None)

    def __post_init__(self):
        if len(self.dofs) != len(self.hs):
            raise StudyError("dofs and hs must have equal length")
        if any(b <= a for a, b in zip(self.dofs, self.dofs[1:])):
            raise StudyError("DOF counts must be strictly increasing")
        for m, errs in self.errors.items():
            if len(errs) != len(self.dofs):
                raise StudyError(f"error column {m!r} has wrong length")
            if any(not (e > 0) for e in errs):
                raise StudyError(f"error column {m!r} has non-positive entries")
        if self.orders is None:
            self.orders = {m: [None] + [dof_order(errs, self.dofs, row)
                                        for row in range(1, len(self.dofs))]
                           for m, errs in self.errors.items()}

    @property
    def methods(self):
        return tuple(self.errors)

    def h_orders(self, method):
        errs = self.errors[method]
        return [None] + [h_order(errs, self.hs, row)
                         for row in range(1, len(errs))]

    def final_order(self, method):
        return self.orders[method][-1]


def dof_order(errors, dofs, row):
    """Rate against the DOF count: ln(e_prev/e_cur) / ln(N_cur/N_prev)."""
    if row < 1 or row >= len(errors):
        raise StudyError("order rows start at 1")
    e_prev, e_cur = errors[row - 1], errors[row]
    if not (e_prev > 0 and e_cur > 0):
        return None
    return math.log(e_prev / e_cur) / math.log(dofs[row] / dofs[row - 1])


def h_order(errors, hs, row):
    """Rate against the mesh size: ln(e_prev/e_cur) / ln(h_prev/h_cur)."""
    if row < 1 or row >= len(errors):
        raise StudyError("order rows start at 1")
    e_prev, e_cur = errors[row - 1], errors[row]
    if not (e_prev > 0 and e_cur > 0):
        return None
    return math.log(e_prev / e_cur) / math.log(hs[row - 1] / hs[row])


# ---------------------------------------------------------------------------
# study drivers

def _level_meshes(config):
    if config.pattern is not None:
        for level in range(config.levels):
            yield generate_uniform(config.pattern, config.base_n * 2**level)
        return
    src = config.mesh_source
    if isinstance(src, Triangulation):
        mesh = src
    else:
        prefix = str(src)
        if prefix.endswith(".node"):
            prefix = prefix[:-len(".node")]
        mesh = load_mesh(prefix)
    refine = refine_uniform if config.refinement == "red" else smoothed_refine
    yield mesh
    for _ in range(config.levels - 1):
        mesh = refine(mesh)
        yield mesh


def _run_study(config, level_field):
    dofs, hs = [], []
    errors = {m: [] for m in config.methods}
    solution = SOLUTIONS[config.solution]
    for mesh in _level_meshes(config):
        space = FESpace(mesh, config.k)
        region = interior_region(mesh, config.L, config.k)
        values = level_field(space, solution)
        for m in config.methods:
            recovered = recover_hessian(values, m)
            if config.example == "interpolation_study":
                err = max_error_nodes(recovered, solution.hessian,
                                      region.interior_nodes)
            else:
                err = l2_error_region(recovered, solution.hessian, region)
            errors[m].append(err)
        dofs.append(space.dof_count)
        h = mesh.grid_spacing if mesh.grid_spacing is not None else mesh.mesh_size_h
        hs.append(float(h))
    return StudyReport(config=config, dofs=dofs, hs=hs, errors=errors)


def run_interpolation_study(config):
    """Recover from the nodal interpolant; max error over interior DOF nodes."""
    if config.example != "interpolation_study":
        raise StudyError("config.example must be interpolation_study")
    return _run_study(config, lambda space, sol: interpolate(space, sol.u))


def run_fem_study(config):
    """Solve -div(grad u) = f with exact Dirichlet data, recover from u_h,
    and take the L2 error of the recovered matrix over interior elements."""
    if config.example != "fem_study":
        raise StudyError("config.example must be fem_study")

    def level_field(space, sol):
        return solve_dirichlet(space, Coefficients(f=sol.rhs), g=sol.u)

    return _run_study(config, level_field)


def run_study(config):
    if config.example == "interpolation_study":
        return run_interpolation_study(config)
    return run_fem_study(config)


# ---------------------------------------------------------------------------
# report emission

def _fmt_err(e):
    return f"{e:.2e}"


def _fmt_order(o, missing):
    return missing if o is None else f"{o:.2f}"


def _config_echo(report):
    c = report.config
    return (f"# {c.example} {c.source_label()} k={c.k} levels={c.levels} "
            f"L={c.L:g} solution={c.solution} methods={','.join(c.methods)}")


def emit_report(report, format="csv"):
    """Render a report as `csv` (dof,h,<method>_err,<method>_order,...) or
    `markdown` (Dof column plus an error/order pair per method)."""
    if format == "csv":
        return _emit_csv(report)
    if format == "markdown":
        return _emit_markdown(report)
    raise StudyError(f"unknown report format {format!r}")


def _emit_csv(report):
    header = ["dof", "h"]
    for m in report.methods:
        header += [f"{m}_err", f"{m}_order"]
    lines = [_config_echo(report), ",".join(header)]
    for row in range(len(report.dofs)):
        cells = [str(report.dofs[row]), f"{report.hs[row]:.6g}"]
        for m in report.methods:
            cells.append(_fmt_err(report.errors[m][row]))
            cells.append(_fmt_order(report.orders[m][row], ""))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _emit_markdown(report):
    cols = ["Dof"]
    for m in report.methods:
        cols += [f"{m} De", "order"]
    lines = ["| " + " | ".join(cols) + " |",
             "|" + "---|" * len(cols)]
    for row in range(len(report.dofs)):
        cells = [str(report.dofs[row])]
        for m in report.methods:
            cells.append(_fmt_err(report.errors[m][row]))
            cells.append(_fmt_order(report.orders[m][row], "--"))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def parse_csv_report(text):
    """Inverse of the csv emitter, for round-trip checks: returns
    (dofs, hs, {column: values}) with orders as None where blank."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    dofs = [int(r[0]) for r in rows]
    hs = [float(r[1]) for r in rows]
    columns = {}
    for j, name in enumerate(header[2:], start=2):
        if name.endswith("_order"):
            columns[name] = [None if r[j] == "" else float(r[j]) for r in rows]
        else:
            columns[name] = [float(r[j]) for r in rows]
    return dofs, hs, columns
