"""Convergence-study orchestration: presets, error metrics, and reports.

A study runs every configured (scheme, dt) pair over a set of noise
realizations, measures the RMS discrete-L2 distance to a reference at the
final time, and fits the temporal order by least squares in log-log.
Per realization there is exactly one noise path at the finest step; every
scheme and the reference consume refinements of the same increments, so
the measured error is the pure strong (pathwise) error.

References: the linear additive preset has an exact per-mode solution
(see :mod:`setd.reference`); the nonlinear/multiplicative presets use the
finest-step SETDM1 run on the shared path as the surrogate truth.

Realizations run on a thread pool; results are reduced in realization
order, so reports are bit-identical for any worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from . import darcy
from .errors import DegenerateFitError, DivergenceError, InvalidArgumentError
from .grid import BoundaryTag, build_grid
from .integrators import (ProblemDef, Scheme, SchemeConfig, SETDM1Variant, run)
from .krylov import KrylovConfig
from .noise import NoiseSpec, make_path
from .operators import (FaceVelocities, assemble_fem, assemble_fv, dirichlet,
                        quadrature_weights)
from .reference import (evolve_exact, finest_reference, linear_state,
                        spectral_to_nodal)

PROBLEM_NAMES = ("linear_additive", "advection_homogeneous", "advection_heterogeneous")


@dataclass(frozen=True)
class StudyConfig:
    """Everything a convergence study needs, exactly reproducible from it.

    dt values are Fractions so divisibility (dt | T, finest_dt | dt) is
    checked exactly rather than through float rounding.
    """

    problem: str
    schemes: tuple
    dt_list: tuple
    finest_dt: Fraction
    T: Fraction = Fraction(1)
    realizations: int = 10
    seed: int = 0
    nx: int = 32
    ny: int = 32
    L1: float = 1.0
    L2: float = 1.0
    noise: Optional[NoiseSpec] = None
    krylov: KrylovConfig = field(default_factory=KrylovConfig)
    variant: SETDM1Variant = SETDM1Variant.AS_DEFINED
    threads: int = 1
    c0: float = 0.0
    expected_order: float = 0.5
    problem_params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.problem not in PROBLEM_NAMES:
            raise InvalidArgumentError(
                f"unknown problem {self.problem!r}; expected one of {PROBLEM_NAMES}"
            )
        if not self.schemes:
            raise InvalidArgumentError("at least one scheme is required")
        for s in self.schemes:
            if not isinstance(s, Scheme):
                raise InvalidArgumentError(f"schemes must be Scheme members, got {s!r}")
        if self.realizations < 1:
            raise InvalidArgumentError("realizations must be >= 1")
        if self.threads < 1:
            raise InvalidArgumentError("threads must be >= 1")
        dts = tuple(Fraction(d) for d in self.dt_list)
        object.__setattr__(self, "dt_list", dts)
        object.__setattr__(self, "finest_dt", Fraction(self.finest_dt))
        object.__setattr__(self, "T", Fraction(self.T))
        if not dts:
            raise InvalidArgumentError("dt_list must be non-empty")
        if any(d <= 0 for d in dts) or self.finest_dt <= 0 or self.T <= 0:
            raise InvalidArgumentError("times must be positive")
        if list(dts) != sorted(dts, reverse=True) or len(set(dts)) != len(dts):
            raise InvalidArgumentError("dt_list must be strictly decreasing")
        for d in dts:
            if (self.T / d).denominator != 1:
                raise InvalidArgumentError(f"dt {d} does not divide T={self.T}")
            if (d / self.finest_dt).denominator != 1:
                raise InvalidArgumentError(
                    f"dt {d} is not an integer multiple of finest_dt {self.finest_dt}"
                )
        if (self.T / self.finest_dt).denominator != 1:
            raise InvalidArgumentError("finest_dt does not divide T")
        if self.noise is None:
            object.__setattr__(self, "noise", default_noise(self.problem, self.L1, self.L2))

    @property
    def fine_steps(self):
        return int(self.T / self.finest_dt)


def default_noise(problem, L1=1.0, L2=1.0):
    """Preset noise: smooth exponential spectrum for the linear problem,
    slowly decaying power law for the advection problems."""
    if problem == "linear_additive":
        return NoiseSpec.exponential(L1=L1, L2=L2)
    return NoiseSpec.powerlaw(L1=L1, L2=L2)


def linear_additive_study(nx=32, realizations=10, seed=0, threads=1,
                          dt_list=(Fraction(1, 10), Fraction(1, 20), Fraction(1, 40),
                                   Fraction(1, 80), Fraction(1, 160)),
                          finest_dt=Fraction(1, 160), schemes=None, **kwargs):
    """Reaction-diffusion with additive smooth noise; exact spectral reference."""
    if schemes is None:
        schemes = (Scheme.SETDM0, Scheme.SETDM1, Scheme.SEMI_IMPLICIT_EULER)
    return StudyConfig(problem="linear_additive", schemes=tuple(schemes),
                       dt_list=tuple(dt_list), finest_dt=finest_dt, nx=nx, ny=nx,
                       realizations=realizations, seed=seed, threads=threads, **kwargs)


def advection_study(heterogeneous=False, nx=32, realizations=20, seed=0, threads=1,
                    dt_list=(Fraction(1, 10), Fraction(1, 20), Fraction(1, 40),
                             Fraction(1, 80), Fraction(1, 160)),
                    finest_dt=Fraction(1, 1600), schemes=None, **kwargs):
    """Advection-diffusion-reaction with multiplicative rough noise;
    finest-step SETDM1 reference."""
    if schemes is None:
        schemes = (Scheme.SETDM0, Scheme.SETDM1)
    name = "advection_heterogeneous" if heterogeneous else "advection_homogeneous"
    return StudyConfig(problem=name, schemes=tuple(schemes), dt_list=tuple(dt_list),
                       finest_dt=finest_dt, nx=nx, ny=nx,
                       realizations=realizations, seed=seed, threads=threads, **kwargs)


def build_problem(cfg):
    """Assemble the discrete problem for a study config (shared, read-only)."""
    grid = build_grid(cfg.nx, cfg.ny, cfg.L1, cfg.L2)
    pp = dict(cfg.problem_params)
    c0 = cfg.c0
    if cfg.problem == "linear_additive":
        diffusion = float(pp.pop("diffusion", 1.0))
        reaction = float(pp.pop("reaction", 0.5))
        _reject_unknown(pp)
        discrete = assemble_fem(grid, diffusion, bc=None, c0=c0)
        if c0 == 0.0:
            def drift(u, _r=reaction):
                return -_r * u
        else:
            def drift(u, _r=reaction, _c=c0):
                return (_c - _r) * u
        return ProblemDef(discrete=discrete, noise=cfg.noise, X0=np.zeros(discrete.ndof),
                          drift=drift, dispersion=None, name=cfg.problem,
                          linear_reference=(diffusion, reaction))

    dx_diff = float(pp.pop("diffusion_x", 1e-2))
    dy_diff = float(pp.pop("diffusion_y", 1e-3))
    inflow = float(pp.pop("inflow", 1.0))
    if cfg.problem == "advection_homogeneous":
        vx = float(pp.pop("velocity_x", 1.0))
        vy = float(pp.pop("velocity_y", 0.0))
        _reject_unknown(pp)
        faces = FaceVelocities.constant(grid, vx, vy)
    else:
        perm = darcy.PermeabilityField.streaks(
            grid,
            contrast=float(pp.pop("contrast", 100.0)),
            centers=tuple(pp.pop("centers", (0.25, 0.5, 0.75))),
            width_cells=pp.pop("width_cells", None),
            base=float(pp.pop("base", 1.0)),
            mu=float(pp.pop("mu", 1.0)),
        )
        p_left = float(pp.pop("p_left", 1.0))
        p_right = float(pp.pop("p_right", 0.0))
        _reject_unknown(pp)
        _, faces = darcy.solve_darcy(perm, p_left, p_right)
    bc = {BoundaryTag.LEFT: dirichlet(inflow)}
    discrete = assemble_fv(grid, (dx_diff, dy_diff), q_faces=faces, bc=bc, c0=c0)

    if c0 == 0.0:
        def drift(u):
            return -u / (np.abs(u) + 1.0)
    else:
        def drift(u, _c=c0):
            return -u / (np.abs(u) + 1.0) + _c * u

    return ProblemDef(discrete=discrete, noise=cfg.noise, X0=np.zeros(discrete.ndof),
                      drift=drift, dispersion=lambda u: u, name=cfg.problem)


def _reject_unknown(pp):
    if pp:
        raise InvalidArgumentError(f"unknown problem parameters: {sorted(pp)}")


def rms_l2_error(samples, grid):
    """Root mean square of discrete L2 errors over realizations.

    samples is a sequence of (approx, reference) vector pairs; the vector
    length selects nodal (trapezoid) or cell-volume quadrature weights.
    """
    if len(samples) == 0:
        raise InvalidArgumentError("rms_l2_error needs at least one sample")
    a0, r0 = samples[0]
    w = quadrature_weights(grid, len(a0))
    acc = 0.0
    for approx, ref in samples:
        approx = np.asarray(approx, dtype=np.float64)
        ref = np.asarray(ref, dtype=np.float64)
        if approx.shape != ref.shape or approx.shape != w.shape:
            raise InvalidArgumentError("sample vectors must share the DOF dimension")
        diff = approx - ref
        acc += float(w @ (diff * diff))
    return float(np.sqrt(acc / len(samples)))


def fit_order(dts, errors):
    """Least-squares slope (and intercept) of log(error) against log(dt)."""
    dts = [float(d) for d in dts]
    errors = [float(e) for e in errors]
    if len(dts) != len(errors):
        raise InvalidArgumentError("dts and errors must have equal length")
    if len(dts) < 3:
        raise DegenerateFitError(f"order fit needs >= 3 levels, got {len(dts)}")
    if any(not np.isfinite(d) or d <= 0 for d in dts):
        raise DegenerateFitError("dt values must be positive and finite")
    if any(not np.isfinite(e) or e <= 0 for e in errors):
        raise DegenerateFitError("errors must be positive and finite to fit a power law")
    if len(set(dts)) < 2:
        raise DegenerateFitError("dt values are all identical")
    slope, intercept = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope), float(intercept)


@dataclass
class ReportRow:
    scheme: str
    dt: Fraction
    rms_error: float
    realizations: int
    flagged_count: int


@dataclass
class ConvergenceReport:
    """Study outcome: one row per (scheme, dt) plus fitted orders."""

    rows: list
    fitted_orders: dict            # scheme name -> slope (None if not fittable)
    expected_order: float
    metadata: dict

    def to_csv(self, path):
        lines = ["scheme,dt,rms_error,realizations,flagged_count"]
        for row in self.rows:
            lines.append(
                f"{row.scheme},{row.dt},{row.rms_error!r},{row.realizations},{row.flagged_count}"
            )
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json(self, path):
        payload = {
            "rows": [
                {
                    "scheme": row.scheme,
                    "dt": str(row.dt),
                    "rms_error": row.rms_error,
                    "realizations": row.realizations,
                    "flagged_count": row.flagged_count,
                }
                for row in self.rows
            ],
            "fitted_orders": self.fitted_orders,
            "expected_order": self.expected_order,
            "metadata": self.metadata,
        }
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _realization_worker(cfg, problem, r):
    """All runs for one realization: shared path, reference, every cell.

    Returns (reference_ok, {cell: final_field_or_None}). A reference
    failure flags every cell of this realization.
    """
    path = make_path(cfg.noise, cfg.seed, r, float(cfg.finest_dt), cfg.fine_steps)
    try:
        if problem.linear_reference is not None:
            diffusion, reaction = problem.linear_reference
            state = evolve_exact(linear_state(cfg.noise, diffusion, reaction), path)
            ref = spectral_to_nodal(state, problem.discrete.grid, problem.where)
        else:
            template = SchemeConfig(Scheme.SETDM1, float(cfg.finest_dt), cfg.fine_steps,
                                    krylov=cfg.krylov, setdm1_variant=cfg.variant)
            ref = finest_reference(problem, path, template)
    except DivergenceError:
        return None, {}
    fields = {}
    for scheme in cfg.schemes:
        for dt in cfg.dt_list:
            coarsening = int(dt / cfg.finest_dt)
            steps = int(cfg.T / dt)
            run_cfg = SchemeConfig(scheme, float(dt), steps, krylov=cfg.krylov,
                                   setdm1_variant=cfg.variant)
            try:
                fields[(scheme, dt)] = run(problem, run_cfg, path, coarsening).final
            except DivergenceError:
                fields[(scheme, dt)] = None
    return ref, fields


def run_study(cfg):
    """Execute a convergence study and assemble its report.

    Realizations are independent work items on a thread pool; the
    reduction iterates realization indices in order, so the report does
    not depend on the worker count.
    """
    problem = build_problem(cfg)
    grid = problem.discrete.grid
    if cfg.threads == 1:
        results = [_realization_worker(cfg, problem, r) for r in range(cfg.realizations)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda r: _realization_worker(cfg, problem, r),
                                    range(cfg.realizations)))

    rows = []
    per_scheme = {scheme: ([], []) for scheme in cfg.schemes}
    for scheme in cfg.schemes:
        for dt in cfg.dt_list:
            samples = []
            flagged = 0
            for ref, fields in results:
                final = None if ref is None else fields.get((scheme, dt))
                if ref is None or final is None:
                    flagged += 1
                else:
                    samples.append((final, ref))
            rms = rms_l2_error(samples, grid) if samples else float("nan")
            rows.append(ReportRow(scheme.value, dt, rms, cfg.realizations, flagged))
            if samples and np.isfinite(rms) and rms > 0:
                per_scheme[scheme][0].append(dt)
                per_scheme[scheme][1].append(rms)

    fitted = {}
    for scheme, (dts, errs) in per_scheme.items():
        try:
            fitted[scheme.value], _ = fit_order(dts, errs)
        except DegenerateFitError:
            fitted[scheme.value] = None

    noise = cfg.noise
    metadata = {
        "problem": cfg.problem,
        "seed": cfg.seed,
        "realizations": cfg.realizations,
        "T": str(cfg.T),
        "dt_list": [str(d) for d in cfg.dt_list],
        "finest_dt": str(cfg.finest_dt),
        "grid": {"nx": cfg.nx, "ny": cfg.ny, "L1": cfg.L1, "L2": cfg.L2},
        "noise": {
            "kind": noise.kind.value,
            "n1": noise.n1,
            "n2": noise.n2,
            "gamma": noise.gamma,
            "b1": noise.b1,
            "b2": noise.b2,
            "r": noise.r,
        },
        "krylov": {"m": cfg.krylov.m, "tol": cfg.krylov.tol},
        "setdm1_variant": cfg.variant.value,
        "c0": cfg.c0,
        "schemes": [s.value for s in cfg.schemes],
        "problem_params": dict(cfg.problem_params),
    }
    return ConvergenceReport(rows=rows, fitted_orders=fitted,
                             expected_order=cfg.expected_order, metadata=metadata)
