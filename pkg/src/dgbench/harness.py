"""Suite orchestration: configuration, the check pipeline and report aggregation."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .degiorgi import iterate_to_point, lambda_constant_A, lambda_step, local_max_bound
from .elliptic import (BOUNDARY_DATA, CorpusConfig, WeakProblem, boundary_function, dump_coefficients,
                       make_coefficients, solve, subsolution_corpus)
from .energy import (ConstantsLedger, caccioppoli_check, cone_quotient_exact, default_exponent,
                     estimate_sobolev_constant, sobolev_gain_check)
from .geometry import BallDomain, ScalarField, dump_field
from .oscillation import OscillationLedger, holder_exponent, oscillation_decay_check
from .reports import LemmaReport, jsonable, skipped
from .shadow import (CellSet, DirectionSample, angular_union_measure, build_trees_example, default_directions,
                     direction_set_measure, dump_cellset, find_shooting_direction, trees_report, verify_l2)

log = logging.getLogger(__name__)

SECTIONS = ("solver", "corpus", "energy", "degiorgi", "shadow", "oscillation")
KINDS = ("identity", "checkerboard", "random-rotation")
VOLATILE = "volatile"


class ConfigError(ValueError):
    pass


def default_h(n: int) -> float:
    return 1.0 / 64 if n == 2 else 1.0 / 16


@dataclass
class RunConfig:
    n: int = 2
    h: float | None = None
    ellipticity: list = field(default_factory=lambda: [[1.0, 10.0], [1.0, 100.0]])
    kinds: list = field(default_factory=lambda: list(KINDS))
    seed: int = 7
    directions: int | None = None
    slack_coeff: float = 10.0
    sobolev_s: float | None = None
    boundaries: list = field(default_factory=lambda: ["x1", "bump", "wave"])
    shifts: list = field(default_factory=lambda: [0.25, 0.5])
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.h is None:
            self.h = default_h(self.n)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "RunConfig":
        if self.n not in (2, 3):
            raise ConfigError("n must be 2 or 3")
        if not (0 < self.h <= 1.0 / 8):
            raise ConfigError("h must lie in (0, 1/8]")
        if not self.ellipticity:
            raise ConfigError("at least one (lambda, Lambda) pair is required")
        for pair in self.ellipticity:
            if len(pair) != 2:
                raise ConfigError(f"ellipticity entry {pair!r} is not a pair")
            lam, Lam = map(float, pair)
            if not (0 < lam <= Lam) or not math.isfinite(Lam):
                raise ConfigError(f"need 0 < lambda <= Lambda, got {lam}, {Lam}")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad or not self.kinds:
            raise ConfigError(f"unknown coefficient kinds {bad}")
        bad = [b for b in self.boundaries if b not in BOUNDARY_DATA]
        if bad or not self.boundaries:
            raise ConfigError(f"unknown boundary data {bad}")
        if self.directions is not None and self.directions < 16:
            raise ConfigError("direction sample must have at least 16 directions")
        if self.sobolev_s is not None and not self.sobolev_s > 0:
            raise ConfigError("Sobolev constant must be positive")
        if self.slack_coeff < 0 or self.workers < 1:
            raise ConfigError("slack coefficient must be >= 0 and workers >= 1")
        return self

    def coefficient_settings(self) -> list:
        out = []
        if "identity" in self.kinds:
            out.append(("identity", 1.0, 1.0))
        for kind in self.kinds:
            if kind == "identity":
                continue
            for lam, Lam in self.ellipticity:
                if Lam > lam:
                    out.append((kind, float(lam), float(Lam)))
        return out


@dataclass
class SuiteReport:
    config: dict
    reports: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    oscillation: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def overall_pass(self) -> bool:
        return all(r.ok for r in self.reports if not r.skipped)

    def failures(self) -> list:
        return [r for r in self.reports if not r.ok]

    def to_json(self, timestamp: bool = True) -> dict:
        out = {
            "version": __version__,
            "config": self.config,
            "environment": self.environment,
            "constants": self.constants,
            "oscillation_ledger": self.oscillation,
            "sections": self.sections,
            "overall_pass": self.overall_pass,
            "reports": [r.to_json() for r in self.reports],
        }
        if timestamp:
            out[VOLATILE] = {"generated_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "timings_s": self.timings}
        return jsonable(out)

    def dumps(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_json(timestamp), indent=2, sort_keys=True)


def strip_volatile(doc: dict) -> dict:
    """Report without timestamps and timings, for run-to-run comparison."""
    return {k: v for k, v in doc.items() if k != VOLATILE}


def _guard(lemma_id: str, fn, *args, **kw) -> list:
    """Run one check; an exception becomes a failed report instead of aborting the suite."""
    try:
        out = fn(*args, **kw)
    except Exception as exc:  # noqa: BLE001 - every error is reported, none swallowed
        log.warning("%s failed: %s", lemma_id, exc)
        return [LemmaReport(lemma_id, math.nan, math.nan, passed=False, notes=[f"error: {type(exc).__name__}: {exc}"])]
    return out if isinstance(out, list) else [out]


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# solver -------------------------------------------------------------------------
def _exp_cos(x):
    return np.exp(x[0]) * np.cos(x[1])


CONVERGENCE_DATA = {"x1": BOUNDARY_DATA["x1"], "x1x2": BOUNDARY_DATA["x1x2"], "expcos": _exp_cos}


def convergence_check(n: int, h: float, name: str, window=(2.8, 5.2)) -> LemmaReport:
    """Max-norm error ratio between 2h and h for a harmonic exact solution, a = I."""
    f = CONVERGENCE_DATA[name]
    errs = []
    for hh in (2 * h, h):
        dom = BallDomain(n, 1.0, hh)
        u = solve(WeakProblem(make_coefficients("identity", dom), f))
        exact = f(dom.coords())[dom.mask]
        errs.append(float(np.abs(u.values - exact).max()))
    ratio = errs[0] / errs[1] if errs[1] > 0 else math.inf
    rep = LemmaReport(f"elliptic.convergence.{name}", ratio, window[1], "window", window[1], 1.0,
                      {"n": n, "h": h, "coarse_h": 2 * h}, passed=window[0] <= ratio <= window[1])
    rep.details.update({"errors": errs, "window": list(window)})
    if max(errs) < 1e-8:
        rep.notes.append("exact data is reproduced by the bilinear space; ratio of round-off errors")
    return rep


def solver_section(cfg: RunConfig) -> list:
    names = ["x1", "x1x2", "expcos"]
    return [r for name in names for r in _guard(f"elliptic.convergence.{name}", convergence_check, cfg.n, cfg.h, name)]


# constants ----------------------------------------------------------------------
@dataclass
class SobolevRecord:
    S: float
    provenance: str
    report: LemmaReport | None = None


def sobolev_section(cfg: RunConfig) -> SobolevRecord:
    """S from the config override, else the numerical estimate with a refinement check."""
    if cfg.sobolev_s is not None:
        return SobolevRecord(cfg.sobolev_s, "user")
    p = default_exponent(cfg.n)
    fine = estimate_sobolev_constant(BallDomain(cfg.n, 1.0, cfg.h), p)
    finer = estimate_sobolev_constant(BallDomain(cfg.n, 1.0, cfg.h / 2), p)
    drift = abs(fine.S - finer.S) / fine.S
    rep = LemmaReport("energy.sobolev_constant", drift, 0.05, "rel. drift", 0.05, 1.0,
                      {"n": cfg.n, "h": cfg.h, "p": p}, passed=drift < 0.05)
    rep.details.update({"S": fine.S, "S_refined": finer.S, "start": fine.best_start, "iterations": fine.iterations})
    if cfg.n == 2:
        cone = fine.family.get("cone")
        rep.subchecks.append(LemmaReport("energy.sobolev_cone", 0.38, cone, "cone", cone_quotient_exact(2, p), 1.0,
                                         {"n": 2, "h": cfg.h}, details={"analytic": cone_quotient_exact(2, p)}))
    return SobolevRecord(fine.S, fine.provenance(), rep)


def ledgers(cfg: RunConfig, S: float, provenance: str) -> dict:
    out = {}
    for _, lam, Lam in cfg.coefficient_settings():
        key = f"{lam:g},{Lam:g}"
        if key in out:
            continue
        L = ConstantsLedger(lam, Lam, cfg.n, S, S_provenance=provenance)
        out[key] = (L, OscillationLedger(L, lambda_constant_A(L)))
    return out


def ledger_for(table: dict, coef):
    return table[f"{coef.lam:g},{coef.Lam:g}"]


# corpus-driven checks -------------------------------------------------------------
def build_corpus(cfg: RunConfig):
    dom = BallDomain(cfg.n, 1.0, cfg.h)
    cc = CorpusConfig(dom, cfg.coefficient_settings(), list(cfg.boundaries), list(cfg.shifts), cfg.seed)
    members, rejected = subsolution_corpus(cc)
    rep = LemmaReport("harness.corpus", float(len(rejected)), 0.0, "rejected", 0.0, 1.0,
                      {"n": cfg.n, "h": cfg.h, "seed": cfg.seed}, passed=not rejected and len(members) > 0)
    rep.details.update({"members": [m.manifest() for m in members], "rejected": rejected, "count": len(members)})
    return members, rep


def energy_checks(members, table, cfg: RunConfig) -> list:
    def one(m):
        L, _ = ledger_for(table, m.coef)
        if not m.nonnegative:
            return []
        kw = dict(coef=m.coef, slack_coeff=cfg.slack_coeff, field_id=m.id, coef_id=m.coef.kind)
        return (_guard("energy.a", caccioppoli_check, m.u, L, **kw)
                + _guard("energy.d", sobolev_gain_check, m.u, L, **kw))

    return [r for rs in _map(one, members, cfg.workers) for r in rs]


def degiorgi_checks(members, table, cfg: RunConfig) -> list:
    def one(m):
        L, _ = ledger_for(table, m.coef)
        kw = dict(coef=m.coef, slack_coeff=cfg.slack_coeff, field_id=m.id, coef_id=m.coef.kind)
        out = []
        if m.mode == "solution":
            out += _guard("degiorgi.maxbound.abs", local_max_bound, m.u, 1.0, L, "solution", **kw)
        if not m.nonnegative:
            return out
        for r in (1.0, 0.5):
            if r / 2 < 8 * cfg.h:
                out.append(skipped("degiorgi.lambda", f"radius {r / 2:g} below resolution h={cfg.h:g}", radius=r, h=cfg.h))
                continue
            out += _guard("degiorgi.lambda", lambda: lambda_step(m.u, r, L, **kw).report)
        out += _guard("degiorgi.point", lambda: iterate_to_point(m.u, L, **kw)[1])
        out += _guard("degiorgi.maxbound", local_max_bound, m.u, 1.0, L, "subsolution", **kw)
        return out

    return [r for rs in _map(one, members, cfg.workers) for r in rs]


# shadow campaign ----------------------------------------------------------------
def random_blobs(dom: BallDomain, rng: np.random.Generator, count: int = 6, rmin: float = 0.03, rmax: float = 0.15,
                 spread: float = 0.7, exclude=None) -> CellSet:
    """Union of ``count`` random balls, rasterized to cells (minus ``exclude``)."""
    x = dom.coords()
    cells = np.zeros(dom.shape, bool)
    for _ in range(count):
        c = rng.uniform(-spread, spread, dom.n)
        r = rng.uniform(rmin, rmax)
        cells |= np.sum((x - c.reshape((-1,) + (1,) * dom.n)) ** 2, axis=0) < r * r
    cells &= dom.mask
    if exclude is not None:
        cells &= ~exclude.cells
    return CellSet(dom, cells)


def _random_grid_point(dom: BallDomain, rng, avoid=None, radius=0.9):
    idx = dom.cell_indices(dom.sub(radius).mask_on(dom) & (~avoid.cells if avoid is not None else True))
    i = idx[rng.integers(len(idx))]
    return np.array(dom.center) + dom.h * i


def shadow_campaign(cfg: RunConfig, l2_pairs: int = 20, shooting_pairs: int = 10, oracle_cases: int = 10) -> list:
    dom = BallDomain(cfg.n, 1.0, cfg.h)
    D = default_directions(cfg.n, cfg.seed, cfg.directions)
    rng = np.random.default_rng(cfg.seed)
    out = []
    for i in range(l2_pairs):
        E = random_blobs(dom, rng)
        x = _random_grid_point(dom, rng)
        rep = _guard("shadow.l2", verify_l2, E, x, D)
        rep[0].inputs["case"] = i
        out += rep
    for i in range(shooting_pairs):
        E1 = random_blobs(dom, rng)
        E2 = random_blobs(dom, rng, exclude=E1)
        rep = _guard("shadow.shooting", lambda: find_shooting_direction(E1, E2, D, slack_coeff=cfg.slack_coeff).report)
        rep[0].inputs["case"] = i
        out += rep
    if cfg.n == 2:
        for i in range(oracle_cases):
            E = random_blobs(dom, rng)
            x = _random_grid_point(dom, rng, avoid=E)
            out += _guard("shadow.oracle", oracle_check, E, x, D, i)
    return out


def oracle_check(E: CellSet, x, D: DirectionSample, case: int = 0, sigmas: float = 3.0) -> LemmaReport:
    """Sampled |Sigma(E, x)| against the exact angular union, within ``sigmas`` standard errors."""
    val, se = direction_set_measure(E, x, D, with_error=True)
    exact = angular_union_measure(E, x)
    z = (val - exact) / se
    rep = LemmaReport("shadow.oracle", abs(val - exact), sigmas * se, "sigmas", sigmas, 1.0,
                      {"h": E.domain.h, "n": 2, "M": D.M, "seed": D.seed, "case": case})
    rep.details.update({"sampled": val, "exact": exact, "se": se, "z": z, "x": list(map(float, x))})
    return rep


def trees_scaling(eps: float, deltas, D: DirectionSample, window=(1.7, 2.3)) -> LemmaReport:
    """Fit of log|E3| against log delta over the trees examples."""
    e3 = []
    for d in deltas:
        ex = build_trees_example(eps, d)
        e3.append(find_shooting_direction(ex.E1, ex.E2, D).E3.measure)
    slope = float(np.polyfit(np.log(deltas), np.log(e3), 1)[0]) if min(e3) > 0 else math.nan
    rep = LemmaReport("shadow.trees.scaling", slope, window[1], "exponent", 2.0, 1.0,
                      {"eps": eps, "deltas": list(deltas), "M": D.M, "seed": D.seed},
                      passed=window[0] <= slope <= window[1])
    rep.details["E3"] = e3
    return rep


def shadow_section(cfg: RunConfig, artifacts: Path | None = None) -> list:
    out = shadow_campaign(cfg)
    if cfg.n == 2:
        D = default_directions(2, cfg.seed, cfg.directions)
        ex = build_trees_example(0.125, 1.0 / 32)
        out += _guard("shadow.trees", trees_report, ex, D)
        out += _guard("shadow.trees.scaling", trees_scaling, 0.125, [1.0 / 32, 1.0 / 64], D)
        if artifacts is not None:
            dump_cellset(ex.E1, artifacts / "trees_E1")
            dump_cellset(ex.E2, artifacts / "trees_E2")
    return out


# oscillation --------------------------------------------------------------------
OSC_BOUNDARIES = ("x1", "bump", "wave", "ramp")


def oscillation_section(cfg: RunConfig, table: dict, artifacts: Path | None = None) -> list:
    dom = BallDomain(cfg.n, 2.0, cfg.h)
    D = default_directions(cfg.n, cfg.seed, 180 if cfg.n == 2 else 512)
    out = []
    for ci, (kind, lam, Lam) in enumerate(cfg.coefficient_settings()):
        coef = make_coefficients(kind, dom, lam, Lam, seed=cfg.seed + ci)
        L, OL = ledger_for(table, coef)
        for b in OSC_BOUNDARIES:
            fid = f"{kind}-{Lam / lam:g}-{b}-B2"
            try:
                u = solve(WeakProblem(coef, boundary_function(b)))
            except Exception as exc:  # noqa: BLE001
                out.append(LemmaReport("oscillation.decay", math.nan, math.nan, passed=False, notes=[f"error: {exc}"]))
                continue
            for r in _guard("oscillation.decay", oscillation_decay_check, u, L, OL, coef, 3, D, cfg.slack_coeff):
                r.inputs.update(field_id=fid, coef_id=kind)
                out.append(r)
            if kind == "checkerboard" and Lam / lam == max(p[1] / p[0] for p in cfg.ellipticity):
                for r in _guard("oscillation.holder", lambda: holder_exponent(u, OL)[1]):
                    r.inputs.update(field_id=fid)
                    out.append(r)
                if artifacts is not None:
                    dump_field(u, artifacts / fid, fid)
                    dump_coefficients(coef, artifacts / f"coef-{kind}-{Lam / lam:g}")
    L, OL = next(iter(table.values()))
    lin = ScalarField.from_function(dom, lambda x: x[0])
    for r in _guard("oscillation.holder", lambda: holder_exponent(lin, OL)[1]):
        r.inputs.update(field_id="x1")
        r.details["target"] = 1.0
        out.append(r)
    return out


# suite --------------------------------------------------------------------------
def run_suite(cfg: RunConfig, sections=None, write: bool = True) -> SuiteReport:
    """Run the requested sections in pipeline order and aggregate one SuiteReport."""
    cfg.validate()
    wanted = list(SECTIONS) if sections is None else [s for s in SECTIONS if s in set(sections)]
    if {"energy", "degiorgi"} & set(wanted) and "corpus" not in wanted:
        wanted.insert(wanted.index("energy" if "energy" in wanted else "degiorgi"), "corpus")
    out_dir = Path(cfg.out) if (write and cfg.out) else None
    artifacts = None
    if out_dir is not None:
        artifacts = out_dir / "artifacts"
        artifacts.mkdir(parents=True, exist_ok=True)
    suite = SuiteReport(jsonable(cfg.to_dict()), environment={"n": cfg.n, "h": cfg.h, "seed": cfg.seed,
                                                               "directions": cfg.directions, "workers": cfg.workers})
    t0 = time.perf_counter()
    table = {}
    if {"corpus", "oscillation"} & set(wanted):
        t = time.perf_counter()
        sob = sobolev_section(cfg)
        if sob.report is not None:
            suite.reports.append(sob.report)
        table = ledgers(cfg, sob.S, sob.provenance)
        suite.constants = {k: L.snapshot() for k, (L, _) in table.items()}
        suite.constants.update({f"A[{k}]": OL.A for k, (_, OL) in table.items()})
        suite.oscillation = {k: OL.snapshot() for k, (_, OL) in table.items()}
        suite.timings["constants"] = time.perf_counter() - t
    members = []
    for sec in wanted:
        t = time.perf_counter()
        if sec == "solver":
            reps = solver_section(cfg)
        elif sec == "corpus":
            members, crep = build_corpus(cfg)
            reps = [crep]
            if out_dir is not None:
                (out_dir / "corpus_manifest.json").write_text(json.dumps(jsonable(crep.details), indent=2, sort_keys=True))
        elif sec == "energy":
            reps = energy_checks(members, table, cfg)
        elif sec == "degiorgi":
            reps = degiorgi_checks(members, table, cfg)
        elif sec == "shadow":
            reps = shadow_section(cfg, artifacts)
        else:
            reps = oscillation_section(cfg, table, artifacts)
        suite.reports += reps
        suite.sections[sec] = {"checks": len(reps), "failed": sum(not r.ok for r in reps),
                               "pass": all(r.ok for r in reps if not r.skipped)}
        suite.timings[sec] = time.perf_counter() - t
        if out_dir is not None:
            (out_dir / f"{sec}.json").write_text(json.dumps([r.to_json() for r in reps], indent=2, sort_keys=True))
        log.info("section %s: %d checks, %d failed (%.1fs)", sec, len(reps), suite.sections[sec]["failed"], suite.timings[sec])
    suite.timings["total"] = time.perf_counter() - t0
    if out_dir is not None:
        (out_dir / "suite_report.json").write_text(suite.dumps())
    return suite
