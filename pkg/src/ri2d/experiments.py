"""Experiment registry: typed parameters, per-replica runs and aggregates.

Every experiment is a pair of pure functions.  ``replica(params, r, stream)``
returns one row; ``aggregate(params, rows)`` reduces rows sorted by replica
index.  Replica r always draws from ``RngStream(seed, (r,))``, so rows do not
depend on scheduling or on how many workers ran them.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import stats as sps

from . import couplings, excursions, interlacements, slt, stats
from .lattice import Disk, ball_sites
from .potential import conditional_harmonic_measure, harmonic_measure
from .walks import RngStream, TruncationError

EXPERIMENTS = ("poisson-tv", "hm-close", "capacity-scan", "torus-excursions", "iid-noncover",
               "slt-marginal", "slt-dominance", "ri-vacant", "xi-law", "lemma2",
               "n-distribution")


class ValidationError(ValueError):
    """Configuration problems; ``errors`` lists every offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- parameter schema -------------------------------------------------------

@dataclass(frozen=True)
class Param:
    kind: str  # int, float, str, ints, floats, float?
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    domain: str = ""


def _pos(v):
    return v > 0


def _gt1(v):
    return v > 1


def _all_pos(v):
    return len(v) > 0 and all(x > 0 for x in v)


_REPLICAS = Param("int", 1, _pos, "> 0")
_GAMMA = Param("float", math.e, _gt1, "> 1")
_BETA = Param("float", 1.0, _pos, "> 0")
_ALPHA = Param("float", 1.0, _pos, "> 0")
FIXTURES = {
    "B2": lambda: ball_sites(Disk((0, 0), 2)),
    "B5": lambda: ball_sites(Disk((0, 0), 5)),
    "pair10": lambda: np.array([[0, 0], [10, 0]], dtype=np.int64),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "poisson-tv": {
        "lambdas": Param("floats", [1.0, 4.0, 100.0, 1e4], _all_pos, "nonempty, > 0"),
        "h_factors": Param("floats", [0.1, 1.0, 2.0], _all_pos, "nonempty, > 0"),
    },
    "hm-close": {
        "ns": Param("ints", [8, 16, 32], lambda v: len(v) > 0 and min(v) >= 2, "each >= 2"),
        "gamma": _GAMMA,
    },
    "capacity-scan": {
        "s": Param("floats", [200.0, 400.0, 800.0], lambda v: len(v) > 0 and min(v) > 16,
                   "each > 16"),
    },
    "torus-excursions": {
        "n": Param("int", 32, lambda v: v >= 8, ">= 8"),
        "gamma": _GAMMA, "beta": _BETA, "replicas": Param("int", 50, _pos, "> 0"),
    },
    "iid-noncover": {
        "n": Param("int", 64, lambda v: v >= 4, ">= 4"),
        "gamma": _GAMMA, "beta": _BETA, "replicas": Param("int", 200, _pos, "> 0"),
    },
    "slt-marginal": {
        "n": Param("int", 16, lambda v: v >= 2, ">= 2"),
        "samples": Param("int", 10_000, _pos, "> 0"),
        "replicas": _REPLICAS,
    },
    "slt-dominance": {
        "n": Param("int", 32, lambda v: v >= 8, ">= 8"),
        "gamma": _GAMMA, "beta": _BETA, "replicas": Param("int", 200, _pos, "> 0"),
    },
    "ri-vacant": {
        "s": Param("float", 128.0, lambda v: v > 16, "> 16"),
        "alpha": _ALPHA, "replicas": Param("int", 200, _pos, "> 0"),
        "R_kill": Param("float?", None, _pos, "> 0 or null (e * radius + 2)"),
    },
    "xi-law": {
        "K": Param("str", "B2", lambda v: v in FIXTURES, f"one of {sorted(FIXTURES)}"),
        "alpha": _ALPHA, "replicas": Param("int", 2000, _pos, "> 0"),
        "thin_alphas": Param("floats", [0.5, 0.25], _all_pos, "nonempty, > 0"),
        "R_kill": Param("float?", None, _pos, "> 0 or null"),
    },
    "lemma2": {
        "n": Param("int", 32, lambda v: v >= 8, ">= 8"),
        "K": Param("str", "B2", lambda v: v in FIXTURES, f"one of {sorted(FIXTURES)}"),
        "alpha": _ALPHA,
        "epsilon": Param("float", 0.2, lambda v: 0 < v < 1, "in (0, 1)"),
        "m0": Param("int", 8, lambda v: v >= 0, ">= 0"),
        "gamma0": Param("float?", None, _pos, "> 0 or null (unbounded)"),
        "replicas": Param("int", 1000, _pos, "> 0"),
    },
    "n-distribution": {
        "log_s": Param("float", 100.0, lambda v: v > 1, "> 1"),
        "samples": Param("int", 100_000, lambda v: v >= 1000, ">= 1000"),
        "mode": Param("str", "asymptotic", lambda v: v in stats.MODES, f"one of {stats.MODES}"),
        "replicas": _REPLICAS,
    },
}

COMMON = {"max_truncation": Param("float", 0.01, lambda v: 0 <= v <= 1, "in [0, 1]")}


def _coerce(kind: str, v):
    if kind == "float?" and v is None:
        return None
    if kind in ("ints", "floats"):
        if isinstance(v, str):
            v = [x for x in v.replace(",", " ").split()]
        if not isinstance(v, (list, tuple)):
            raise TypeError("expected a list")
        f = int if kind == "ints" else float
        out = []
        for x in v:
            if f is int and float(x) != int(float(x)):
                raise TypeError(f"{x!r} is not an integer")
            out.append(f(float(x)) if f is int else f(x))
        return out
    if kind == "int":
        if isinstance(v, bool) or float(v) != int(float(v)):
            raise TypeError(f"{v!r} is not an integer")
        return int(float(v))
    if kind in ("float", "float?"):
        if isinstance(v, bool):
            raise TypeError("booleans are not numbers")
        x = float(v)
        if math.isnan(x):
            raise TypeError("NaN")
        return x
    if kind == "str":
        return str(v)
    raise AssertionError(kind)


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int | None
    params: dict = field(default_factory=dict)
    out: str | None = None

    def validated(self) -> "ExperimentConfig":
        """Typed copy with defaults filled in; raises ValidationError."""
        errs = []
        if self.experiment not in SCHEMAS:
            raise ValidationError([f"experiment: unknown id {self.experiment!r}; "
                                   f"choose from {', '.join(EXPERIMENTS)}"])
        if self.seed is None:
            errs.append("seed: missing (a seed is mandatory)")
        elif isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) \
                or not 0 <= int(self.seed) < 2**64:
            errs.append(f"seed: {self.seed!r} is not an unsigned 64-bit integer")
        schema = {**SCHEMAS[self.experiment], **COMMON}
        out = {}
        for k in self.params:
            if k not in schema:
                errs.append(f"{k}: not a parameter of {self.experiment} "
                            f"(known: {', '.join(sorted(schema))})")
        for k, p in schema.items():
            raw = self.params.get(k, p.default)
            try:
                v = _coerce(p.kind, raw)
            except (TypeError, ValueError) as e:
                errs.append(f"{k}: {raw!r} has the wrong type ({p.kind}): {e}")
                continue
            if v is not None and not p.check(v):
                errs.append(f"{k}: {v!r} outside the domain ({p.domain})")
            out[k] = v
        if errs:
            raise ValidationError(errs)
        return ExperimentConfig(self.experiment, int(self.seed), out, self.out)


# -- records ------------------------------------------------------------------

@dataclass
class ResultRecord:
    experiment: str
    seed: int
    params: dict
    rows: list
    aggregate: dict
    wall_clock: float = 0.0
    build_id: str = ""
    truncated: list = field(default_factory=list)
    partial: bool = False

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "params": self.params,
                "rows": self.rows, "aggregate": self.aggregate, "wall_clock": self.wall_clock,
                "build_id": self.build_id, "truncated": self.truncated, "partial": self.partial}

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        return cls(**d)

    @property
    def truncation_fraction(self) -> float:
        total = len(self.rows) + len(self.truncated)
        return len(self.truncated) / total if total else 0.0


def build_id() -> str:
    """Content hash of the package sources, in the style of a git object id."""
    h = hashlib.sha1()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        data = p.read_bytes()
        h.update(f"blob {len(data)}\0".encode() + data)
    return h.hexdigest()[:12]


def _wilson(k, n, level=0.99):
    if n == 0:
        return {"estimate": None, "ci_low": None, "ci_high": None, "trials": 0}
    lo, hi = stats.wilson_ci(k, n, level)
    return {"estimate": k / n, "ci_low": lo, "ci_high": hi, "trials": n}


def _mean_ci(x, level=0.99):
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return {"mean": None, "ci_low": None, "ci_high": None, "n": 0}
    m = float(x.mean())
    if len(x) < 2:
        return {"mean": m, "ci_low": m, "ci_high": m, "n": 1}
    h = float(sps.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))
    return {"mean": m, "ci_low": m - h, "ci_high": m + h, "n": len(x)}


def _strictly_decreasing(v):
    return bool(all(b < a for a, b in zip(v, v[1:])))


# -- experiments ------------------------------------------------------------

def _tv_grid(p):
    return [(lam, hf) for lam in p["lambdas"] for hf in p["h_factors"]]


def _poisson_tv_rows(p, r, stream):
    lam, hf = _tv_grid(p)[r]
    h = hf * math.sqrt(lam)
    tv = couplings.poisson_tv(lam, lam + h)
    bound = couplings.tv_bound(lam, h)
    stv = couplings.poisson_shift_tv(lam)
    return {"lambda": lam, "h": h, "tv": tv, "bound": bound, "margin": bound - tv,
            "shift_tv": stv, "shift_bound": 1 / (2 * math.sqrt(lam)),
            "holds": bool(tv <= bound and stv <= 1 / (2 * math.sqrt(lam)))}


def _poisson_tv_agg(p, rows):
    return {"all_hold": all(r["holds"] for r in rows),
            "min_margin": min((r["margin"] for r in rows), default=None)}


def _hm_close_rows(p, r, stream):
    n = p["ns"][r]
    B = ball_sites(Disk((0, 0), n))
    a = harmonic_measure(B)
    b = conditional_harmonic_measure(B, ball_sites(Disk((0, 0), p["gamma"] * n)))
    dev = float(np.max(np.abs(b.on(a.support) / a.weights - 1)))
    return {"n": n, "max_deviation": dev, "bound_5_over_n": 5 / n}


def _hm_close_agg(p, rows):
    d = [r["max_deviation"] for r in rows]
    return {"strictly_decreasing": _strictly_decreasing(d),
            "last_within_5_over_n": bool(rows and d[-1] <= 5 / rows[-1]["n"])}


def _capacity_rows(p, r, stream):
    s = p["s"][r]
    c = stats.target_capacity(s)
    return {"s": s, "radius": s / math.log(s) ** 2, "capacity": c,
            "ratio": c * math.pi / (2 * math.log(s))}


def _capacity_agg(p, rows):
    d = [abs(r["ratio"] - 1) for r in rows]
    return {"in_band": all(0.7 <= r["ratio"] <= 1.3 for r in rows),
            "toward_one": bool(all(b <= a for a, b in zip(d, d[1:])))}


def _torus_rows(p, r, stream):
    n, g = p["n"], p["gamma"]
    run = excursions.torus_excursion_experiment(n, g, p["beta"], stream.generator())
    pred = 2 * math.log(n) ** 2 / math.log(g)
    return {"m": run.m, "horizon": run.horizon, "count": run.count,
            "ratio": run.count / pred, "covered": run.coverage.complete,
            "uncovered": run.coverage.uncovered_count}


def _torus_agg(p, rows):
    return {"ratio": _mean_ci([r["ratio"] for r in rows]),
            "covered": _wilson(sum(r["covered"] for r in rows), len(rows))}


@lru_cache(maxsize=8)
def _hm_ball(n):
    return harmonic_measure(ball_sites(Disk((0, 0), n)))


def _noncover_rows(p, r, stream):
    n, g = p["n"], p["gamma"]
    k = math.ceil(excursions.psi(n, p["beta"], g))
    ex = excursions.sample_iid_excursions(n, g, k, _hm_ball(n), stream.generator())
    cov = excursions.coverage_report(Disk((0, 0), n), ex)
    return {"excursions": k, "uncovered": cov.uncovered_count,
            "not_covered": not cov.complete}


def _noncover_agg(p, rows):
    return {"not_covered": _wilson(sum(r["not_covered"] for r in rows), len(rows))}


def _slt_marginal_rows(p, r, stream):
    hm = _hm_ball(p["n"])
    pool = slt.PointPool(hm.support, stream)
    k = p["samples"]
    _, fld = slt.slt_generate(pool, [hm.weights] * k, k)
    counts = np.bincount([i for i, _ in fld.entries], minlength=len(hm.support))
    cone = bool(np.array_equal(fld.values, sum(fld.raises) * hm.weights))
    return {"excursions": k, "sites": len(hm.support),
            "chi2_p": stats.chi_square(counts, hm.weights), "cone_exact": cone,
            "field_total": float(fld.values.sum())}


def _slt_marginal_agg(p, rows):
    return {"min_p": min((r["chi2_p"] for r in rows), default=None),
            "cone_exact": all(r["cone_exact"] for r in rows)}


def _dominance_rows(p, r, stream):
    run = slt.torus_dominance(p["n"], p["gamma"], p["beta"], stream)
    return {"psi_iid": run.psi_iid, "psi_torus": run.psi_torus,
            "dominated": run.dominated, "dominated_ceil": run.dominated_ceil,
            "contained": run.contained}


def _dominance_agg(p, rows):
    k = len(rows)
    return {"dominated": _wilson(sum(r["dominated"] for r in rows), k),
            "dominated_ceil": _wilson(sum(r["dominated_ceil"] for r in rows), k),
            "containment_violations": sum(not r["contained"] for r in rows)}


def _vacant_rows(p, r, stream):
    s = p["s"]
    vac, bundle, _ = interlacements.vacant_set_window(
        stats.target_disk(s), p["alpha"], stream.generator(), kill_radius=p["R_kill"],
        return_bundle=True)
    return {"trajectories": bundle.xi_K, "vacant_sites": len(vac),
            "nonempty": len(vac) > 0}


def _vacant_agg(p, rows):
    s = p["s"]
    return {"nonempty": _wilson(sum(r["nonempty"] for r in rows), len(rows)),
            "psi_star": stats.psi_star(s), "ri_count_budget": stats.ri_count_budget(s)}


def _xi_rows(p, r, stream):
    K = FIXTURES[p["K"]]()
    g = stream.generator()
    b = interlacements.sample_hitting_bundle(K, p["alpha"], p["R_kill"], g, two_sided=False)
    cfg = interlacements.noodle_config(b.trajectories, K)
    recon = cfg.local_times() == interlacements.direct_local_times(b.trajectories, K)
    nested = True
    prev, prev_vac = b, {tuple(x) for x in cfg.vacant().tolist()}
    for a in sorted((a * p["alpha"] for a in p["thin_alphas"]), reverse=True):
        if a >= prev.alpha:
            continue
        t = interlacements.alpha_thinning(prev, a, g)
        ids = {id(x) for x in prev.trajectories}
        vac = {tuple(x) for x in interlacements.noodle_config(t.trajectories, K).vacant().tolist()}
        nested &= all(id(x) in ids for x in t.trajectories) and prev_vac <= vac
        prev, prev_vac = t, vac
    return {"xi": b.xi_K, "capacity": b.capacity,
            "reconstruction_exact": bool(recon), "thinning_nested": bool(nested)}


def _xi_agg(p, rows):
    if not rows:
        return {}
    lam = math.pi * p["alpha"] * rows[0]["capacity"]
    xs = [r["xi"] for r in rows]
    return {"rate": lam, "mean_xi": _mean_ci(xs),
            "chi2_p": stats.poisson_chi_square(xs, lam),
            "reconstruction_violations": sum(not r["reconstruction_exact"] for r in rows),
            "thinning_violations": sum(not r["thinning_nested"] for r in rows)}


_L2_COLUMNS = ("replica", "n", "stage", "success", "xi_K", "D_K", "m0", "gamma0", "L",
               "p_count", "p_entry", "p_reuse", "identical")


def _lemma2_rows(p, r, stream):
    g0 = p["gamma0"] if p["gamma0"] is not None else math.inf
    out = couplings.lemma2_pipeline(FIXTURES[p["K"]](), p["alpha"], p["epsilon"], p["n"],
                                    stream, thresholds=(p["m0"], g0))
    d = out.diagnostics
    row = {"n": p["n"], "stage": out.stage, "success": out.success,
           "xi_K": d.get("xi_K"), "D_K": d.get("D_K"), "m0": d["m0"],
           "gamma0": d["gamma0_eff"], "L": d["L"]}
    for k in _L2_COLUMNS[9:]:
        row[k] = d.get(k)
    return row


def _lemma2_agg(p, rows):
    k = len(rows)
    succ = [r for r in rows if r["success"]]
    fail_at = {s: sum(1 for r in rows if not r["success"] and r["stage"] == s)
               for s in couplings.STAGES}
    return {"failure": _wilson(k - len(succ), k), "successes": len(succ),
            "failures_by_stage": fail_at,
            "identical_violations": sum(not r["identical"] for r in succ)}


_Z_GRID = tuple(np.round(np.arange(-3.0, 3.01, 0.5), 2).tolist())


def _ndist_rows(p, r, stream):
    spec = stats._spec(p["log_s"], p["mode"])
    x = stats.sample_N(spec, stream.generator(), p["samples"])
    z = (x - spec.center) / spec.scale
    thr = 2 * p["log_s"] ** 2 - p["log_s"] ** 1.5
    row = {"samples": len(x), "mean": float(x.mean()), "var": float(x.var()),
           "ks": stats.ks_distance(z, sps.norm.cdf),
           "p_down": float(np.mean(x <= thr))}
    for zz in _Z_GRID:
        row[f"F({zz:+.1f})"] = float(np.mean(z <= zz))
    return row


def _ndist_agg(p, rows):
    w = np.array([r["samples"] for r in rows], dtype=float)
    tot = w.sum()
    pooled = {k: float(sum(r[k] * r["samples"] for r in rows) / tot)
              for k in ["p_down"] + [f"F({z:+.1f})" for z in _Z_GRID]} if rows else {}
    hits = int(round(pooled.get("p_down", 0) * tot))
    return {"ks_mean": float(np.mean([r["ks"] for r in rows])) if rows else None,
            "p_down": _wilson(hits, int(tot)) if rows else {},
            "cdf": pooled, "normal_prediction": float(sps.norm.cdf(-0.5))}


def _ndist_series(p, rows, agg):
    z = list(_Z_GRID)
    return {"cdf": (z, [agg["cdf"][f"F({v:+.1f})"] for v in z])} if rows else {}


@dataclass(frozen=True)
class Experiment:
    replica: Callable
    aggregate: Callable
    count: Callable[[dict], int]
    series: Callable | None = None
    columns: tuple = ()


def _reps(p):
    return p["replicas"]


_COLS = {
    "poisson-tv": "lambda h tv bound margin shift_tv shift_bound holds",
    "hm-close": "n max_deviation bound_5_over_n",
    "capacity-scan": "s radius capacity ratio",
    "torus-excursions": "m horizon count ratio covered uncovered",
    "iid-noncover": "excursions uncovered not_covered",
    "slt-marginal": "excursions sites chi2_p cone_exact field_total",
    "slt-dominance": "psi_iid psi_torus dominated dominated_ceil contained",
    "ri-vacant": "trajectories vacant_sites nonempty",
    "xi-law": "xi capacity reconstruction_exact thinning_nested",
    "lemma2": " ".join(_L2_COLUMNS[1:]),
    "n-distribution": "samples mean var ks p_down " + " ".join(f"F({z:+.1f})" for z in _Z_GRID),
}


def _series_of(key_x, key_y, name):
    return lambda p, rows, a: {name: ([r[key_x] for r in rows], [r[key_y] for r in rows])}


_PARTS = {
    "poisson-tv": (_poisson_tv_rows, _poisson_tv_agg, lambda p: len(_tv_grid(p)), None),
    "hm-close": (_hm_close_rows, _hm_close_agg, lambda p: len(p["ns"]),
                 _series_of("n", "max_deviation", "deviation")),
    "capacity-scan": (_capacity_rows, _capacity_agg, lambda p: len(p["s"]),
                      _series_of("s", "ratio", "ratio")),
    "torus-excursions": (_torus_rows, _torus_agg, _reps, None),
    "iid-noncover": (_noncover_rows, _noncover_agg, _reps, None),
    "slt-marginal": (_slt_marginal_rows, _slt_marginal_agg, _reps, None),
    "slt-dominance": (_dominance_rows, _dominance_agg, _reps, None),
    "ri-vacant": (_vacant_rows, _vacant_agg, _reps, None),
    "xi-law": (_xi_rows, _xi_agg, _reps, None),
    "lemma2": (_lemma2_rows, _lemma2_agg, _reps, None),
    "n-distribution": (_ndist_rows, _ndist_agg, _reps, _ndist_series),
}
REGISTRY: dict[str, Experiment] = {
    k: Experiment(*v, columns=("replica", *_COLS[k].split())) for k, v in _PARTS.items()}


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def _one(exp_id: str, params: dict, seed: int, r: int):
    try:
        row = REGISTRY[exp_id].replica(params, r, RngStream(seed, (r,)))
        return r, {"replica": r, **{k: _plain(v) for k, v in row.items()}}, None
    except TruncationError as e:
        return r, None, str(e)


def aggregate(exp_id: str, params: dict, rows: list) -> dict:
    rows = sorted(rows, key=lambda x: x["replica"])
    return REGISTRY[exp_id].aggregate(params, rows)


def series(record: ResultRecord) -> dict:
    f = REGISTRY[record.experiment].series
    return f(record.params, record.rows, record.aggregate) if f else {}


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   replicas: range | None = None) -> ResultRecord:
    """Run every replica of ``config`` and reduce.

    ``replicas`` restricts the run to a batch of replica indices; batches
    can be merged with ``merge_records``.  An interrupt returns the rows
    collected so far with ``partial`` set.
    """
    cfg = config.validated()
    exp = REGISTRY[cfg.experiment]
    idx = replicas if replicas is not None else range(exp.count(cfg.params))
    t0 = time.perf_counter()
    got, trunc, partial = {}, [], False
    try:
        if workers > 1 and len(idx) > 1:
            with ProcessPoolExecutor(workers) as pool:
                futs = [pool.submit(_one, cfg.experiment, cfg.params, cfg.seed, r) for r in idx]
                for f in futs:
                    r, row, err = f.result()
                    _collect(got, trunc, r, row, err)
        else:
            for r in idx:
                _collect(got, trunc, *_one(cfg.experiment, cfg.params, cfg.seed, r))
    except KeyboardInterrupt:
        partial = True
    rows = [got[r] for r in sorted(got)]
    rec = ResultRecord(cfg.experiment, cfg.seed, cfg.params, rows,
                       aggregate(cfg.experiment, cfg.params, rows),
                       time.perf_counter() - t0, build_id(),
                       sorted(trunc, key=lambda t: t["replica"]), partial)
    return rec


def _collect(got, trunc, r, row, err):
    if err is None:
        got[r] = row
    else:
        trunc.append({"replica": r, "error": err})


def merge_records(*records: ResultRecord) -> ResultRecord:
    """Union of replica batches of one configuration; order does not matter."""
    if not records:
        raise ValueError("nothing to merge")
    a = records[0]
    for b in records[1:]:
        if (b.experiment, b.seed, b.params) != (a.experiment, a.seed, a.params):
            raise ValueError("records come from different configurations")
    rows = {r["replica"]: r for rec in records for r in rec.rows}
    rows = [rows[k] for k in sorted(rows)]
    trunc = sorted((t for rec in records for t in rec.truncated), key=lambda t: t["replica"])
    return ResultRecord(a.experiment, a.seed, a.params, rows,
                        aggregate(a.experiment, a.params, rows),
                        sum(r.wall_clock for r in records), a.build_id, trunc,
                        any(r.partial for r in records))
