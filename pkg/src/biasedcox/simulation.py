"""Biased-sampling data generator and the Monte Carlo study runner."""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .cox import SolverConfig
from .data import Dataset
from .errors import AcceptanceStall, BiasedCoxError, CalibrationFailure
from .rng import stream
from .truncation import Exponential, TruncationModel, from_dict

HAZARDS = ("h1", "h2", "h3")


def invert_cumulative_hazard(hazard: str, e, lp):
    """Survival time with cumulative hazard ``H0(t) exp(lp) = e``.

    h1: H0 = 2t, h2: H0 = t^2, h3: H0 = t^3.
    """
    x = np.asarray(e) / np.exp(lp)
    if hazard == "h1":
        return x / 2.0
    if hazard == "h2":
        return np.sqrt(x)
    if hazard == "h3":
        return np.cbrt(x)
    raise ValueError(f"unknown hazard {hazard!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    hazard: str = "h1"
    beta_true: tuple = (0.5, 1.0)
    n: int = 200
    censoring_target: float = 0.0
    n_replicates: int = 1000
    seed: int = 0
    L: int = 10
    truncation: dict = field(default_factory=lambda: {"family": "exponential", "rate": 1.0})
    theta_c: float | None = None
    onset: str = "direct"
    recruitment: float = 10.0
    kernel: str = "density"
    variance: str = "derived"
    calibration_seed: int = 20240
    batch: int = 4096

    def __post_init__(self):
        if self.hazard not in HAZARDS:
            raise ValueError(f"hazard must be one of {HAZARDS}")
        if not 0.0 <= self.censoring_target <= 0.9:
            raise ValueError("censoring_target must lie in [0, 0.9]")
        if self.n < 20:
            raise ValueError("n must be >= 20")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if self.onset not in ("direct", "calendar"):
            raise ValueError("onset must be 'direct' or 'calendar'")

    @property
    def truncation_model(self) -> TruncationModel:
        return from_dict(self.truncation)

    def with_theta(self) -> "ScenarioSpec":
        """Copy with ``theta_c`` filled in by calibration when needed."""
        if self.theta_c is not None:
            return self
        return replace(self, theta_c=calibrate_censoring(self, self.censoring_target))


def _population(spec: ScenarioSpec, rng: np.random.Generator, size: int):
    """Draw ``size`` population subjects: covariates, truncation time, failure time."""
    z1 = rng.standard_normal(size)
    z2 = (rng.random(size) < 0.5).astype(float)
    if spec.onset == "direct":
        a = spec.truncation_model.sample(rng, size)
    else:
        # onset W ~ Exp(1) truncated to [0, nu]; truncation time is nu - W
        nu = spec.recruitment
        w = -np.log1p(-rng.random(size) * -np.expm1(-nu))
        a = nu - w
    e = -np.log1p(-rng.random(size))
    z = np.column_stack((z1, z2))
    t = invert_cumulative_hazard(spec.hazard, e, z @ np.asarray(spec.beta_true, dtype=float))
    return z, a, t


def draw_biased_sample(rng, n, population, theta_c, batch=4096, stall_window=10**6, stall_rate=1e-4):
    """Keep drawing population subjects until ``n`` satisfy ``T > A``.

    ``population(rng, size)`` returns ``(z, a, t)``. Residual censoring is
    Uniform(0, theta_c) (none when ``theta_c`` is infinite).
    Returns ``(z, a, t, c)`` for the accepted subjects in draw order.
    """
    zs, as_, ts, cs = [], [], [], []
    have = drawn = accepted_window = drawn_window = 0
    while have < n:
        z, a, t = population(rng, batch)
        c = rng.random(batch) * theta_c if math.isfinite(theta_c) else np.full(batch, np.inf)
        ok = t > a
        zs.append(z[ok])
        as_.append(a[ok])
        ts.append(t[ok])
        cs.append(c[ok])
        k = int(ok.sum())
        have += k
        drawn += batch
        accepted_window += k
        drawn_window += batch
        if drawn_window >= stall_window:
            if accepted_window / drawn_window < stall_rate:
                raise AcceptanceStall(f"acceptance rate {accepted_window / drawn_window:.2e} after {drawn} draws")
            accepted_window = drawn_window = 0
    z = np.concatenate(zs)[:n]
    return z, np.concatenate(as_)[:n], np.concatenate(ts)[:n], np.concatenate(cs)[:n]


def observe(z, a, t, c, names=None) -> Dataset:
    total = a + c
    delta = (t <= total).astype(int)
    y = np.where(delta == 1, t, total)
    return Dataset(a, y, delta, z, names, validate=False)


def generate_dataset(spec: ScenarioSpec, rng) -> tuple[Dataset, TruncationModel]:
    theta = spec.with_theta().theta_c
    z, a, t, c = draw_biased_sample(rng, spec.n, lambda r, k: _population(spec, r, k), theta, spec.batch)
    return observe(z, a, t, c), spec.truncation_model


def _censoring_rate(v, u, theta):
    return float(np.mean(u * theta < v))


@lru_cache(maxsize=None)
def _calibrate(spec_key: str, target: float, probe_size: int, tol: float) -> float:
    spec = ScenarioSpec(**json.loads(spec_key))
    rng = stream(spec.calibration_seed, HAZARDS.index(spec.hazard), int(round(target * 1000)))
    _, a, t, _ = draw_biased_sample(rng, probe_size, lambda r, k: _population(spec, r, k), math.inf, 65536)
    v = t - a
    u = rng.random(probe_size)
    lo, hi = 0.0, float(np.max(v)) + 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _censoring_rate(v, u, mid) > target:
            lo = mid
        else:
            hi = mid
    theta = hi
    if abs(_censoring_rate(v, u, theta) - target) >= tol:
        raise CalibrationFailure(f"could not reach censoring rate {target} (got {_censoring_rate(v, u, theta):.4f})")
    return theta


def calibrate_censoring(spec: ScenarioSpec, target_rate: float, probe_size: int = 100_000, tol: float = 0.005) -> float:
    """Upper bound ``theta_c`` of the Uniform residual censoring giving ``target_rate``.

    Bisection over a fixed probe of accepted subjects with common random
    numbers, so the achieved rate is monotone in ``theta_c``. Cached per
    scenario and target.
    """
    if target_rate == 0:
        return math.inf
    if not 0 < target_rate <= 0.9:
        raise ValueError("target_rate must lie in (0, 0.9]")
    key = {k: v for k, v in asdict(spec).items() if k in ("hazard", "beta_true", "truncation", "onset", "recruitment", "calibration_seed")}
    key["beta_true"] = list(key["beta_true"])
    return _calibrate(json.dumps(key, sort_keys=True), float(target_rate), probe_size, tol)


METHODS = ("ppl", "wee", "pl")


def run_replicate(spec: ScenarioSpec, r: int) -> dict:
    """Generate replicate ``r`` and fit all three estimators; never raises on fit failure."""
    from .estimators import fit_ppl, fit_reference_pl, fit_wee
    from .weights import CensoringWeights

    d, trunc = generate_dataset(spec, stream(spec.seed, r, 0))
    rec = {"replicate": r, "censoring_rate": float(1.0 - d.delta.mean()), "methods": {}}
    w = CensoringWeights.fit(d, trunc, kernel=spec.kernel)
    cfg = SolverConfig()
    fits = {
        "ppl": lambda: fit_ppl(d, w, spec.L, spec.seed, cfg, key=(r, 1), variance=spec.variance),
        "wee": lambda: fit_wee(d, w, cfg, variance=spec.variance),
        "pl": lambda: fit_reference_pl(d, cfg),
    }
    for name, fn in fits.items():
        try:
            f = fn()
            rec["methods"][name] = {"beta": f.beta_hat.tolist(), "se": f.se.tolist(), "converged": True}
        except (BiasedCoxError, np.linalg.LinAlgError, FloatingPointError) as exc:
            rec["methods"][name] = {"beta": None, "se": None, "converged": False, "error": f"{type(exc).__name__}: {exc}"}
    return rec


def _worker(args):
    spec, r = args
    return run_replicate(spec, r)


def _read_log(path: Path) -> dict:
    done = {}
    if path.exists():
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    break  # torn final line from an interrupted run
                done[rec["replicate"]] = rec
    return done


def run_replicates(spec: ScenarioSpec, out_dir=None, jobs: int = 1) -> list[dict]:
    """All replicate records of a study, in index order.

    With ``out_dir`` the records are persisted to ``replicates.jsonl``;
    replicates already present are reused, so interrupted runs resume.
    """
    spec = spec.with_theta()
    done = {}
    log = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log = out_dir / "replicates.jsonl"
        done = {r: rec for r, rec in _read_log(log).items() if r < spec.n_replicates}
        # rewrite the clean prefix so a torn line never survives
        with log.open("w", encoding="utf-8") as fh:
            for r in sorted(done):
                fh.write(json.dumps(done[r], sort_keys=True) + "\n")
    todo = [r for r in range(spec.n_replicates) if r not in done]
    fh = log.open("a", encoding="utf-8") if log else None
    try:
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = ex.map(_worker, [(spec, r) for r in todo], chunksize=max(1, len(todo) // (8 * jobs)))
                for rec in results:
                    done[rec["replicate"]] = rec
                    if fh:
                        fh.write(json.dumps(rec, sort_keys=True) + "\n")
                        fh.flush()
        else:
            for r in todo:
                rec = run_replicate(spec, r)
                done[r] = rec
                if fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
                    fh.flush()
    finally:
        if fh:
            fh.close()
    records = [done[r] for r in sorted(done)]
    if log is not None:
        with log.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


def summarize(records: list[dict], beta_true, spec: ScenarioSpec | None = None) -> dict:
    """Per-method summary: bias, ESD, ASE and 95% coverage per method and coefficient."""
    beta_true = np.asarray(beta_true, dtype=float)
    records = sorted(records, key=lambda r: r["replicate"])
    report = {
        "n_replicates": len(records),
        "beta_true": beta_true.tolist(),
        "censoring_rate": float(np.mean([r["censoring_rate"] for r in records])) if records else None,
        "methods": {},
    }
    if spec is not None:
        report["scenario"] = spec_record(spec)
    for m in METHODS:
        ok = [r["methods"][m] for r in records if m in r["methods"] and r["methods"][m]["converged"]]
        failed = sum(1 for r in records if m in r["methods"] and not r["methods"][m]["converged"])
        if not ok:
            report["methods"][m] = {"bias": None, "esd": None, "ase": None, "coverage": None, "nonconverged": failed, "n_ok": 0}
            continue
        B = np.array([o["beta"] for o in ok])
        S = np.array([o["se"] for o in ok])
        esd = B.std(axis=0, ddof=1).tolist() if len(ok) > 1 else None
        cover = (np.abs(B - beta_true) <= 1.96 * S).mean(axis=0)
        report["methods"][m] = {
            "bias": (B.mean(axis=0) - beta_true).tolist(),
            "esd": esd,
            "ase": S.mean(axis=0).tolist(),
            "coverage": cover.tolist(),
            "nonconverged": failed,
            "n_ok": len(ok),
        }
    return report


def run_study(spec: ScenarioSpec, out_dir=None, jobs: int = 1) -> dict:
    spec = spec.with_theta()
    records = run_replicates(spec, out_dir, jobs)
    report = summarize(records, spec.beta_true, spec)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def _fmt_pair(x):
    return "NA" if x is None else "(" + ", ".join(f"{v:.3f}" for v in x) + ")"


def table_tsv(report: dict) -> str:
    rows = ["method\tcensoring\tbias\tesd\tase\tcoverage\tnonconverged"]
    c = report.get("censoring_rate")
    for m in METHODS:
        s = report["methods"].get(m)
        if s is None:
            continue
        rows.append(
            "\t".join(
                [m, "NA" if c is None else f"{c:.3f}", _fmt_pair(s["bias"]), _fmt_pair(s["esd"]), _fmt_pair(s["ase"]), _fmt_pair(s["coverage"]), str(s["nonconverged"])]
            )
        )
    return "\n".join(rows) + "\n"


def write_report(report: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    (out_dir / "table.tsv").write_text(table_tsv(report), encoding="utf-8")


def spec_record(spec: ScenarioSpec) -> dict:
    """JSON-safe scenario; an uncensored design stores ``theta_c`` as null."""
    out = asdict(spec)
    out["beta_true"] = list(spec.beta_true)
    if out["theta_c"] is not None and math.isinf(out["theta_c"]):
        out["theta_c"] = None
    return out


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)))
