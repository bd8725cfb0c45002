"""Write tests/data/hiv_like.csv: a synthetic prevalent HIV cohort with 204
subjects, 57 right-censored, Weibull(4.80, 2.04) truncation, and covariates
age at infection and a binary genotype indicator.

The numbers are made up; the file only exercises the CLI.
"""
import math
from pathlib import Path

import numpy as np

from biasedcox.data import write_csv
from biasedcox.rng import stream
from biasedcox.simulation import draw_biased_sample, observe
from biasedcox.truncation import Weibull

N, N_CENSORED = 204, 57
BETA = np.array([0.03, 0.7])
BASE = 0.0028  # H0(t) = BASE * t^2, t in years
TRUNC = Weibull(4.80, 2.04)


def population(rng, size):
    age = np.round(rng.normal(33.0, 7.0, size), 1)
    ccr5 = (rng.random(size) < 0.8).astype(float)
    a = TRUNC.sample(rng, size)
    e = -np.log1p(-rng.random(size))
    z = np.column_stack((age, ccr5))
    t = np.sqrt(e / (BASE * np.exp(z @ BETA)))
    return z, a, t


def calibrate(target=N_CENSORED / N, probe=100_000):
    rng = stream(7, 0)
    _, a, t, _ = draw_biased_sample(rng, probe, population, math.inf)
    v, u = t - a, rng.random(probe)
    lo, hi = 0.0, float(v.max()) + 1
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if np.mean(u * mid < v) > target else (lo, mid)
    return hi


def main():
    theta = calibrate()
    for seed in range(10_000):
        z, a, t, c = draw_biased_sample(stream(seed, 1), N, population, theta)
        d = observe(np.round(z, 1), np.round(a, 4), np.round(t, 4), np.round(c, 4), ["age", "ccr5"])
        if int((d.delta == 0).sum()) == N_CENSORED and np.all(d.a < d.y):
            break
    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "hiv_like.csv"
    write_csv(d, out)
    print(f"seed={seed} theta_c={theta:.4f} -> {out}")


if __name__ == "__main__":
    main()
