"""Search for a desk-scale instance that satisfies every hypothesis of the asymptotic theorem.

Candidates are K = 2 square near-orthonormal coordinate dictionaries with
``s_k = 1`` and constant-magnitude coefficients.  For each candidate the
regularizer sits just under its ceiling, each radius is placed in the middle
of its admissible interval and the noise bound is a fixed fraction of the
largest admissible value.  The first candidate whose report passes (including
the supplementary radius conditions) is returned.
"""
from __future__ import annotations

import json
import math
from typing import Iterable

from .dictionary import CoordinateDictionary, near_orthonormal_dictionary
from .generative import GenerativeModel, make_rng
from .theory import check_theorem1, constants

__all__ = ["search_fixture", "load_fixture", "fixture_to_dict", "FIXTURE_VERSION"]

FIXTURE_VERSION = 1
LAMBDA_FRACTION = 0.999
NOISE_FRACTION = 0.5


def _candidate(p: int, spread: float, seed: int):
    rng = make_rng(seed)
    return [near_orthonormal_dictionary(p, p, spread, rng).matrix for _ in range(2)]


def _tune(d0, p: int):
    K = 2
    x = 1.0
    lam = LAMBDA_FRACTION * x / (8 * 3 ** ((K - 1) / 2))
    base = GenerativeModel((p, p), (p, p), (1, 1), x, x, 0.0)
    c = constants(d0, base, lam)
    lam_bar, c_max = c["globals"]["lambda_bar"], c["globals"]["C_max"]
    eps = []
    for r in c["per_mode"]:
        lo = max(lam_bar * r["C_k_min"], r["eps_k_min"])
        hi = min(lam_bar * c_max, 0.15)
        if not lo < hi:
            return None
        eps.append(0.5 * (lo + hi))
    noise_rhs = 3 * 1.5 ** (K / 2) * (lam_bar * K * c_max - sum(eps))
    if noise_rhs <= 0:
        return None
    # M_w / M_x = sqrt(m) a / x
    a = NOISE_FRACTION * noise_rhs * base.M_x / math.sqrt(base.m)
    model = GenerativeModel((p, p), (p, p), (1, 1), x, x, a)
    return model, lam, eps


def search_fixture(sizes: Iterable[int] = (34, 36, 38, 40),
                   spreads: Iterable[float] = (0.002, 0.005, 0.01, 0.02),
                   seeds: Iterable[int] = range(8)):
    """Return ``(factors, model, lam, eps, report, meta)`` for the first passing candidate."""
    for p in sizes:
        for spread in spreads:
            for seed in seeds:
                d0 = _candidate(p, spread, seed)
                tuned = _tune(d0, p)
                if tuned is None:
                    continue
                model, lam, eps = tuned
                report = check_theorem1(d0, model, lam, eps)
                if report.verdict and all(c.holds for c in report.supplementary):
                    meta = {"p": p, "spread": spread, "seed": seed}
                    return d0, model, lam, eps, report, meta
    raise RuntimeError("no candidate satisfied every hypothesis")


def fixture_to_dict(d0, model, lam, eps, meta) -> dict:
    return {
        "version": FIXTURE_VERSION,
        "search": meta,
        "model": model.to_dict(),
        "lambda": lam,
        "eps": list(eps),
        "factors": [CoordinateDictionary(f).to_dict() for f in d0],
    }


def load_fixture(path: str | None = None) -> dict:
    """Load the shipped fixture (or ``path``) into arrays and a model."""
    if path is None:
        from importlib import resources

        text = resources.files("ksdl").joinpath("fixtures/theorem1_fixture.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    return {
        "factors": [CoordinateDictionary.from_dict(f).matrix for f in raw["factors"]],
        "model": GenerativeModel.from_dict(raw["model"]),
        "lambda": float(raw["lambda"]),
        "eps": [float(e) for e in raw["eps"]],
        "search": raw["search"],
    }


def main() -> None:
    import argparse
    import os

    ap = argparse.ArgumentParser(description="search for a theorem-passing fixture")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "fixtures",
                                                  "theorem1_fixture.json"))
    args = ap.parse_args()
    d0, model, lam, eps, report, meta = search_fixture()
    os.makedirs(os.path.dirname(args.out), exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump(fixture_to_dict(d0, model, lam, eps, meta), fh)
        fh.write("\n")
    print(json.dumps({"search": meta, "lambda": lam, "eps": eps,
                      "noise_bound": model.noise_bound, "verdict": report.verdict}, indent=2))


if __name__ == "__main__":
    main()
