"""Separable-sparsity observation model ``y = (D_0 ⊗ ... ⊗ D_{K-1}) x + w``."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SeparableSupport",
    "GenerativeModel",
    "ObservationBatch",
    "make_rng",
    "sample_support",
    "sample_coefficients",
    "sample_noise",
    "synthesize",
    "snr",
    "flat_index",
    "batched_kron_apply",
]


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for ``seed``; ``keys`` select independent child streams."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def flat_index(per_mode: Sequence[Sequence[int]], p_vec: Sequence[int]) -> np.ndarray:
    """Lexicographic flat indices of ``J_0 x ... x J_{K-1}`` (C-order ravel)."""
    grids = np.meshgrid(*[np.asarray(j, dtype=int) for j in per_mode], indexing="ij")
    flat = np.ravel_multi_index(tuple(g.ravel() for g in grids), tuple(int(p) for p in p_vec))
    return np.sort(flat)


@dataclass(frozen=True)
class SeparableSupport:
    """Per-mode index sets and their lexicographic flat image."""

    per_mode: tuple
    p_vec: tuple

    def __post_init__(self):
        if len(self.per_mode) != len(self.p_vec):
            raise ValueError("support and dimension vector disagree on the number of modes")
        modes = []
        for k, (j, p) in enumerate(zip(self.per_mode, self.p_vec)):
            j = np.unique(np.asarray(j, dtype=int))
            if j.size != len(np.asarray(self.per_mode[k]).ravel()):
                raise ValueError(f"repeated index in mode {k}")
            if j.size and (j[0] < 0 or j[-1] >= p):
                raise IndexError(f"support index out of range for mode {k}")
            j.setflags(write=False)
            modes.append(j)
        object.__setattr__(self, "per_mode", tuple(modes))
        object.__setattr__(self, "p_vec", tuple(int(p) for p in self.p_vec))

    @property
    def s_vec(self) -> tuple:
        return tuple(int(j.size) for j in self.per_mode)

    @property
    def flat(self) -> np.ndarray:
        return flat_index(self.per_mode, self.p_vec)

    def __eq__(self, other):
        return (isinstance(other, SeparableSupport) and self.p_vec == other.p_vec
                and all(np.array_equal(a, b) for a, b in zip(self.per_mode, other.per_mode)))

    def __hash__(self):
        return hash((self.p_vec, tuple(tuple(j.tolist()) for j in self.per_mode)))

    @classmethod
    def from_flat(cls, flat: Sequence[int], p_vec: Sequence[int]) -> "SeparableSupport":
        """Recover the per-mode sets from a flat support; raises if it is not separable."""
        flat = np.sort(np.asarray(flat, dtype=int))
        idx = np.unravel_index(flat, tuple(p_vec))
        sup = cls(tuple(np.unique(i) for i in idx), tuple(p_vec))
        if not np.array_equal(sup.flat, flat):
            raise ValueError("flat support is not a Cartesian product of per-mode sets")
        return sup


@dataclass(frozen=True)
class GenerativeModel:
    """Rademacher-sign x Uniform[x_min, x_max] coefficients, Uniform[-a, a] noise."""

    m_vec: tuple
    p_vec: tuple
    s_vec: tuple
    x_min: float
    x_max: float
    noise_bound: float

    def __post_init__(self):
        for name in ("m_vec", "p_vec", "s_vec"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if not len(self.m_vec) == len(self.p_vec) == len(self.s_vec) >= 1:
            raise ValueError("dimension vectors must have the same positive length")
        if any(v < 1 for v in self.m_vec + self.p_vec + self.s_vec):
            raise ValueError("dimensions and sparsities must be positive")
        if any(s > p for s, p in zip(self.s_vec, self.p_vec)):
            raise ValueError("sparsity s_k exceeds p_k")
        if not 0 < self.x_min <= self.x_max:
            raise ValueError("need 0 < x_min <= x_max")
        if self.noise_bound < 0:
            raise ValueError("noise bound must be nonnegative")

    @property
    def K(self) -> int:
        return len(self.p_vec)

    @property
    def m(self) -> int:
        return math.prod(self.m_vec)

    @property
    def p(self) -> int:
        return math.prod(self.p_vec)

    @property
    def s(self) -> int:
        return math.prod(self.s_vec)

    @property
    def Ex2(self) -> float:
        a, b = self.x_min, self.x_max
        return (a * a + a * b + b * b) / 3.0

    @property
    def Eabs(self) -> float:
        return (self.x_min + self.x_max) / 2.0

    @property
    def kappa(self) -> float:
        return self.Eabs / math.sqrt(self.Ex2)

    @property
    def M_x(self) -> float:
        return math.sqrt(self.s) * self.x_max

    @property
    def M_w(self) -> float:
        return math.sqrt(self.m) * self.noise_bound

    @property
    def Ew2(self) -> float:
        return self.noise_bound ** 2 / 3.0

    def to_dict(self) -> dict:
        return {
            "m": list(self.m_vec), "p": list(self.p_vec), "s": list(self.s_vec),
            "x_min": self.x_min, "x_max": self.x_max, "noise_bound": self.noise_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenerativeModel":
        return cls(tuple(d["m"]), tuple(d["p"]), tuple(d["s"]),
                   float(d["x_min"]), float(d["x_max"]), float(d["noise_bound"]))

    def statistics(self) -> dict:
        return {"Ex2": self.Ex2, "Eabs": self.Eabs, "kappa": self.kappa,
                "M_x": self.M_x, "M_w": self.M_w, "Ew2": self.Ew2, "snr": snr(self)}


def snr(model: GenerativeModel) -> float:
    """``s E{x^2} / (m E{w^2})``; infinite for noiseless models."""
    if model.noise_bound == 0:
        return math.inf
    return model.s * model.Ex2 / (model.m * model.Ew2)


def _subsets(rng: np.random.Generator, p: int, s: int, n: int) -> np.ndarray:
    """``n`` independent uniform size-``s`` subsets of ``range(p)``, sorted per row."""
    keys = rng.random((n, p))
    return np.sort(np.argpartition(keys, s - 1, axis=1)[:, :s] if s < p
                   else np.tile(np.arange(p), (n, 1)), axis=1)


def sample_support(p_vec: Sequence[int], s_vec: Sequence[int], rng: np.random.Generator) -> SeparableSupport:
    if len(p_vec) != len(s_vec):
        raise ValueError("need one sparsity per mode")
    per_mode = []
    for p, s in zip(p_vec, s_vec):
        if not 1 <= s <= p:
            raise ValueError(f"sparsity {s} invalid for {p} columns")
        per_mode.append(np.sort(rng.choice(p, size=s, replace=False)))
    return SeparableSupport(tuple(per_mode), tuple(p_vec))


def _sample_values(model: GenerativeModel, shape, rng: np.random.Generator) -> np.ndarray:
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    mags = rng.uniform(model.x_min, model.x_max, size=shape) if model.x_max > model.x_min \
        else np.full(shape, model.x_min)
    return signs * mags


def sample_coefficients(support: SeparableSupport, model: GenerativeModel,
                        rng: np.random.Generator) -> np.ndarray:
    """Dense length-``p`` coefficient vector supported on ``support``."""
    x = np.zeros(model.p)
    flat = support.flat
    x[flat] = _sample_values(model, flat.size, rng)
    return x


def sample_noise(model: GenerativeModel, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    shape = (model.m,) if n is None else (model.m, n)
    if model.noise_bound == 0:
        return np.zeros(shape)
    return rng.uniform(-model.noise_bound, model.noise_bound, size=shape)


def batched_kron_apply(mats: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """Apply a per-sample Kronecker product.

    ``mats[k]`` has shape ``(N, r_k, c_k)`` and ``v`` has shape ``(N, prod c_k)``;
    row ``n`` of the result is ``kron(mats[0][n], ..., mats[-1][n]) @ v[n]``.
    """
    n = v.shape[0]
    cols = tuple(a.shape[2] for a in mats)
    t = v.reshape((n,) + cols)
    for k, a in enumerate(mats):
        t = np.moveaxis(t, k + 1, -1)
        shp = t.shape
        t = np.matmul(t.reshape(n, -1, shp[-1]), np.swapaxes(a, 1, 2))
        t = np.moveaxis(t.reshape(shp[:-1] + (a.shape[1],)), -1, k + 1)
    return t.reshape(n, -1)


@dataclass
class ObservationBatch:
    """``N`` observations together with the coefficients and noise that generated them.

    Coefficients are stored compactly: ``support_idx[k]`` is ``(N, s_k)`` and
    ``values`` is ``(N, s)`` in lexicographic order of the support.
    """

    Y: np.ndarray
    values: np.ndarray
    support_idx: list
    W: np.ndarray
    model: GenerativeModel
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.Y.shape[1]

    def flat_supports(self) -> np.ndarray:
        """``(N, s)`` flat indices, row ``n`` in lexicographic order."""
        n = self.N
        grids = []
        s_vec = self.model.s_vec
        for k, idx in enumerate(self.support_idx):
            shape = [n] + [1] * len(s_vec)
            shape[k + 1] = s_vec[k]
            grids.append(np.broadcast_to(idx.reshape(shape), (n,) + s_vec))
        flat = np.ravel_multi_index(tuple(grids), self.model.p_vec)
        return flat.reshape(n, -1)

    @property
    def supports(self) -> list[SeparableSupport]:
        return [SeparableSupport(tuple(idx[n] for idx in self.support_idx), self.model.p_vec)
                for n in range(self.N)]

    @property
    def X(self) -> np.ndarray:
        x = np.zeros((self.model.p, self.N))
        flat = self.flat_supports()
        cols = np.repeat(np.arange(self.N), flat.shape[1])
        x[flat.ravel(), cols] = self.values.ravel()
        return x

    def subset(self, cols) -> "ObservationBatch":
        cols = np.asarray(cols)
        return ObservationBatch(self.Y[:, cols], self.values[cols],
                                [i[cols] for i in self.support_idx], self.W[:, cols],
                                self.model, self.seed)

    def write(self, directory: str, comment: str = "") -> None:
        """Write ``batch.json`` plus ``Y.csv``, ``X.csv``, ``W.csv`` and ``supports.csv``."""
        os.makedirs(directory, exist_ok=True)
        header = {"N": self.N, "model": self.model.to_dict(), "seed": self.seed,
                  "files": {"Y": "Y.csv", "X": "X.csv", "W": "W.csv", "supports": "supports.csv"}}
        with open(os.path.join(directory, "batch.json"), "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)
            fh.write("\n")
        prefix = f"# {comment}\n" if comment else ""
        n = self.N
        with open(os.path.join(directory, "Y.csv"), "w") as fh:
            fh.write(prefix + ",".join(f"y{j}" for j in range(n)) + "\n")
            for row in self.Y:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        with open(os.path.join(directory, "W.csv"), "w") as fh:
            fh.write(prefix + ",".join(f"w{j}" for j in range(n)) + "\n")
            for row in self.W:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        flat = self.flat_supports()
        with open(os.path.join(directory, "X.csv"), "w") as fh:
            fh.write(prefix + "row,col,value\n")
            for j in range(n):
                for i, v in zip(flat[j], self.values[j]):
                    fh.write(f"{int(i)},{j},{float(v)!r}\n")
        with open(os.path.join(directory, "supports.csv"), "w") as fh:
            fh.write(prefix + "col,mode,indices\n")
            for j in range(n):
                for k, idx in enumerate(self.support_idx):
                    fh.write(f"{j},{k},{' '.join(str(int(i)) for i in idx[j])}\n")

    @classmethod
    def read(cls, directory: str) -> "ObservationBatch":
        with open(os.path.join(directory, "batch.json")) as fh:
            header = json.load(fh)
        model = GenerativeModel.from_dict(header["model"])
        n = int(header["N"])

        def load(name):
            with open(os.path.join(directory, name)) as fh:
                lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
            return np.loadtxt(lines, delimiter=",", ndmin=2, dtype=str)

        y = load("Y.csv")[1:].astype(float).reshape(model.m, n)
        w = load("W.csv")[1:].astype(float).reshape(model.m, n)
        trip = load("X.csv")[1:]
        sup = load("supports.csv")[1:]
        support_idx = [np.zeros((n, s), dtype=int) for s in model.s_vec]
        for col, mode, idx in sup:
            support_idx[int(mode)][int(col)] = np.array(idx.split(), dtype=int)
        values = trip[:, 2].astype(float).reshape(n, model.s)
        return cls(y, values, support_idx, w, model, header["seed"])


def synthesize(d0: Sequence[np.ndarray], model: GenerativeModel, N: int, rng) -> ObservationBatch:
    """Draw ``N`` observations.  ``rng`` is a Generator or an integer seed (recorded)."""
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = int(rng)
        rng = make_rng(seed)
    d0 = [np.asarray(f, dtype=float) for f in d0]
    if len(d0) != model.K:
        raise ValueError("dictionary and model have different numbers of modes")
    for k, f in enumerate(d0):
        if f.shape != (model.m_vec[k], model.p_vec[k]):
            raise ValueError(f"factor {k} has shape {f.shape}, model expects "
                             f"{(model.m_vec[k], model.p_vec[k])}")
    if N < 0:
        raise ValueError("N must be nonnegative")
    support_idx = [_subsets(rng, p, s, N) for p, s in zip(model.p_vec, model.s_vec)]
    values = _sample_values(model, (N, model.s), rng)
    w = sample_noise(model, rng, N)
    mats = [f.T[idx] for f, idx in zip(d0, support_idx)]  # (N, s_k, m_k)
    mats = [np.swapaxes(a, 1, 2) for a in mats]
    clean = batched_kron_apply(mats, values) if N else np.zeros((0, model.m))
    y = np.asfortranarray(clean.T + w)  # sample-major reads stay contiguous
    return ObservationBatch(y, values, support_idx, w, model, seed)

