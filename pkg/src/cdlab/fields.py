"""Coefficient fields: diffusivity, velocity, reaction and source evaluators.

Evaluators are vectorized callables.  In 2D ``k(x1, x2)`` returns an array and
``v(x1, x2, t)`` returns a pair ``(v1, v2)``; in 1D ``k(x)`` and ``v(x, t)``
return arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AssemblyError

Evaluator = Callable[..., object]


def _const(value: float) -> Evaluator:
    def fn(*coords):
        return np.full(np.broadcast(*coords).shape, float(value))
    return fn


@dataclass(frozen=True)
class CoefficientField:
    """Diffusivity ``k`` with declared bounds ``kappa1 <= k <= kappa2`` and velocity ``v``."""

    k: Evaluator
    v: Evaluator
    kappa1: float
    kappa2: float = math.inf
    dim: int = 2

    def __post_init__(self) -> None:
        if not self.kappa1 > 0:
            raise AssemblyError(f"kappa1 must be positive, got {self.kappa1}")
        if self.kappa2 < self.kappa1:
            raise AssemblyError("kappa2 must not be below kappa1")

    def eval_k(self, *coords: np.ndarray) -> np.ndarray:
        """Evaluate ``k`` without any checks (points may lie outside the domain)."""
        shape = np.broadcast(*coords).shape
        return np.broadcast_to(np.asarray(self.k(*coords), dtype=float), shape).copy()

    def sample_k(self, *coords: np.ndarray) -> np.ndarray:
        """Evaluate ``k`` and check the declared bounds at every sample."""
        return self.check_k(self.eval_k(*coords))

    def check_k(self, vals: np.ndarray) -> np.ndarray:
        vals = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise AssemblyError("diffusivity must be strictly positive at every sample point")
        lo, hi = float(vals.min(initial=np.inf)), float(vals.max(initial=-np.inf))
        tol = 1e-12 * max(1.0, abs(self.kappa1))
        if vals.size and (lo < self.kappa1 - tol or hi > self.kappa2 + 1e-12 * max(1.0, abs(hi))):
            raise AssemblyError(f"sampled k in [{lo:.6g}, {hi:.6g}] violates declared bounds "
                                f"[{self.kappa1:.6g}, {self.kappa2:.6g}]")
        return vals

    def sample_v(self, *coords: np.ndarray, t: float = 0.0) -> tuple[np.ndarray, ...]:
        """Velocity components at the given points, one array per direction."""
        shape = np.broadcast(*coords).shape
        out = self.v(*coords, t)
        if self.dim == 1 and not isinstance(out, (tuple, list)):
            out = (out,)
        comps = tuple(np.broadcast_to(np.asarray(c, dtype=float), shape).copy() for c in out)
        if len(comps) != len(coords):
            raise AssemblyError(f"velocity has {len(comps)} components for {len(coords)} coordinates")
        return comps


def constant_field(k: float = 1.0, v: tuple[float, ...] | float = (0.0, 0.0)) -> CoefficientField:
    """Constant diffusivity and velocity, in 1D when ``v`` is a scalar."""
    if np.isscalar(v):
        vel = float(v)
        return CoefficientField(_const(k), lambda x, t: np.full(np.shape(x), vel), k, k, dim=1)
    v1, v2 = (float(c) for c in v)
    return CoefficientField(
        _const(k),
        lambda x1, x2, t: (np.full(np.broadcast(x1, x2).shape, v1), np.full(np.broadcast(x1, x2).shape, v2)),
        k, k, dim=2,
    )


def rotating_velocity(omega: float = 1.0) -> Evaluator:
    """Solid-body rotation about the centre of the unit square (divergence free)."""
    def v(x1, x2, t):
        return omega * (-(np.asarray(x2) - 0.5)), omega * (np.asarray(x1) - 0.5)
    return v


def compressible_velocity(scale: float = 1.0) -> Evaluator:
    """``v = scale * (x1, x2)``, with divergence ``2 * scale``."""
    def v(x1, x2, t):
        return scale * np.asarray(x1, dtype=float), scale * np.asarray(x2, dtype=float)
    return v


def random_velocity(rng: np.random.Generator, modes: int = 3, amplitude: float = 1.0) -> Evaluator:
    """Smooth random compressible velocity built from a few Fourier modes."""
    a = rng.normal(size=(2, modes, modes)) * amplitude / modes
    ph = rng.uniform(0, 2 * np.pi, size=(2, modes, modes))

    def v(x1, x2, t):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        comps = []
        for c in range(2):
            acc = np.zeros(np.broadcast(x1, x2).shape)
            for p in range(modes):
                for q in range(modes):
                    acc = acc + a[c, p, q] * np.cos(np.pi * (p * x1 + q * x2) + ph[c, p, q] + 0.3 * t)
            comps.append(acc)
        return tuple(comps)
    return v


class ConvectionForm(enum.Enum):
    """Which continuous convective operator is being approximated."""

    NONDIVERGENT = "nondivergent"  # C1: v . grad u
    DIVERGENT = "divergent"  # C2: div(v u)
    SKEW = "skew"  # C0: half-sum of the two

    @classmethod
    def parse(cls, text: str) -> "ConvectionForm":
        aliases = {"c1": cls.NONDIVERGENT, "c2": cls.DIVERGENT, "c0": cls.SKEW, "skewsymmetric": cls.SKEW,
                   "skew-symmetric": cls.SKEW}
        key = text.strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)


class CoefficientPlacement(enum.Enum):
    """Velocity sampled at grid nodes or at half-integer (staggered) points."""

    NODE = "node"
    STAGGERED = "staggered"
