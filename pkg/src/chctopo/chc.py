"""Cosine-spectral Cahn-Hilliard-Cook simulator on the unit square.

The concentration ``u`` is expanded in the orthonormal Neumann basis
``c_{k1} c_{k2} cos(k1 pi x1) cos(k2 pi x2)`` with ``c_0 = 1`` and
``c_k = sqrt(2)``, truncated to ``K x K`` modes. Samples live at pixel centers
``x_j = (j + 1/2) / n``, where the basis transform is exactly an orthonormal
type-II DCT scaled by ``n``.

Time stepping is first-order and linearly implicit: the stiff ``-eps^2
Delta^2 u`` term is implicit, ``Delta F'(u)`` explicit, and each non-constant
mode receives an independent ``N(0, dt)`` increment scaled by ``sigma``::

    u_new = (u - dt q^2 N(u) + sigma sqrt(dt) eta) / (1 + dt eps^2 q^4)

with ``q^2 = pi^2 (k1^2 + k2^2)`` and ``N(u)`` the coefficients of
``u^3 - u``. The constant mode is copied unchanged, so the mass is conserved
bit for bit.

Random numbers come from numpy's Philox4x32-10 counter-based generator
seeded with ``ChcParams.seed``; the initial condition draws first, then one
``K x K`` standard-normal block per step (drawn even when ``sigma == 0``).
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from scipy.fft import dctn, idctn

from .field import ScalarField2D, read_field, write_field

__all__ = [
    "ChcParams",
    "SpectralState",
    "Integrator",
    "init_state",
    "step",
    "synthesize",
    "nonlinearity_coeffs",
    "trajectory",
    "simulate",
    "energy",
    "mass",
    "growth_rate",
    "write_archive",
    "read_archive",
    "ArchiveError",
    "INIT_AMPLITUDE",
]

INIT_AMPLITUDE = 1e-4


@dataclass(frozen=True)
class ChcParams:
    epsilon: float = 0.005
    sigma: float = 0.001
    mu: float = 0.0
    K: int = 256
    steps: int = 100000
    seed: int = 0
    grid: int = 0  # transform grid for the nonlinearity; 0 means 2K

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.K < 1 or self.steps < 1:
            raise ValueError("K and steps must be positive")
        if self.grid and self.grid < self.K:
            raise ValueError(f"transform grid {self.grid} smaller than K={self.K}")
        if self.fpp == 0:
            raise ValueError("F''(mu) = 0: the end time is undefined")

    @property
    def transform_grid(self) -> int:
        return self.grid or 2 * self.K

    @property
    def fpp(self) -> float:
        """F''(mu) = 3 mu^2 - 1."""
        return 3.0 * self.mu**2 - 1.0

    @property
    def spinodal(self) -> bool:
        return abs(self.mu) < 1.0 / math.sqrt(3.0)

    @property
    def endtime_exact(self) -> Fraction:
        fpp = 3 * Fraction(self.mu) ** 2 - 1
        return 80 * Fraction(self.epsilon) ** 2 / fpp**2

    @property
    def endtime(self) -> float:
        return float(self.endtime_exact)

    @property
    def dt(self) -> float:
        return self.endtime / self.steps

    def replace(self, **changes) -> "ChcParams":
        d = asdict(self)
        d.update(changes)
        return ChcParams(**d)


@dataclass
class SpectralState:
    coeffs: np.ndarray
    t: float = 0.0
    n_steps: int = 0

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]


def growth_rate(params: ChcParams, k1: int, k2: int) -> float:
    """Linear growth rate -q^2 (eps^2 q^2 + F''(mu)) of mode (k1, k2) about u = mu."""
    q2 = math.pi**2 * (k1 * k1 + k2 * k2)
    return -q2 * (params.epsilon**2 * q2 + params.fpp)


def synthesize(state_or_coeffs, grid_n: int) -> ScalarField2D:
    """Sample the expansion at the ``grid_n**2`` subsquare centers."""
    c = state_or_coeffs.coeffs if isinstance(state_or_coeffs, SpectralState) else state_or_coeffs
    return ScalarField2D(_synth(np.asarray(c, dtype=np.float64), grid_n))


def _synth(coeffs: np.ndarray, n: int) -> np.ndarray:
    K = coeffs.shape[0]
    if n < K:
        raise ValueError(f"grid {n} cannot represent {K} modes")
    pad = np.zeros((n, n))
    pad[:K, :K] = coeffs
    return n * idctn(pad, type=2, norm="ortho")


def _analyze(u: np.ndarray, K: int) -> np.ndarray:
    n = u.shape[0]
    return dctn(u, type=2, norm="ortho")[:K, :K] / n


def nonlinearity_coeffs(state_or_coeffs, grid_n: int) -> np.ndarray:
    """Coefficients of ``u^3 - u`` computed pseudo-spectrally on a ``grid_n`` grid."""
    c = state_or_coeffs.coeffs if isinstance(state_or_coeffs, SpectralState) else state_or_coeffs
    K = c.shape[0]
    if grid_n < K:
        raise ValueError(f"transform grid {grid_n} smaller than K={K}")
    u = _synth(c, grid_n)
    return _analyze(u * u * u - u, K)


def init_state(params: ChcParams, rng: np.random.Generator | None = None) -> SpectralState:
    """Random start with mean ``mu`` and grid sup-norm deviation ``1e-4``."""
    if rng is None:
        rng = make_rng(params.seed)
    K = params.K
    c = rng.standard_normal((K, K))
    c[0, 0] = 0.0
    dev = np.abs(_synth(c, params.transform_grid)).max()
    if dev > 0:
        c *= INIT_AMPLITUDE / dev
    c[0, 0] = params.mu
    return SpectralState(c, 0.0, 0)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


class Integrator:
    """Precomputed operators for a fixed ``(params, dt)`` pair."""

    def __init__(self, params: ChcParams, dt: float | None = None):
        self.params = params
        self.dt = params.dt if dt is None else float(dt)
        if not self.dt > 0:
            raise ValueError("time step must be positive")
        k = np.arange(params.K)
        q2 = math.pi**2 * (k[:, None] ** 2 + k[None, :] ** 2).astype(np.float64)
        self.q2 = q2
        self.denom = 1.0 + self.dt * params.epsilon**2 * q2 * q2
        self.noise_scale = params.sigma * math.sqrt(self.dt)

    def step(self, state: SpectralState, rng: np.random.Generator | None = None) -> SpectralState:
        c = state.coeffs
        N = nonlinearity_coeffs(c, self.params.transform_grid)
        rhs = c - self.dt * self.q2 * N
        if rng is not None:
            eta = rng.standard_normal(c.shape)
            if self.noise_scale:
                rhs = rhs + self.noise_scale * eta
        new = rhs / self.denom
        new[0, 0] = c[0, 0]
        return SpectralState(new, state.t + self.dt, state.n_steps + 1)


def step(state: SpectralState, params: ChcParams, dt: float, rng: np.random.Generator | None = None) -> SpectralState:
    """One time step; pass ``rng`` to apply noise (required when ``sigma > 0``)."""
    if params.sigma > 0 and rng is None:
        raise ValueError("a random generator is required when sigma > 0")
    return Integrator(params, dt).step(state, rng)


def _snapshot_steps(params: ChcParams, times: Iterable[float]) -> list[int]:
    times = [float(t) for t in times]
    Te = params.endtime
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("snapshot times must be strictly increasing")
    for t in times:
        if not 0 < t <= Te * (1 + 1e-12):
            raise ValueError(f"snapshot time {t} outside (0, T_e] with T_e = {Te}")
    idx = [min(params.steps, max(1, int(round(t / params.dt)))) for t in times]
    if len(set(idx)) != len(idx):
        raise ValueError("two snapshot times map to the same step; increase steps")
    return idx


def trajectory(params: ChcParams, step_indices: Iterable[int], state: SpectralState | None = None) -> Iterator[SpectralState]:
    """Yield the states at the requested (increasing) step indices."""
    rng = make_rng(params.seed)
    if state is None:
        state = init_state(params, rng)
    integ = Integrator(params)
    for target in step_indices:
        while state.n_steps < target:
            state = integ.step(state, rng)
        yield state


def simulate(params: ChcParams, snapshot_times: Iterable[float], grid_n: int | None = None) -> list[ScalarField2D]:
    """Fields at the steps nearest each requested time, sampled on ``grid_n``."""
    idx = _snapshot_steps(params, snapshot_times)
    n = grid_n or params.transform_grid
    return [synthesize(s, n) for s in trajectory(params, idx)]


def mass(field: ScalarField2D) -> float:
    return field.mean()


def energy(field: ScalarField2D, epsilon: float) -> float:
    """Ginzburg-Landau energy by midpoint quadrature on the pixel grid.

    Gradients use centered differences with mirrored ghost cells (homogeneous
    Neumann data); the domain is the unit square.
    """
    u = field.values
    ny, nx = u.shape
    hx, hy = 1.0 / nx, 1.0 / ny
    g = np.pad(u, 1, mode="symmetric")
    ux = (g[1:-1, 2:] - g[1:-1, :-2]) / (2 * hx)
    uy = (g[2:, 1:-1] - g[:-2, 1:-1]) / (2 * hy)
    dens = 0.5 * epsilon**2 * (ux * ux + uy * uy) + 0.25 * (u * u - 1.0) ** 2
    return float(dens.sum() * hx * hy)


# -- snapshot archives ---------------------------------------------------------


class ArchiveError(ValueError):
    """A snapshot archive is missing files or inconsistent with its manifest."""


def write_archive(directory, params: ChcParams, times, fields, extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(fields):
        write_field(f, directory / f"snap_{i:04d}.fld")
    lines = {f"param.{k}": repr(v) for k, v in asdict(params).items()}
    lines["seed"] = str(params.seed)
    lines["endtime"] = repr(params.endtime)
    lines["n_snapshots"] = str(len(fields))
    lines["times"] = " ".join(repr(float(t)) for t in times)
    for k, v in (extra or {}).items():
        lines[k] = str(v)
    text = "".join(f"{k}={v}\n" for k, v in lines.items())
    tmp = directory / f".manifest.tmp{os.getpid()}"
    tmp.write_text(text)
    os.replace(tmp, directory / "manifest.txt")


def read_archive(directory):
    """Return ``(manifest, params, times, fields)`` for an archive directory."""
    from .process import read_manifest

    directory = Path(directory)
    mpath = directory / "manifest.txt"
    if not mpath.exists():
        raise ArchiveError(f"{directory}: no manifest.txt")
    manifest = read_manifest(mpath)
    try:
        kw = {}
        for name, typ in (("epsilon", float), ("sigma", float), ("mu", float), ("K", int),
                          ("steps", int), ("seed", int), ("grid", int)):
            kw[name] = typ(manifest[f"param.{name}"])
        params = ChcParams(**kw)
        n = int(manifest["n_snapshots"])
        times = [float(t) for t in manifest["times"].split()]
    except (KeyError, ValueError) as exc:
        raise ArchiveError(f"{directory}: bad manifest ({exc})") from exc
    if len(times) != n:
        raise ArchiveError(f"{directory}: manifest lists {len(times)} times for {n} snapshots")
    fields = []
    for i in range(n):
        path = directory / f"snap_{i:04d}.fld"
        try:
            fields.append(read_field(path))
        except (OSError, ValueError) as exc:
            raise ArchiveError(f"{directory}: snapshot {i} ({path.name}) unreadable: {exc}") from exc
    return manifest, params, times, fields
