"""Reproducible Brownian increments on a fine grid, with deterministic coarsening.

Strong-error measurement couples every scheme at every step size to the same
underlying Brownian path: a path is generated once at the finest resolution,
and a run at step ``factor * tau_fine`` sees the block sums of the fine
increments.  Everything about a path is a pure function of
``(master_seed, path_index, grid)``:

* the substream seed is derived by a 64-bit avalanche mix, so distinct path
  indices give statistically independent streams without any coordination
  between workers;
* uniform draws come from PCG64, whose bit stream numpy guarantees stable;
* normals are produced by inverting the standard normal CDF with a rational
  approximation (refined by one Halley step against :func:`aitsde.analysis`'s
  own CDF), not by rejection samplers, so the draw count per variate is fixed
  and the stream is reproducible across platforms.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FactorNotDivisor

__all__ = [
    "GridSpec",
    "IncrementTable",
    "make_increments",
    "coarsen",
    "coarsen_matrix",
    "norm_inv_cdf",
    "substream_seed",
    "dump_table",
    "load_table",
]

_MASK64 = (1 << 64) - 1

_DUMP_MAGIC = b"AITW"
_DUMP_VERSION = 1
# magic (4s) + version (u32) + n_fine (u64) + seed (u64) + path (u64) = 32 bytes
_DUMP_HEADER = struct.Struct("<4sIQQQ")


@dataclass(frozen=True)
class GridSpec:
    """Uniform mesh on [0, horizon] with a power-of-two number of fine steps."""

    horizon: float
    n_fine: int

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_fine < 1 or self.n_fine & (self.n_fine - 1):
            raise ValueError(f"n_fine must be a power of two, got {self.n_fine}")

    @property
    def tau_fine(self) -> float:
        return self.horizon / self.n_fine


@dataclass(frozen=True)
class IncrementTable:
    """Brownian increments of one path at the finest grid; immutable."""

    grid: GridSpec
    path_index: int
    increments: np.ndarray

    def __post_init__(self) -> None:
        if self.increments.shape != (self.grid.n_fine,):
            raise ValueError("increments length must equal grid.n_fine")
        self.increments.setflags(write=False)


def substream_seed(master_seed: int, path_index: int) -> int:
    """Avalanche-mix (master_seed, path_index) into a 64-bit substream seed.

    This is the splitmix64 output function applied at stream position
    ``path_index + 1``, so consecutive path indices land in well-separated
    PCG64 streams.
    """

    if path_index < 0:
        raise ValueError("path_index must be non-negative")
    z = (master_seed + (path_index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


# Rational approximation of the standard normal quantile (Wichura's PPND16),
# split at |p - 1/2| <= 0.425 and tail regimes r <= 5 / r > 5.
_PPND_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_PPND_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_PPND_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_PPND_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_PPND_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_PPND_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs, r: np.ndarray) -> np.ndarray:
    acc = np.full_like(r, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc = acc * r + c
    return acc


def norm_inv_cdf(p) -> np.ndarray:
    """Standard normal quantile for p in (0, 1), accurate to ~1e-15.

    Rational approximation polished by one Halley step so small coefficient
    rounding cannot push the error above the documented 1e-9 budget.  The
    refinement runs on the lower-tail branch min(p, 1-p), where both the CDF
    and the target retain full relative accuracy; note 1-p is exact for
    p >= 1/2.
    """

    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("p must lie strictly inside (0, 1)")
    upper = p > 0.5
    pl = np.where(upper, 1.0 - p, p)
    q = pl - 0.5
    z = np.empty_like(pl)

    central = np.abs(q) <= 0.425
    if np.any(central):
        r = 0.180625 - q[central] ** 2
        z[central] = q[central] * _poly(_PPND_A, r) / _poly(_PPND_B, r)

    tail = ~central
    if np.any(tail):
        r = np.sqrt(-np.log(pl[tail]))
        near = r <= 5.0
        out = np.empty_like(r)
        out[near] = _poly(_PPND_C, r[near] - 1.6) / _poly(_PPND_D, r[near] - 1.6)
        out[~near] = _poly(_PPND_E, r[~near] - 5.0) / _poly(_PPND_F, r[~near] - 5.0)
        z[tail] = -out

    # Halley refinement: solve Phi(z) = pl with analytic density.  z <= 0 on
    # this branch, so normal_cdf(z) is relative-accurate there.
    from .analysis import normal_cdf

    err = normal_cdf(z) - pl
    dens = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    step = err / dens
    z = z - step / (1.0 + 0.5 * z * step)
    return np.where(upper, -z, z)


def make_increments(master_seed: int, path_index: int, grid: GridSpec) -> IncrementTable:
    """Brownian increments of one path, N(0, tau_fine) each, fully seeded."""

    rng = np.random.Generator(np.random.PCG64(substream_seed(master_seed, path_index)))
    # Uniforms strictly inside (0, 1): (k + 1/2) * 2**-53 for k in [0, 2**53).
    k = rng.integers(0, 1 << 53, size=grid.n_fine, dtype=np.uint64)
    u = (k.astype(np.float64) + 0.5) * 2.0**-53
    increments = np.sqrt(grid.tau_fine) * norm_inv_cdf(u)
    return IncrementTable(grid=grid, path_index=path_index, increments=increments)


def _block_sums(values: np.ndarray, factor: int) -> np.ndarray:
    # cumsum along the block axis fixes a strict left-to-right summation order.
    blocks = values.reshape(values.shape[:-1] + (-1, factor))
    return np.cumsum(blocks, axis=-1)[..., -1]


def coarsen(table: IncrementTable, factor: int) -> np.ndarray:
    """Sum fine increments in blocks of ``factor`` (left-to-right within blocks).

    Entry k of the result is the Brownian increment over the k-th coarse step,
    so a scheme run at ``factor * tau_fine`` sees exactly the same underlying
    path as the fine reference.
    """

    if factor < 1 or table.grid.n_fine % factor:
        raise FactorNotDivisor(
            f"factor {factor} does not divide n_fine {table.grid.n_fine}"
        )
    if factor == 1:
        return table.increments.copy()
    return _block_sums(table.increments, factor)


def coarsen_matrix(increments: np.ndarray, factor: int) -> np.ndarray:
    """Row-wise :func:`coarsen` for a (n_paths, n_fine) matrix; same summation order."""

    if factor < 1 or increments.shape[-1] % factor:
        raise FactorNotDivisor(
            f"factor {factor} does not divide n_fine {increments.shape[-1]}"
        )
    if factor == 1:
        return increments.copy()
    return _block_sums(increments, factor)


def dump_table(table: IncrementTable, path, master_seed: int = 0) -> None:
    """Write a table as a 32-byte header plus little-endian float64 payload."""

    header = _DUMP_HEADER.pack(
        _DUMP_MAGIC,
        _DUMP_VERSION,
        table.grid.n_fine,
        master_seed & _MASK64,
        table.path_index,
    )
    payload = np.ascontiguousarray(table.increments, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_table(path, horizon: float) -> IncrementTable:
    """Read back a dump written by :func:`dump_table`."""

    with open(path, "rb") as fh:
        raw = fh.read(_DUMP_HEADER.size)
        magic, version, n_fine, _seed, path_index = _DUMP_HEADER.unpack(raw)
        if magic != _DUMP_MAGIC:
            raise ValueError(f"not an increment dump: bad magic {magic!r}")
        if version != _DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        payload = np.frombuffer(fh.read(8 * n_fine), dtype="<f8")
    grid = GridSpec(horizon=horizon, n_fine=int(n_fine))
    return IncrementTable(grid=grid, path_index=int(path_index), increments=payload.copy())
