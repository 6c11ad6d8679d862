"""Synthetic unmixing experiments: libraries, angle-filtered endmember
selection, uniform simplex abundances and noise at a prescribed SNR.

SNR is 10 log10(P_signal / P_noise) with both powers taken as the mean
square over all entries of the n_bands x n matrices.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import chex
import jax.numpy as jnp
import jax.random as jr
from jax import lax
import numpy as np

from unmix_jax.errors import ConfigError, DimensionMismatch, InsufficientCandidates, InvalidMatrix
from unmix_jax.model import AbundanceMatrix, EndmemberMatrix, ImageCube

logger = logging.getLogger(__name__)


@chex.dataclass(frozen=True)
class SpectralLibrary:
    """Candidate signatures, array(n_bands, L), with names and optional wavelengths (nm)."""

    signatures: chex.Array
    names: Tuple[str, ...]
    wavelengths: Optional[chex.Array] = None

    @classmethod
    def from_array(cls, signatures, names=None, wavelengths=None):
        signatures = jnp.asarray(signatures, dtype=jnp.float64)
        if signatures.ndim != 2 or signatures.shape[1] < 1:
            raise InvalidMatrix("spectral library", f"expected n_bands x L with L >= 1, got {signatures.shape}")
        if not bool(jnp.all(jnp.isfinite(signatures))):
            raise InvalidMatrix("spectral library", "entries must be finite")
        zero = np.flatnonzero(np.asarray(jnp.linalg.norm(signatures, axis=0)) == 0)
        if len(zero):
            raise InvalidMatrix("spectral library", f"signature columns {zero.tolist()} are zero")
        L = signatures.shape[1]
        names = tuple(f"sig{j}" for j in range(L)) if names is None else tuple(str(name) for name in names)
        if len(names) != L:
            raise InvalidMatrix("spectral library", f"expected {L} names, got {len(names)}")
        if wavelengths is not None:
            wavelengths = jnp.asarray(wavelengths, dtype=jnp.float64)
            if wavelengths.shape != (signatures.shape[0],):
                raise InvalidMatrix("spectral library", f"expected {signatures.shape[0]} wavelengths")
        return cls(signatures=signatures, names=names, wavelengths=wavelengths)

    @property
    def n_bands(self):
        return self.signatures.shape[0]

    @property
    def n_signatures(self):
        return self.signatures.shape[1]


@chex.dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise at `snr_db`; +inf means no noise."""

    snr_db: float = math.inf
    seed: int = 0

    @property
    def noiseless(self):
        return math.isinf(self.snr_db) and self.snr_db > 0


def synthetic_library(n_bands=224, n_signatures=100, seed=0, wl_range=(383.0, 2508.0)) -> SpectralLibrary:
    """Smooth positive reflectance-like signatures.

    Each signature is a positive continuum (a baseline plus three broad
    Gaussian humps) multiplied by up to eight narrow Gaussian absorption bands.
    """
    wl = jnp.linspace(wl_range[0], wl_range[1], n_bands)
    span = wl_range[1] - wl_range[0]
    keys = jr.split(jr.PRNGKey(seed), 8)
    L = n_signatures

    baseline = jr.uniform(keys[0], (L,), minval=0.05, maxval=0.3)
    hump_centers = wl_range[0] + span * jr.uniform(keys[1], (L, 3))
    hump_widths = span * jr.uniform(keys[2], (L, 3), minval=0.1, maxval=0.35)
    hump_heights = jr.uniform(keys[3], (L, 3))
    humps = hump_heights[..., None] * jnp.exp(-0.5 * ((wl - hump_centers[..., None]) / hump_widths[..., None]) ** 2)
    continuum = baseline[:, None] + humps.sum(axis=1)

    band_centers = wl_range[0] + span * jr.uniform(keys[4], (L, 8))
    band_widths = jr.uniform(keys[5], (L, 8), minval=10.0, maxval=80.0)
    band_depths = jr.uniform(keys[6], (L, 8), maxval=0.6) * jr.bernoulli(keys[7], 0.6, (L, 8))
    bands = band_depths[..., None] * jnp.exp(-0.5 * ((wl - band_centers[..., None]) / band_widths[..., None]) ** 2)
    absorption = jnp.prod(1.0 - bands, axis=1)

    signatures = (continuum * absorption).T
    names = tuple(f"synthetic_{j:03d}" for j in range(L))
    return SpectralLibrary.from_array(signatures, names=names, wavelengths=wl)


def _signature_matrix(E):
    if isinstance(E, EndmemberMatrix):
        return E.data
    if isinstance(E, SpectralLibrary):
        return E.signatures
    return jnp.asarray(E, dtype=jnp.float64)


def pairwise_angles(E):
    """Angles in degrees between all pairs of columns of an EndmemberMatrix, SpectralLibrary or array."""
    data = _signature_matrix(E)
    unit = data / jnp.linalg.norm(data, axis=0, keepdims=True)

    def row(u):
        # 2 atan2(|u - v|, |u + v|) is exact for identical columns, unlike arccos(u.v)
        u = u[:, None]
        return 2.0 * jnp.arctan2(jnp.linalg.norm(unit - u, axis=0), jnp.linalg.norm(unit + u, axis=0))

    return jnp.degrees(lax.map(row, unit.T))


def min_pairwise_angle(E):
    """Smallest angle between two distinct columns (inf for a single column)."""
    angles = pairwise_angles(E)
    m = angles.shape[0]
    if m < 2:
        return math.inf
    return float(jnp.min(jnp.where(jnp.eye(m, dtype=bool), jnp.inf, angles)))


def select_endmembers(lib: SpectralLibrary, m: int, min_angle_deg=0.0, seed=0) -> EndmemberMatrix:
    """Greedily pick m library columns whose pairwise angles all exceed `min_angle_deg`.

    Candidates are visited in a seeded random order and kept when they make an
    angle > min_angle_deg with every column kept so far.

    Raises:
        InsufficientCandidates: when the pass ends with fewer than m columns.
    """
    if m < 1:
        raise ConfigError(f"number of endmembers must be >= 1, got {m}")
    if min_angle_deg < 0:
        raise ConfigError(f"min_angle_deg must be >= 0, got {min_angle_deg}")
    if lib.n_signatures < m:
        raise InsufficientCandidates(lib.n_signatures, m, min_angle_deg)

    angles = np.asarray(pairwise_angles(lib))
    order = np.asarray(jr.permutation(jr.PRNGKey(seed), lib.n_signatures))
    selected = []
    for j in order:
        if all(angles[j, k] > min_angle_deg for k in selected):
            selected.append(int(j))
            if len(selected) == m:
                break
    if len(selected) < m:
        raise InsufficientCandidates(len(selected), m, min_angle_deg)

    logger.debug("selected endmembers %s", selected)
    return EndmemberMatrix.from_array(lib.signatures[:, jnp.array(selected)],
                                      wavelengths=lib.wavelengths,
                                      names=[lib.names[j] for j in selected])


def sample_abundances(m: int, n: int, seed=0, shape: Optional[Sequence[int]] = None) -> AbundanceMatrix:
    """n columns drawn uniformly from the (m-1)-simplex by normalizing i.i.d. exponentials."""
    if m < 1 or n < 1:
        raise ConfigError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    draws = jr.exponential(jr.PRNGKey(seed), (m, n))
    return AbundanceMatrix.from_array(draws / draws.sum(axis=0, keepdims=True), shape=shape, feasible=True)


def noise_variance(signal, snr_db):
    """sigma^2 = ||S||_F^2 / (n_entries 10^(snr_db / 10))."""
    return float(jnp.sum(signal ** 2)) / (signal.size * 10.0 ** (snr_db / 10.0))


def synthesize_cube(E: EndmemberMatrix, A: AbundanceMatrix, noise: NoiseSpec = NoiseSpec(), shape=None) -> ImageCube:
    """X = EA + N with white Gaussian N at `noise.snr_db`.

    Raises:
        DimensionMismatch: when E and A disagree on the number of endmembers.
    """
    if E.n_endmembers != A.n_endmembers:
        raise DimensionMismatch(E.n_endmembers, A.n_endmembers, what="endmembers")
    signal = E.data @ A.data
    if noise.noiseless:
        X = signal
    else:
        sigma = noise_variance(signal, noise.snr_db) ** 0.5
        X = signal + sigma * jr.normal(jr.PRNGKey(noise.seed), signal.shape)
    return ImageCube.from_array(X, shape=A.shape if shape is None else shape, wavelengths=E.wavelengths)


def measured_snr_db(E: EndmemberMatrix, A: AbundanceMatrix, X: ImageCube):
    """10 log10(||EA||_F^2 / ||X - EA||_F^2); inf for a noiseless cube."""
    signal = E.data @ A.data
    noise_power = float(jnp.sum((X.data - signal) ** 2))
    if noise_power == 0:
        return math.inf
    return 10.0 * math.log10(float(jnp.sum(signal ** 2)) / noise_power)


def simulate(lib: SpectralLibrary, m: int, shape=(32, 32), snr_db=30.0, min_angle_deg=10.0, seed=0):
    """One synthetic instance: select E, sample A uniformly, synthesize X.

    Selection, abundances and noise draw from independent keys derived from `seed`.

    Returns:
        E, A, X
    """
    seeds = np.asarray(jr.randint(jr.PRNGKey(seed), (3,), 0, np.iinfo(np.int32).max))
    E = select_endmembers(lib, m, min_angle_deg, seed=int(seeds[0]))
    A = sample_abundances(m, shape[0] * shape[1], seed=int(seeds[1]), shape=shape)
    X = synthesize_cube(E, A, NoiseSpec(snr_db=snr_db, seed=int(seeds[2])))
    return E, A, X
