"""Extrapolation oracles: exact LMMSE under known covariance, and a
nearest-neighbor copier.

The LMMSE estimator is the Bayes-optimal linear map from observed to
masked ports for Gaussian channels, so its Monte-Carlo error and the
closed-form floor below bound what any learned model can achieve. The
correlation matrices here are real, so the same mixing matrix applies to
every real/imaginary column of the (N_S, 2M) layout (and to complex
columns directly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PortGrid, port_positions

__all__ = [
    "MaskPartition",
    "LmmseEstimate",
    "lmmse_mixing_matrix",
    "lmmse_extrapolate",
    "analytic_lmmse_nmse",
    "nearest_neighbor_extrapolate",
]


@dataclass(frozen=True)
class MaskPartition:
    """Disjoint observed/masked port index sets covering the whole grid."""

    observed: np.ndarray
    masked: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=np.intp)
        msk = np.asarray(self.masked, dtype=np.intp)
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "masked", msk)
        if obs.size < 1 or msk.size < 1:
            raise ValueError("both observed and masked sets must be non-empty")
        if np.any(np.diff(obs) <= 0) or np.any(np.diff(msk) <= 0):
            raise ValueError("index sets must be strictly ascending")
        if np.intersect1d(obs, msk).size:
            raise ValueError("observed and masked sets overlap")

    @classmethod
    def from_observed(cls, observed, n_ports: int) -> "MaskPartition":
        obs = np.unique(np.asarray(observed, dtype=np.intp))
        masked = np.setdiff1d(np.arange(n_ports), obs)
        return cls(observed=obs, masked=masked)

    @property
    def n_ports(self) -> int:
        return self.observed.size + self.masked.size


@dataclass
class LmmseEstimate:
    values: np.ndarray  # (|A|, ncols), same dtype as the input columns
    used_pinv: bool


def lmmse_mixing_matrix(
    sigma: np.ndarray, partition: MaskPartition, noise_var: float
) -> tuple[np.ndarray, bool]:
    """W such that g_A_hat = W @ u_B, i.e. Sigma_AB (Sigma_BB + s2 I)^-1.

    At noise_var == 0 the observed block can be rank-deficient for dense
    grids; a pseudo-inverse (cutoff 1e-10) is used and reported.
    """
    b, a = partition.observed, partition.masked
    sig_bb = sigma[np.ix_(b, b)]
    sig_ab = sigma[np.ix_(a, b)]
    if noise_var > 0.0:
        k = sig_bb + noise_var * np.eye(b.size)
        return sig_ab @ np.linalg.inv(k), False
    rank = np.linalg.matrix_rank(sig_bb, tol=1e-10 * np.linalg.norm(sig_bb, 2))
    return sig_ab @ np.linalg.pinv(sig_bb, rcond=1e-10), rank < b.size


def lmmse_extrapolate(
    sigma: np.ndarray,
    partition: MaskPartition,
    u_b: np.ndarray,
    noise_var: float = 0.0,
) -> LmmseEstimate:
    """Conditional-mean estimate of masked-port CSI from observed CSI.

    `sigma` is the channel covariance (path loss included); `noise_var`
    the complex noise variance on the observations. Columns of u_b are
    treated independently, so real-interleaved and complex layouts both
    work unchanged.
    """
    w, used_pinv = lmmse_mixing_matrix(sigma, partition, noise_var)
    return LmmseEstimate(values=w @ u_b, used_pinv=used_pinv)


def analytic_lmmse_nmse(
    sigma: np.ndarray, partition: MaskPartition, noise_var: float = 0.0
) -> float:
    """Closed-form masked-port NMSE floor of the LMMSE estimator."""
    b, a = partition.observed, partition.masked
    sig_aa = sigma[np.ix_(a, a)]
    sig_ab = sigma[np.ix_(a, b)]
    w, _ = lmmse_mixing_matrix(sigma, partition, noise_var)
    residual = np.trace(sig_aa) - np.trace(w @ sig_ab.T)
    return float(residual / np.trace(sig_aa))


def nearest_neighbor_extrapolate(
    grid: PortGrid, partition: MaskPartition, u_b: np.ndarray
) -> np.ndarray:
    """Copy each masked port's CSI from its nearest observed port.

    Distance ties resolve to the lowest observed port index (observed is
    ascending and argmin takes the first minimum).
    """
    pos = port_positions(grid)
    diff = pos[partition.masked][:, None, :] - pos[partition.observed][None, :, :]
    d2 = np.sum(diff**2, axis=-1)
    nearest = np.argmin(d2, axis=1)
    return u_b[nearest]
