"""Shared small types and precoder bookkeeping used by the solver blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PowerTargets:
    """Required harvested powers: RIS self-supply and one entry per EU."""

    p_ris_w: float
    p_eu_w: np.ndarray

    def scaled(self, ris_extra: float = 0.0, eu_extra=None) -> "PowerTargets":
        eu = self.p_eu_w if eu_extra is None else self.p_eu_w + eu_extra
        return PowerTargets(p_ris_w=self.p_ris_w + ris_extra, p_eu_w=eu)


def total_power(F) -> float:
    """Sum of squared Frobenius norms over all (k, i) precoders."""
    return float(sum(np.sum(np.abs(M) ** 2) for row in F for M in row))


def sum_outer(Fk) -> np.ndarray:
    """Sum over IUs of F F^H on one sub-band."""
    n_t = Fk[0].shape[0]
    out = np.zeros((n_t, n_t), dtype=complex)
    for M in Fk:
        out += M @ M.conj().T
    return out


def flatten_precoders(F) -> np.ndarray:
    """Column-major flatten of every (k, i) precoder into one complex vector."""
    return np.concatenate([M.ravel(order="F") for row in F for M in row])


def unflatten_precoders(z: np.ndarray, K: int, I: int, n_t: int, d: int):
    """Inverse of flatten_precoders."""
    out = []
    block = n_t * d
    pos = 0
    for k in range(K):
        row = []
        for i in range(I):
            row.append(z[pos:pos + block].reshape((n_t, d), order="F"))
            pos += block
        out.append(row)
    return out


def copy_precoders(F):
    return [[M.copy() for M in row] for row in F]
