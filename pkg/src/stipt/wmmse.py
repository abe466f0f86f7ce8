"""Rates, MSE matrices, MMSE receivers, and the weighted-MSE objective.

Rates are reported in bits; the surrogate objective uses natural logs
internally.  Hermitian solves fall back to a small diagonal jitter when a
factorization fails (logged via the module logger).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .thz_channel import ChannelSet

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

Precoders = list  # [k][i] -> (N_t, d) complex ndarray


def _herm(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def _solve_hpd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for Hermitian positive-definite A, with jitter fallback."""
    A = 0.5 * (A + _herm(A))
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * max(1.0, float(np.trace(A).real) / max(1, A.shape[0]))
        log.warning("hermitian solve: adding %.3e jitter", jitter)
        c = np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
    y = np.linalg.solve(c, B)
    return np.linalg.solve(_herm(c), y)


def _logdet_h(A: np.ndarray) -> float:
    """log|A| for Hermitian positive-definite A (natural log)."""
    sign, val = np.linalg.slogdet(0.5 * (A + _herm(A)))
    if sign.real <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return float(val)


@dataclass
class IterationState:
    """Receivers, weights, and objective bookkeeping for the current iterate."""

    U: list            # [k][i] -> (N_r, d) receivers
    W: list            # [k][i] -> (d, d) Hermitian PD weights
    o_tot: float = np.nan
    sum_rate: float = np.nan


def interference_covariance(ch: ChannelSet, F: Precoders, k: int, i_pos: int,
                            iu_indices: list[int], noise_power: float) -> np.ndarray:
    """Covariance of interference plus noise seen by the IU at i_pos on sub-band k."""
    Z = ch.Z[k, iu_indices[i_pos]]
    n_r = Z.shape[0]
    J = noise_power * np.eye(n_r, dtype=complex)
    for j, Fj in enumerate(F[k]):
        if j == i_pos:
            continue
        ZF = Z @ Fj
        J += ZF @ _herm(ZF)
    return J


def rate(ch: ChannelSet, F: Precoders, iu_indices: list[int],
         noise_power: float) -> tuple[np.ndarray, float]:
    """Per-(k, i) achievable rates in bits and their sum."""
    K = ch.n_subbands
    I = len(iu_indices)
    rates = np.zeros((K, I))
    for k in range(K):
        for idx, i in enumerate(iu_indices):
            J = interference_covariance(ch, F, k, idx, iu_indices, noise_power)
            Z = ch.Z[k, i]
            ZF = Z @ F[k][idx]
            S = ZF @ _herm(ZF)
            n_r = Z.shape[0]
            # |I + S J^-1| = |I + J^-1 S| (similar matrices)
            M = np.eye(n_r, dtype=complex) + _solve_hpd(J, S)
            sign, val = np.linalg.slogdet(M)
            rates[k, idx] = float(val) / LN2
    return rates, float(np.sum(rates))


def mse_matrix(ch: ChannelSet, F: Precoders, Uki: np.ndarray, k: int, i_pos: int,
               iu_indices: list[int], noise_power: float) -> np.ndarray:
    """MSE matrix of IU at position i_pos for an arbitrary receiver Uki."""
    Z = ch.Z[k, iu_indices[i_pos]]
    d = F[k][i_pos].shape[1]
    X = _herm(Uki) @ Z @ F[k][i_pos] - np.eye(d, dtype=complex)
    E = X @ _herm(X)
    for j in range(len(iu_indices)):
        if j == i_pos:
            continue
        Y = _herm(Uki) @ Z @ F[k][j]
        E += Y @ _herm(Y)
    E += noise_power * (_herm(Uki) @ Uki)
    return E


def mmse_receiver(ch: ChannelSet, F: Precoders, k: int, i_pos: int,
                  iu_indices: list[int], noise_power: float) -> np.ndarray:
    """Receiver minimizing the MSE given the current precoders."""
    Z = ch.Z[k, iu_indices[i_pos]]
    ZF = Z @ F[k][i_pos]
    cov = ZF @ _herm(ZF) + interference_covariance(ch, F, k, i_pos, iu_indices,
                                                   noise_power)
    return _solve_hpd(cov, ZF)


def min_mse_matrix(ch: ChannelSet, F: Precoders, k: int, i_pos: int,
                   iu_indices: list[int], noise_power: float) -> np.ndarray:
    """MSE at the MMSE receiver, computed in the cancellation-free form.

    Algebraically identical to mse_matrix evaluated at the MMSE receiver but
    stays accurate when the MSE eigenvalues are far below one.
    """
    Z = ch.Z[k, iu_indices[i_pos]]
    ZF = Z @ F[k][i_pos]
    J = interference_covariance(ch, F, k, i_pos, iu_indices, noise_power)
    d = ZF.shape[1]
    S = np.eye(d, dtype=complex) + _herm(ZF) @ _solve_hpd(J, ZF)
    return _solve_hpd(S, np.eye(d, dtype=complex))


def optimal_weight(e_min: np.ndarray) -> np.ndarray:
    """Weight matrix attaining the rate equivalence: the inverse MSE."""
    return _solve_hpd(e_min, np.eye(e_min.shape[0], dtype=complex))


def refresh_receivers(ch: ChannelSet, F: Precoders, iu_indices: list[int],
                      noise_power: float) -> IterationState:
    """Recompute MMSE receivers and optimal weights for every (k, i)."""
    K = ch.n_subbands
    U = [[mmse_receiver(ch, F, k, i, iu_indices, noise_power)
          for i in range(len(iu_indices))] for k in range(K)]
    W = [[optimal_weight(min_mse_matrix(ch, F, k, i, iu_indices, noise_power))
          for i in range(len(iu_indices))] for k in range(K)]
    state = IterationState(U=U, W=W)
    state.o_tot = objective_total(ch, F, state, iu_indices, noise_power)
    _, state.sum_rate = rate(ch, F, iu_indices, noise_power)
    return state


def objective_parts(ch: ChannelSet, F: Precoders, state: IterationState,
                    iu_indices: list[int], noise_power: float) -> tuple[float, float]:
    """(weighted-MSE part, -log-det part) of the surrogate objective, in nats."""
    mse_part = 0.0
    logw_part = 0.0
    for k in range(ch.n_subbands):
        for i in range(len(iu_indices)):
            E = mse_matrix(ch, F, state.U[k][i], k, i, iu_indices, noise_power)
            W = state.W[k][i]
            mse_part += float(np.trace(W @ E).real)
            logw_part -= _logdet_h(W)
    return mse_part, logw_part


def objective_total(ch: ChannelSet, F: Precoders, state: IterationState,
                    iu_indices: list[int], noise_power: float) -> float:
    """Sum of tr(W E) - log|W| over all sub-bands and IUs (natural log)."""
    mse_part, logw_part = objective_parts(ch, F, state, iu_indices, noise_power)
    return mse_part + logw_part


def weight_log_rate_bits(state: IterationState) -> float:
    """Sum of log2|W| over all (k, i); equals the sum rate at optimal weights."""
    total = 0.0
    for Wk in state.W:
        for W in Wk:
            total += _logdet_h(W) / LN2
    return total
