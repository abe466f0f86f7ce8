"""Transmit precoder block: weighted-MSE quadratic objective under the power
budget and tangent-linearized harvesting constraints, refined by a short
inner loop of convex solves.

The harvesting constraints are kept conservative: each linearization is a
global under-estimator of its quadratic (the coefficient matrices are PSD),
so any iterate the kernel accepts also satisfies the true constraints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import convex_kernel as ck
from .common import (PowerTargets, copy_precoders, flatten_precoders, sum_outer,
                     total_power, unflatten_precoders)
from .scenario import Scenario
from .thz_channel import ChannelSet, harvested_powers
from .wmmse import IterationState

log = logging.getLogger(__name__)

POWER_TOL_W = 1e-8


@dataclass
class PrecoderCoeffs:
    """Frozen quadratic data for one inner iteration."""

    W_bar: list      # [k] -> (N_t, N_t) Hermitian PSD
    Z_bar: list      # [k][i] -> (d, N_t)
    B: list          # [k] -> (N_t, N_t) Hermitian PSD (RIS capture)
    C: list          # [k][m] -> (N_t, N_t) Hermitian PSD (EU capture)
    F_exp: list      # expansion-point precoders


@dataclass
class PrecoderResult:
    F: list
    status: str                  # "ok" | "infeasible" | "degenerate"
    objective: float
    inner_iterations: int


def _herm(a):
    return a.conj().T


def build_precoder_coeffs(ch: ChannelSet, state: IterationState, F_exp,
                          scenario: Scenario) -> PrecoderCoeffs:
    iu = scenario.iu_indices
    eu = scenario.eu_indices
    eta = scenario.radio.eta
    K = ch.n_subbands
    n_t = scenario.n_t
    phi_mod2 = np.abs(ch.phi) ** 2
    W_bar, Z_bar, B, C = [], [], [], []
    for k in range(K):
        Wk = np.zeros((n_t, n_t), dtype=complex)
        Zk = []
        for pos, i in enumerate(iu):
            Z = ch.Z[k, i]
            UW = state.U[k][pos] @ state.W[k][pos]
            Wk += _herm(Z) @ UW @ _herm(state.U[k][pos]) @ Z
            Zk.append(state.W[k][pos] @ _herm(state.U[k][pos]) @ Z)
        W_bar.append(0.5 * (Wk + _herm(Wk)))
        Z_bar.append(Zk)
        Hk = ch.H_ap_ris[k]
        B.append(eta[k] * (_herm(Hk) @ ((1.0 - phi_mod2)[:, None] * Hk)))
        C.append([eta[k] * (_herm(ch.Z[k, m]) @ ch.Z[k, m]) for m in eu])
    return PrecoderCoeffs(W_bar=W_bar, Z_bar=Z_bar, B=B, C=C,
                          F_exp=copy_precoders(F_exp))


def subproblem_objective(coeffs: PrecoderCoeffs, F) -> float:
    """Quadratic surrogate value: sum tr(F^H W F) - 2 sum Re tr(Z F)."""
    total = 0.0
    for k, Wk in enumerate(coeffs.W_bar):
        for i, M in enumerate(F[k]):
            total += float(np.trace(_herm(M) @ Wk @ M).real)
            total -= 2.0 * float(np.trace(coeffs.Z_bar[k][i] @ M).real)
    return total


def capture_quadratic(mats: list, F) -> float:
    """sum_{k,i} tr(F^H mats[k] F): power captured through the given Grams."""
    total = 0.0
    for k, Bk in enumerate(mats):
        for M in F[k]:
            total += float(np.trace(_herm(M) @ Bk @ M).real)
    return total


def capture_linearization(mats: list, F_exp, F) -> float:
    """Tangent under-estimator of capture_quadratic at expansion point F_exp."""
    lin = 0.0
    for k, Bk in enumerate(mats):
        for i, M in enumerate(F[k]):
            lin += 2.0 * float(np.trace(_herm(F_exp[k][i]) @ Bk @ M).real)
            lin -= float(np.trace(_herm(F_exp[k][i]) @ Bk @ F_exp[k][i]).real)
    return lin


def build_precoder_program(ch: ChannelSet, state: IterationState, F_exp,
                           targets: PowerTargets, scenario: Scenario
                           ) -> tuple[ck.ConvexProgram, PrecoderCoeffs]:
    """Assemble the convex program over the stacked real precoder vector."""
    coeffs = build_precoder_coeffs(ch, state, F_exp, scenario)
    K = ch.n_subbands
    iu = scenario.iu_indices
    I = len(iu)
    n_t = scenario.n_t
    d = F_exp[0][0].shape[1]
    blk = n_t * d
    n_c = K * I * blk

    Ac = np.zeros((n_c, n_c), dtype=complex)
    xi = np.zeros(n_c, dtype=complex)
    w_ris = np.zeros(n_c, dtype=complex)
    w_eu = [np.zeros(n_c, dtype=complex) for _ in scenario.eu_indices]
    pos = 0
    for k in range(K):
        Wk = coeffs.W_bar[k]
        for i in range(I):
            for col in range(d):
                sl = slice(pos + col * n_t, pos + (col + 1) * n_t)
                Ac[sl, sl] = Wk
            xi[pos:pos + blk] = -2.0 * coeffs.Z_bar[k][i].T.ravel(order="F")
            w_ris[pos:pos + blk] = (coeffs.B[k] @ coeffs.F_exp[k][i]).ravel(order="F")
            for j, Ckm in enumerate(coeffs.C[k]):
                w_eu[j][pos:pos + blk] = (Ckm @ coeffs.F_exp[k][i]).ravel(order="F")
            pos += blk

    P = 2.0 * ck.embed_hermitian(Ac)
    q = ck.embed_plain_row(xi)
    nr = 2 * n_c
    quads = [ck.QuadConstraint(Q=None, q_diag=np.ones(nr), r=np.zeros(nr),
                               s=scenario.p_t_max_w)]
    rows, rhs = [], []
    rows.append(-2.0 * ck.embed_conjugate_row(w_ris))
    rhs.append(-(capture_quadratic(coeffs.B, coeffs.F_exp) + targets.p_ris_w))
    for j in range(len(w_eu)):
        Cj = [coeffs.C[k][j] for k in range(K)]
        rows.append(-2.0 * ck.embed_conjugate_row(w_eu[j]))
        rhs.append(-(capture_quadratic(Cj, coeffs.F_exp)
                     + float(targets.p_eu_w[j])))
    prog = ck.ConvexProgram(P=P, q=q, G=np.vstack(rows), h=np.asarray(rhs),
                            quads=quads)
    return prog, coeffs


def _zeros_like(F):
    return [[np.zeros_like(M) for M in row] for row in F]


def waterfill_precoders(coeffs: PrecoderCoeffs, p_max: float):
    """Exact minimizer of the quadratic surrogate under the power ball alone.

    Stationarity gives F = (W + mu I)^-1 Z^H per cell with one shared
    multiplier mu >= 0 pinned by the total power; solved by bisection on the
    eigenbasis of each W.
    """
    K = len(coeffs.W_bar)
    I = len(coeffs.Z_bar[0])
    eig = []
    rhs = []
    for k in range(K):
        vals, vecs = np.linalg.eigh(coeffs.W_bar[k])
        vals = np.maximum(vals, 0.0)
        eig.append((vals, vecs))
        rhs.append([vecs.conj().T @ _herm(coeffs.Z_bar[k][i]) for i in range(I)])

    def power(mu: float) -> float:
        total = 0.0
        for k in range(K):
            vals, _ = eig[k]
            denom = (vals + mu)[:, None]
            for i in range(I):
                total += float(np.sum(np.abs(rhs[k][i]) ** 2 / denom ** 2))
        return total

    min_eig = min(float(np.min(e[0])) for e in eig)
    mu_lo = 0.0 if min_eig > 0.0 else 1e-18
    if power(mu_lo) <= p_max:
        mu = mu_lo
    else:
        mu_hi = 1.0
        while power(mu_hi) > p_max:
            mu_hi *= 10.0
            if mu_hi > 1e30:
                break
        mu_lo_b = mu_lo
        for _ in range(200):
            mu = 0.5 * (mu_lo_b + mu_hi)
            if power(mu) > p_max:
                mu_lo_b = mu
            else:
                mu_hi = mu
            if mu_hi - mu_lo_b <= 1e-16 * max(1.0, mu_hi):
                break
        mu = mu_hi
    F = []
    for k in range(K):
        vals, vecs = eig[k]
        denom = (vals + mu)[:, None]
        F.append([vecs @ (rhs[k][i] / denom) for i in range(I)])
    return F


def verify_original_constraints(ch: ChannelSet, F, phi, targets: PowerTargets,
                                scenario: Scenario, tol: float = POWER_TOL_W
                                ) -> tuple[bool, dict]:
    """Direct evaluation of the power budget and both harvesting requirements."""
    p_tx = total_power(F)
    p_ris, p_eu = harvested_powers(ch, F, phi, np.asarray(scenario.radio.eta),
                                   scenario)
    ok = (p_tx <= scenario.p_t_max_w + tol
          and p_ris >= targets.p_ris_w - tol
          and bool(np.all(p_eu >= targets.p_eu_w - tol)))
    return ok, {"p_tx": p_tx, "p_ris": p_ris, "p_eu": p_eu}


def solve_precoders(ch: ChannelSet, state: IterationState, F_init,
                    targets: PowerTargets, scenario: Scenario,
                    inner_iters: int = 3, tol: float = 1e-8) -> PrecoderResult:
    """Short inner descent on the precoder block starting from a feasible point."""
    if scenario.p_t_max_w <= 1e-300:
        F0 = _zeros_like(F_init)
        coeffs = build_precoder_coeffs(ch, state, F0, scenario)
        return PrecoderResult(F=F0, status="degenerate",
                              objective=subproblem_objective(coeffs, F0),
                              inner_iterations=0)

    K = ch.n_subbands
    iu = scenario.iu_indices
    n_t = scenario.n_t
    d = F_init[0][0].shape[1]
    F_cur = copy_precoders(F_init)
    coeffs = build_precoder_coeffs(ch, state, F_cur, scenario)
    obj_prev = subproblem_objective(coeffs, F_cur)
    status = "ok"
    it_done = 0
    for it in range(inner_iters):
        prog, coeffs = build_precoder_program(ch, state, F_cur, targets, scenario)
        x0 = ck.stack_complex(flatten_precoders(F_cur))
        sol = ck.solve(prog, tol=tol, max_iter=600, x0=x0)
        if sol.status == "infeasible":
            status = "infeasible" if it == 0 else "ok"
            log.info("precoder subproblem infeasible at inner iteration %d", it)
            break
        F_new = unflatten_precoders(ck.split_complex(sol.x), K, len(iu), n_t, d)
        ok, _ = verify_original_constraints(ch, F_new, ch.phi, targets, scenario)
        obj_new = subproblem_objective(coeffs, F_new)
        if not ok or obj_new > obj_prev + 1e-9 * max(1.0, abs(obj_prev)):
            log.info("precoder inner iteration %d rejected (ok=%s)", it, ok)
            break
        F_cur = F_new
        it_done = it + 1
        if abs(obj_prev - obj_new) <= 1e-6 * max(1.0, abs(obj_prev)):
            obj_prev = obj_new
            break
        obj_prev = obj_new
    return PrecoderResult(F=F_cur, status=status, objective=obj_prev,
                          inner_iterations=it_done)
