"""Reflecting-coefficient block: exact quadratic objective in the coefficient
vector under per-element modulus caps, the RIS self-powering cap, and
tangent-linearized EU harvesting constraints.

The modulus caps are exact convex discs on the 2-real embedding of each
entry; the self-powering cap is the exact ball it induces on the coefficient
norm.  Only the EU constraint is linearized, with a PSD quadratic, so kernel
feasibility implies feasibility of the true constraint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import convex_kernel as ck
from .common import PowerTargets, sum_outer
from .scenario import Scenario
from .thz_channel import ChannelSet
from .wmmse import IterationState

log = logging.getLogger(__name__)

POWER_TOL_W = 1e-8


@dataclass
class PhiCoeffs:
    """Quadratic data of the coefficient subproblem."""

    A: np.ndarray              # (N, N) Hermitian PSD objective quadratic
    xi: np.ndarray             # (N,) complex row: objective linear part Re(xi phi)
    Lam: list                  # [m] -> (N, N) Hermitian PSD
    omega: list                # [m] -> (N,) complex rows
    p_eu_resid: np.ndarray     # (M,) targets net of the direct-path capture
    c_ris: float               # per-unit-absorption RIS capture
    n: int


@dataclass
class PhiResult:
    phi: np.ndarray
    status: str                # "ok" | "infeasible" | "pinned"
    objective: float
    inner_iterations: int


def _herm(a):
    return a.conj().T


def build_phi_coeffs(ch: ChannelSet, F, state: IterationState,
                     scenario: Scenario, targets: PowerTargets) -> PhiCoeffs:
    iu = scenario.iu_indices
    eu = scenario.eu_indices
    eta = scenario.radio.eta
    K = ch.n_subbands
    N = scenario.n_ris
    A = np.zeros((N, N), dtype=complex)
    xi = np.zeros(N, dtype=complex)
    Lam = [np.zeros((N, N), dtype=complex) for _ in eu]
    omega = [np.zeros(N, dtype=complex) for _ in eu]
    q_direct = np.zeros(len(eu))
    c_ris = 0.0
    for k in range(K):
        Fs = sum_outer(F[k])
        v = ch.v_ris[k]
        vF = np.conj(v) @ Fs            # v^H F^s
        vFv = float((vF @ v).real)      # v^H F^s v  (real, >= 0)
        for pos, i in enumerate(iu):
            g = ch.g_cascade[k, i]
            u_row = ch.u_row[k, i]
            r = ch.r_ris[k, i]
            Ubar = state.U[k][pos] @ state.W[k][pos] @ _herm(state.U[k][pos])
            a_ki = vFv * float((np.conj(r) @ Ubar @ r).real)
            xi_ki = complex(vF @ _herm(ch.H_direct[k, i]) @ Ubar @ r) \
                - complex(np.conj(v) @ F[k][pos] @ state.W[k][pos]
                          @ _herm(state.U[k][pos]) @ r)
            A += a_ki * abs(g) ** 2 * np.outer(np.conj(u_row), u_row)
            xi += 2.0 * g * xi_ki * u_row
        for j, m in enumerate(eu):
            g = ch.g_cascade[k, m]
            u_row = ch.u_row[k, m]
            r = ch.r_ris[k, m]
            lam_km = vFv * float((np.conj(r) @ r).real)
            w_km = complex(vF @ _herm(ch.H_direct[k, m]) @ r)
            q_km = float(np.trace(ch.H_direct[k, m] @ Fs
                                  @ _herm(ch.H_direct[k, m])).real)
            Lam[j] += eta[k] * abs(g) ** 2 * lam_km * np.outer(np.conj(u_row), u_row)
            omega[j] += 2.0 * eta[k] * g * w_km * u_row
            q_direct[j] += eta[k] * q_km
        c_ris += eta[k] * abs(ch.H_ap_ris_gain[k]) ** 2 * vFv
    return PhiCoeffs(A=0.5 * (A + _herm(A)), xi=xi,
                     Lam=[0.5 * (L + _herm(L)) for L in Lam], omega=omega,
                     p_eu_resid=np.asarray(targets.p_eu_w) - q_direct,
                     c_ris=c_ris, n=N)


def phi_objective(coeffs: PhiCoeffs, phi: np.ndarray) -> float:
    return float((np.conj(phi) @ coeffs.A @ phi).real) \
        + float((coeffs.xi @ phi).real)


def eu_quadratic(coeffs: PhiCoeffs, j: int, phi: np.ndarray) -> float:
    """phi-dependent part of EU j's harvested power."""
    return float((np.conj(phi) @ coeffs.Lam[j] @ phi).real) \
        + float((coeffs.omega[j] @ phi).real)


def ris_ball_radius_sq(coeffs: PhiCoeffs, p_ris_w: float) -> float:
    """Cap on phi^H phi implied by the RIS self-powering requirement."""
    if p_ris_w <= 0.0:
        return float(coeffs.n)
    if coeffs.c_ris <= 0.0:
        return -np.inf
    return coeffs.n - p_ris_w / coeffs.c_ris


def check_phi_feasible(coeffs: PhiCoeffs, phi: np.ndarray, p_ris_w: float,
                       tol: float = POWER_TOL_W) -> bool:
    if float(np.max(np.abs(phi))) > 1.0 + 1e-12:
        return False
    harvested = (coeffs.n - float(np.vdot(phi, phi).real)) * coeffs.c_ris
    if harvested < p_ris_w - tol:
        return False
    for j in range(len(coeffs.Lam)):
        if eu_quadratic(coeffs, j, phi) < coeffs.p_eu_resid[j] - tol:
            return False
    return True


def initial_phi(n: int, p_ris_w: float, c_ris: float,
                margin: float = 0.95) -> np.ndarray:
    """Uniform zero-phase coefficients with a strictly interior amplitude."""
    if c_ris <= 0.0:
        return np.zeros(n, dtype=complex)
    beta = margin * np.sqrt(max(0.0, 1.0 - p_ris_w / (n * c_ris)))
    return beta * np.ones(n, dtype=complex)


def solve_phi(coeffs: PhiCoeffs, phi_init: np.ndarray, targets: PowerTargets,
              inner_iters: int = 3, tol: float = 1e-8) -> PhiResult:
    """Inner descent on the coefficient block from a feasible start."""
    n = coeffs.n
    radius_sq = ris_ball_radius_sq(coeffs, targets.p_ris_w)
    if radius_sq < -1e-15:
        return PhiResult(phi=phi_init.copy(), status="infeasible",
                         objective=phi_objective(coeffs, phi_init),
                         inner_iterations=0)
    if radius_sq <= 1e-15:
        zero = np.zeros(n, dtype=complex)
        if np.all(coeffs.p_eu_resid <= POWER_TOL_W):
            return PhiResult(phi=zero, status="pinned",
                             objective=phi_objective(coeffs, zero),
                             inner_iterations=0)
        return PhiResult(phi=phi_init.copy(), status="infeasible",
                         objective=phi_objective(coeffs, phi_init),
                         inner_iterations=0)

    nr = 2 * n
    P = 2.0 * ck.embed_hermitian(coeffs.A)
    q = ck.embed_plain_row(coeffs.xi)
    base_quads = []
    if targets.p_ris_w > 0.0:
        base_quads.append(ck.QuadConstraint(Q=None, q_diag=np.ones(nr),
                                            r=np.zeros(nr), s=float(radius_sq)))
    for jj in range(n):
        qd = np.zeros(nr)
        qd[jj] = 1.0
        qd[jj + n] = 1.0
        base_quads.append(ck.QuadConstraint(Q=None, q_diag=qd, r=np.zeros(nr),
                                            s=1.0))

    phi_cur = phi_init.copy()
    obj_prev = phi_objective(coeffs, phi_cur)
    status = "ok"
    it_done = 0
    for it in range(inner_iters):
        rows, rhs = [], []
        for j in range(len(coeffs.Lam)):
            w = coeffs.Lam[j] @ phi_cur
            row = 2.0 * ck.embed_conjugate_row(w) + ck.embed_plain_row(coeffs.omega[j])
            anchor = float((np.conj(phi_cur) @ coeffs.Lam[j] @ phi_cur).real)
            rows.append(-row)
            rhs.append(-(float(coeffs.p_eu_resid[j]) + anchor))
        G = np.vstack(rows) if rows else None
        h = np.asarray(rhs) if rows else None
        prog = ck.ConvexProgram(P=P, q=q, G=G, h=h, quads=list(base_quads))
        sol = ck.solve(prog, tol=tol, max_iter=600,
                       x0=ck.stack_complex(phi_cur))
        if sol.status == "infeasible":
            status = "infeasible" if it == 0 else "ok"
            log.info("coefficient subproblem infeasible at inner iteration %d", it)
            break
        phi_new = ck.split_complex(sol.x)
        obj_new = phi_objective(coeffs, phi_new)
        if (not check_phi_feasible(coeffs, phi_new, targets.p_ris_w)
                or obj_new > obj_prev + 1e-9 * max(1.0, abs(obj_prev))):
            log.info("coefficient inner iteration %d rejected", it)
            break
        phi_cur = phi_new
        it_done = it + 1
        if abs(obj_prev - obj_new) <= 1e-6 * max(1.0, abs(obj_prev)):
            obj_prev = obj_new
            break
        obj_prev = obj_new
    return PhiResult(phi=phi_cur, status=status, objective=obj_prev,
                     inner_iterations=it_done)
