"""Small dense convex solver for the SCA subproblems.

Handles programs of the form

    minimize    1/2 x^T P x + q^T x          (P symmetric PSD)
    subject to  G x <= h                     (affine)
                x^T Q x + r^T x <= s         (Q PSD; dense or diagonal)
                ||A x + b|| <= c^T x + d     (second-order cone)

over real vectors via a log-barrier interior-point method; second-order cones
use the squared self-concordant barrier together with the affine companion
c^T x + d >= 0.  A phase-1 pass finds a strictly feasible start (or reports
practical infeasibility when none exists).  Complex problems are handled by
the real-embedding helpers at the bottom; the stacked layout [Re z; Im z] is
the one convention shared by every caller.

Everything is deterministic: identical inputs produce identical iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class KernelError(ValueError):
    """Malformed program (non-PSD objective, bad shapes)."""


@dataclass
class SocConstraint:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float


@dataclass
class QuadConstraint:
    Q: Optional[np.ndarray]        # dense (n, n) PSD, or None when diagonal
    q_diag: Optional[np.ndarray]   # (n,) nonnegative diagonal, or None
    r: np.ndarray
    s: float


@dataclass
class ConvexProgram:
    """Quadratic objective with affine / quadratic / second-order-cone constraints."""

    P: np.ndarray
    q: np.ndarray
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    quads: list[QuadConstraint] = field(default_factory=list)
    socs: list[SocConstraint] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def validate(self, eig_floor: float = -1e-9) -> None:
        n = self.n
        if self.P.shape != (n, n):
            raise KernelError(f"objective shape mismatch: {self.P.shape} vs n={n}")
        if not np.all(np.isfinite(self.P)) or not np.all(np.isfinite(self.q)):
            raise KernelError("objective contains non-finite entries")
        sym_err = float(np.max(np.abs(self.P - self.P.T))) if n else 0.0
        if sym_err > 1e-9 * max(1.0, float(np.max(np.abs(self.P)))):
            raise KernelError("objective matrix is not symmetric")
        scale = max(1.0, float(np.max(np.abs(self.P)))) if n else 1.0
        if n and float(np.min(np.linalg.eigvalsh(0.5 * (self.P + self.P.T)))) \
                < eig_floor * scale:
            raise KernelError("objective matrix is not positive semidefinite")
        if (self.G is None) != (self.h is None):
            raise KernelError("G and h must be given together")
        if self.G is not None and (self.G.shape[1] != n
                                   or self.G.shape[0] != self.h.shape[0]):
            raise KernelError("affine constraint shape mismatch")
        for j, qc in enumerate(self.quads):
            if qc.Q is not None:
                if qc.Q.shape != (n, n):
                    raise KernelError(f"quad[{j}] shape mismatch")
                qscale = max(1.0, float(np.max(np.abs(qc.Q))))
                if float(np.min(np.linalg.eigvalsh(0.5 * (qc.Q + qc.Q.T)))) \
                        < eig_floor * qscale:
                    raise KernelError(f"quad[{j}] matrix is not PSD")
            else:
                if qc.q_diag is None or qc.q_diag.shape != (n,):
                    raise KernelError(f"quad[{j}] needs Q or q_diag")
                if float(np.min(qc.q_diag)) < eig_floor:
                    raise KernelError(f"quad[{j}] diagonal is not PSD")
        for j, sc in enumerate(self.socs):
            if sc.A.shape[1] != n or sc.c.shape != (n,) \
                    or sc.b.shape[0] != sc.A.shape[0]:
                raise KernelError(f"soc[{j}] shape mismatch")


@dataclass
class KernelSolution:
    x: np.ndarray
    status: str                    # "optimal" | "infeasible" | "max-iter"
    kkt_residual: float
    objective: float
    newton_steps: int


# ---------------------------------------------------------------------------
# Internal normalized constraint stack
# ---------------------------------------------------------------------------

class _Stack:
    """Constraint stack over (possibly s-extended) variables with barrier calculus.

    Constraint order inside value/gradient arrays: affine rows (including the
    cone companions), batched diagonal quadratics, dense quadratics, cones.
    """

    def __init__(self, prog: ConvexProgram):
        n = prog.n
        rows = []
        rhs = []
        if prog.G is not None:
            for i in range(prog.G.shape[0]):
                row = prog.G[i]
                sc = max(float(np.max(np.abs(row))), abs(float(prog.h[i])), 1e-30)
                rows.append(row / sc)
                rhs.append(float(prog.h[i]) / sc)
        diag_q, diag_r, diag_s = [], [], []
        self.dense_quads = []
        for qc in prog.quads:
            if qc.Q is not None:
                sc = max(float(np.max(np.abs(qc.Q))), float(np.max(np.abs(qc.r))),
                         abs(qc.s), 1e-30)
                self.dense_quads.append((qc.Q / sc, qc.r / sc, qc.s / sc))
            else:
                sc = max(float(np.max(qc.q_diag)), float(np.max(np.abs(qc.r))),
                         abs(qc.s), 1e-30)
                diag_q.append(qc.q_diag / sc)
                diag_r.append(qc.r / sc)
                diag_s.append(qc.s / sc)
        self.Qd = np.asarray(diag_q) if diag_q else np.zeros((0, n))
        self.Rd = np.asarray(diag_r) if diag_r else np.zeros((0, n))
        self.Sd = np.asarray(diag_s)
        self.socs = []
        for sc_ in prog.socs:
            sc = max(float(np.max(np.abs(sc_.A))), float(np.max(np.abs(sc_.b))),
                     float(np.max(np.abs(sc_.c))), abs(sc_.d), 1e-30)
            A, b, c, d = sc_.A / sc, sc_.b / sc, sc_.c / sc, sc_.d / sc
            self.socs.append((A, b, c, d, 2.0 * (A.T @ A)))
            # companion half-space; constant-positive companions are skipped
            if np.any(c != 0.0):
                rows.append(-c)
                rhs.append(d)
            elif d <= 0.0:
                raise KernelError("second-order cone with c=0 and d<=0 is empty")
        self.Ga = np.vstack(rows) if rows else np.zeros((0, n))
        self.ha = np.asarray(rhs)
        self.n = n
        self.m = (self.Ga.shape[0] + self.Qd.shape[0] + len(self.dense_quads)
                  + len(self.socs))

    def values(self, x: np.ndarray) -> np.ndarray:
        parts = [self.Ga @ x - self.ha]
        if self.Qd.shape[0]:
            parts.append(self.Qd @ (x * x) + self.Rd @ x - self.Sd)
        extra = []
        for Q, r, s in self.dense_quads:
            extra.append(float(x @ (Q @ x) + r @ x - s))
        for A, b, c, d, _ in self.socs:
            u = A @ x + b
            t = float(c @ x + d)
            extra.append(float(u @ u) - t * t)
        if extra:
            parts.append(np.asarray(extra))
        return np.concatenate(parts)

    def gradients(self, x: np.ndarray) -> np.ndarray:
        parts = [self.Ga] if self.Ga.shape[0] else []
        if self.Qd.shape[0]:
            parts.append(2.0 * self.Qd * x[None, :] + self.Rd)
        extra = []
        for Q, r, s in self.dense_quads:
            extra.append(2.0 * (Q @ x) + r)
        for A, b, c, d, _ in self.socs:
            u = A @ x + b
            t = float(c @ x + d)
            extra.append(2.0 * (A.T @ u) - 2.0 * t * c)
        if extra:
            parts.append(np.vstack(extra))
        return np.vstack(parts) if parts else np.zeros((0, self.n))

    def add_hessians(self, H: np.ndarray, weights: np.ndarray) -> None:
        """H += sum_i weights[i] * hess f_i; weights ordered like values()."""
        base = self.Ga.shape[0]
        nd = self.Qd.shape[0]
        if nd:
            H[np.diag_indices_from(H)] += 2.0 * (weights[base:base + nd] @ self.Qd)
        base += nd
        for j, (Q, r, s) in enumerate(self.dense_quads):
            H += (2.0 * weights[base + j]) * Q
        base += len(self.dense_quads)
        for j, (A, b, c, d, AtA2) in enumerate(self.socs):
            w = weights[base + j]
            H += w * AtA2
            H -= (2.0 * w) * np.outer(c, c)


# ---------------------------------------------------------------------------
# Newton machinery
# ---------------------------------------------------------------------------

def _newton_solve(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Descent direction for the (regularized) Newton system H dx = -g."""
    scale = max(1.0, float(np.trace(H)) / max(1, H.shape[0]))
    jitter = 0.0
    eye = None
    for _ in range(12):
        try:
            Hj = H if jitter == 0.0 else H + jitter * eye
            dx = np.linalg.solve(Hj, -g)
            if float(g @ dx) < 0.0:
                return dx
        except np.linalg.LinAlgError:
            pass
        if eye is None:
            eye = np.eye(H.shape[0])
        jitter = max(jitter * 100.0, 1e-10 * scale)
    raise np.linalg.LinAlgError("newton system not positive definite")


def _center(stack: _Stack, P, q, t: float, x: np.ndarray, budget: int,
            phase1: bool = False) -> tuple[np.ndarray, int, bool]:
    """Newton descent on t*f0 + barrier. Returns (x, steps_used, converged)."""
    n = x.shape[0]
    steps = 0
    stalls = 0
    budget = min(budget, 80)
    while steps < budget:
        vals = stack.values(x)
        slack = -vals
        if np.any(slack <= 0.0):
            raise KernelError("centering left the domain")
        grads = stack.gradients(x)
        inv_s = 1.0 / slack
        gbar = grads.T @ inv_s
        if phase1:
            g0 = np.zeros(n)
            g0[-1] = 1.0
            grad = t * g0 + gbar
        else:
            grad = t * (P @ x + q) + gbar
        H = (grads * (inv_s ** 2)[:, None]).T @ grads
        stack.add_hessians(H, inv_s)
        if not phase1:
            H += t * P
        H[np.diag_indices_from(H)] += 1e-12 * max(1.0, float(np.trace(H)) / n)
        dx = _newton_solve(H, grad)
        lam2 = float(-grad @ dx)
        steps += 1
        if lam2 / 2.0 <= 1e-9:
            return x, steps, True
        # backtracking: stay in the domain, then Armijo with a float-noise floor
        alpha = 1.0
        if phase1:
            f0x = t * x[-1]
        else:
            f0x = t * (0.5 * x @ (P @ x) + q @ x)
        psi0 = f0x - float(np.sum(np.log(slack)))
        noise = 1e-12 * max(1.0, abs(psi0))
        accepted = False
        for _ in range(60):
            xn = x + alpha * dx
            vn = stack.values(xn)
            if np.all(vn < 0.0):
                if phase1:
                    f0n = t * xn[-1]
                else:
                    f0n = t * (0.5 * xn @ (P @ xn) + q @ xn)
                psin = f0n - float(np.sum(np.log(-vn)))
                if psin <= psi0 - 0.25 * alpha * lam2 + noise:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            return x, steps, True  # numerically stuck at the central point
        # progress has fallen below float resolution: the point is centered
        if psi0 - psin <= 4.0 * noise:
            stalls += 1
            if stalls >= 2:
                return xn, steps, True
        else:
            stalls = 0
        x = xn
        if phase1 and x[-1] < -1e-7:
            return x, steps, True
    return x, steps, False


class _Phase1Stack(_Stack):
    """Wraps a stack over variables (x, s) with constraints f_i(x) - s <= 0."""

    def __init__(self, inner: _Stack):
        self.inner = inner
        self.n = inner.n + 1
        self.m = inner.m

    def values(self, y: np.ndarray) -> np.ndarray:
        return self.inner.values(y[:-1]) - y[-1]

    def gradients(self, y: np.ndarray) -> np.ndarray:
        g = self.inner.gradients(y[:-1])
        return np.hstack([g, -np.ones((g.shape[0], 1))])

    def add_hessians(self, H: np.ndarray, weights: np.ndarray) -> None:
        Hx = H[:-1, :-1].copy()
        self.inner.add_hessians(Hx, weights)
        H[:-1, :-1] = Hx


def _phase1(stack: _Stack, x0: np.ndarray, budget: int) -> tuple[np.ndarray, int, bool]:
    """Find a strictly feasible point, or conclude practical infeasibility."""
    p1 = _Phase1Stack(stack)
    vals = stack.values(x0)
    s0 = float(np.max(vals))
    y = np.concatenate([x0, [s0 + max(1.0, 0.1 * abs(s0))]])
    t = 1.0
    used = 0
    for _ in range(40):
        y, steps, _ = _center(p1, None, None, t, y, budget - used, phase1=True)
        used += steps
        if y[-1] < -1e-7:
            return y[:-1], used, True
        if p1.m / t < 1e-10 or used >= budget:
            break
        t *= 20.0
    return y[:-1], used, bool(y[-1] < -1e-9)


def solve(prog: ConvexProgram, tol: float = 1e-8, max_iter: int = 200,
          x0: Optional[np.ndarray] = None) -> KernelSolution:
    """Minimize the program; see the module docstring for the accepted form."""
    prog.validate()
    n = prog.n
    obj_scale = max(float(np.max(np.abs(prog.P))) if n else 0.0,
                    float(np.max(np.abs(prog.q))) if n else 0.0, 1e-30)
    P = prog.P / obj_scale
    q = prog.q / obj_scale

    def true_objective(x: np.ndarray) -> float:
        return float(0.5 * x @ (prog.P @ x) + prog.q @ x)

    stack = _Stack(prog)
    if stack.m == 0:
        x = _newton_solve(P + 1e-14 * np.eye(n), q)
        return KernelSolution(x=x, status="optimal",
                              kkt_residual=float(np.max(np.abs(P @ x + q))),
                              objective=true_objective(x), newton_steps=1)

    budget = max_iter
    used = 0
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    t = 1.0
    converged = False
    try:
        vals = stack.values(x)
        if float(np.max(vals)) >= -1e-9:
            x, steps, feasible = _phase1(stack, x, budget)
            used += steps
            if not feasible:
                return KernelSolution(x=x, status="infeasible", kkt_residual=np.inf,
                                      objective=true_objective(x), newton_steps=used)
            if used >= budget:
                return KernelSolution(x=x, status="max-iter", kkt_residual=np.inf,
                                      objective=true_objective(x), newton_steps=used)

        for _ in range(60):
            x, steps, ok = _center(stack, P, q, t, x, budget - used)
            used += steps
            gap = stack.m / t
            if gap <= tol * max(1.0, abs(0.5 * x @ (P @ x) + q @ x)):
                converged = True
                break
            if used >= budget or not ok:
                break
            t *= 20.0
    except np.linalg.LinAlgError:
        return KernelSolution(x=x, status="max-iter", kkt_residual=np.inf,
                              objective=true_objective(x), newton_steps=used)

    slack = -stack.values(x)
    lam = 1.0 / (t * slack)
    grads = stack.gradients(x)
    g0 = P @ x + q
    stationarity = float(np.max(np.abs(g0 + grads.T @ lam)))
    residual = stationarity / max(1.0, float(np.max(np.abs(g0)))) \
        + (stack.m / t) / max(1.0, abs(0.5 * x @ (P @ x) + q @ x))
    status = "optimal" if converged else "max-iter"
    return KernelSolution(x=x, status=status, kkt_residual=residual,
                          objective=true_objective(x), newton_steps=used)


# ---------------------------------------------------------------------------
# Complex <-> real embedding (stacked [Re z; Im z] layout)
# ---------------------------------------------------------------------------

def embed_hermitian(A: np.ndarray) -> np.ndarray:
    """Real (2n, 2n) matrix M with x^T M x = z^H A z for Hermitian A."""
    Ar, Ai = A.real, A.imag
    return np.block([[Ar, -Ai], [Ai, Ar]])


def embed_conjugate_row(w: np.ndarray) -> np.ndarray:
    """Row vector g with g @ x = Re(w^H z)."""
    return np.concatenate([w.real, w.imag])


def embed_plain_row(xi: np.ndarray) -> np.ndarray:
    """Row vector g with g @ x = Re(xi @ z) (no conjugation)."""
    return np.concatenate([xi.real, -xi.imag])


def stack_complex(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def split_complex(x: np.ndarray) -> np.ndarray:
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]
