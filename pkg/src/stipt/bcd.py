"""Alternating-block driver: receivers/weights, precoders, reflecting
coefficients, and RIS coordinate, cycled until the surrogate objective
settles.  Also provides the two reduced benchmark modes and a deterministic
parallel map over independent runs.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .common import PowerTargets, copy_precoders, total_power
from .coordinate import optimize_coordinate
from .precoder import solve_precoders
from .ris_coeff import build_phi_coeffs, initial_phi, solve_phi
from .scenario import Scenario
from .thz_channel import build_channels, harvested_powers
from .wmmse import rate, refresh_receivers

log = logging.getLogger(__name__)

MODES = ("PropBCD", "FixedLoc", "BeamOpt")

POWER_TOL_W = 1e-8
MODULUS_TOL = 1e-12


class InitializationError(RuntimeError):
    """No feasible starting point exists for the requested power targets."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class IterationRecord:
    iteration: int
    sum_rate: float
    o_tot: float
    p_ris: float
    p_eu: list
    coordinate: list
    c1_ok: bool
    c2_ok: bool
    c3_ok: bool
    c4_ok: bool
    stage_seconds: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.c1_ok and self.c2_ok and self.c3_ok and self.c4_ok


@dataclass
class SolveReport:
    mode: str
    seed: int
    iterations: list
    final_precoders: list
    final_phi: np.ndarray
    final_coordinate: np.ndarray
    converged: bool
    coordinate_trace: list = field(default_factory=list)

    @property
    def final_rate(self) -> float:
        return self.iterations[-1].sum_rate

    @property
    def final_o_tot(self) -> float:
        return self.iterations[-1].o_tot


def _harvest_gram(scenario: Scenario, ch, k: int) -> np.ndarray:
    """Capture Gram combining every EU channel and the AP->RIS direction."""
    eta = scenario.radio.eta[k]
    n_t = scenario.n_t
    M = np.zeros((n_t, n_t), dtype=complex)
    for m in scenario.eu_indices:
        Z = ch.Z[k, m]
        M += eta * (Z.conj().T @ Z)
    v = ch.v_ris[k]
    M += eta * abs(ch.H_ap_ris_gain[k]) ** 2 * scenario.n_ris \
        * np.outer(v, np.conj(v))
    return 0.5 * (M + M.conj().T)


def _c_ris(scenario: Scenario, ch, F) -> float:
    total = 0.0
    for k in range(ch.n_subbands):
        v = ch.v_ris[k]
        cap = sum(float(np.sum(np.abs(np.conj(v) @ M) ** 2)) for M in F[k])
        total += scenario.radio.eta[k] * abs(ch.H_ap_ris_gain[k]) ** 2 * cap
    return total


def initialize(scenario: Scenario):
    """Feasible starting point: power-split search between plain identity-like
    precoders and harvest-aligned directions, with interior coefficients."""
    L0 = scenario.ris.reference.copy()
    n_ris = scenario.n_ris
    ch_dark = build_channels(scenario, L0, np.zeros(n_ris, complex))
    iu = scenario.iu_indices
    K = scenario.radio.subband_count
    d = scenario.stream_count(iu[0])
    n_t = scenario.n_t
    eta = np.asarray(scenario.radio.eta)
    targets = PowerTargets(p_ris_w=scenario.p_ris_req_w,
                           p_eu_w=scenario.eu_power_req())

    ident = np.eye(n_t, d, dtype=complex)
    harvest_dirs = []
    for k in range(K):
        M = _harvest_gram(scenario, ch_dark, k)
        vals, vecs = np.linalg.eigh(M)
        harvest_dirs.append(vecs[:, ::-1][:, :d].astype(complex))

    def precoders_of(t: float, power: float):
        F = []
        for k in range(K):
            row = []
            for _ in iu:
                raw = np.sqrt(max(0.0, 1.0 - t)) * ident \
                    + np.sqrt(max(0.0, t)) * harvest_dirs[k]
                row.append(raw)
            F.append(row)
        scale = np.sqrt(power / max(total_power(F), 1e-300))
        return [[scale * M for M in row] for row in F]

    def attempt(t: float):
        F = precoders_of(t, 0.9 * scenario.p_t_max_w)
        c_ris = _c_ris(scenario, ch_dark, F)
        phi = initial_phi(n_ris, scenario.p_ris_req_w, c_ris)
        ch = build_channels(scenario, L0, phi)
        p_ris, p_eu = harvested_powers(ch, F, phi, eta, scenario)
        ok = (p_ris >= targets.p_ris_w - POWER_TOL_W
              and bool(np.all(p_eu >= targets.p_eu_w - POWER_TOL_W)))
        return ok, F, phi, ch

    grid = [round(0.1 * j, 1) for j in range(11)]
    t_feasible = None
    t_infeasible = 0.0
    found = None
    for t in grid:
        ok, F, phi, ch = attempt(t)
        if ok:
            t_feasible = t
            found = (F, phi, ch)
            break
        t_infeasible = t
    if t_feasible is None:
        F_full = precoders_of(1.0, scenario.p_t_max_w)
        ch0 = build_channels(scenario, L0, np.zeros(n_ris, complex))
        p_ris_max, p_eu_max = harvested_powers(
            ch0, F_full, np.zeros(n_ris, complex), eta, scenario)
        raise InitializationError(
            "no feasible initialization found",
            {"max_p_ris_w": p_ris_max, "max_p_eu_w": p_eu_max.tolist(),
             "required_p_ris_w": targets.p_ris_w,
             "required_p_eu_w": targets.p_eu_w.tolist()})
    if t_feasible > 0.0:
        lo, hi = t_infeasible, t_feasible
        for _ in range(6):
            mid = 0.5 * (lo + hi)
            ok, F, phi, ch = attempt(mid)
            if ok:
                hi = mid
                found = (F, phi, ch)
            else:
                lo = mid
    F, phi, ch = found
    state = refresh_receivers(ch, F, iu, scenario.radio.noise_power_w)
    return F, phi, L0, ch, state


def _record(scenario: Scenario, ch, F, phi, state, iteration: int,
            stage_seconds: dict) -> IterationRecord:
    iuidx = scenario.iu_indices
    _, sum_rate = rate(ch, F, iuidx, scenario.radio.noise_power_w)
    p_ris, p_eu = harvested_powers(ch, F, phi, np.asarray(scenario.radio.eta),
                                   scenario)
    p_tx = total_power(F)
    return IterationRecord(
        iteration=iteration, sum_rate=sum_rate, o_tot=state.o_tot,
        p_ris=p_ris, p_eu=p_eu.tolist(), coordinate=ch.coordinate.tolist(),
        c1_ok=bool(np.max(np.abs(phi)) <= 1.0 + MODULUS_TOL),
        c2_ok=bool(p_tx <= scenario.p_t_max_w + POWER_TOL_W),
        c3_ok=bool(p_ris >= scenario.p_ris_req_w - POWER_TOL_W),
        c4_ok=bool(np.all(p_eu >= scenario.eu_power_req() - POWER_TOL_W)),
        stage_seconds=stage_seconds)


def run(scenario: Scenario, mode: str = "PropBCD", s_max: int = 15,
        conv_tol: float = 1e-6, coord_iters: int = 10,
        accept_rule: str = "both_parts") -> SolveReport:
    """Alternating optimization; FixedLoc skips the coordinate block and
    BeamOpt additionally skips the reflecting-coefficient block."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    noise = scenario.radio.noise_power_w
    iu = scenario.iu_indices
    targets = PowerTargets(p_ris_w=scenario.p_ris_req_w,
                           p_eu_w=scenario.eu_power_req())
    F, phi, L, ch, state = initialize(scenario)
    records = [_record(scenario, ch, F, phi, state, 0, {})]
    coord_traces: list = []
    converged = False
    for s in range(1, s_max + 1):
        stage_seconds = {}
        t0 = time.perf_counter()
        state = refresh_receivers(ch, F, iu, noise)
        stage_seconds["receivers"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        pres = solve_precoders(ch, state, F, targets, scenario)
        F = pres.F
        stage_seconds["precoders"] = time.perf_counter() - t0

        if mode in ("PropBCD", "FixedLoc"):
            t0 = time.perf_counter()
            coeffs = build_phi_coeffs(ch, F, state, scenario, targets)
            phires = solve_phi(coeffs, phi, targets)
            if phires.status != "infeasible":
                phi = phires.phi
                ch = build_channels(scenario, L, phi)
            stage_seconds["coefficients"] = time.perf_counter() - t0

        if mode == "PropBCD":
            t0 = time.perf_counter()
            coord = optimize_coordinate(scenario, ch, F, phi,
                                        n_max=coord_iters,
                                        accept_rule=accept_rule)
            L, ch, state = coord.coordinate, coord.channels, coord.state
            coord_traces.append(coord.trace)
            stage_seconds["coordinate"] = time.perf_counter() - t0
        else:
            state = refresh_receivers(ch, F, iu, noise)

        records.append(_record(scenario, ch, F, phi, state, s, stage_seconds))
        prev, cur = records[-2].o_tot, records[-1].o_tot
        if abs(prev - cur) <= conv_tol * max(1.0, abs(prev)):
            converged = True
            break
    return SolveReport(mode=mode, seed=scenario.rng_seed, iterations=records,
                       final_precoders=copy_precoders(F), final_phi=phi.copy(),
                       final_coordinate=np.asarray(L, dtype=float).copy(),
                       converged=converged, coordinate_trace=coord_traces)


def _worker(job):
    fn, key, args, kwargs = job
    return key, fn(*args, **kwargs)


def run_many(jobs: list, workers: Optional[int] = None) -> dict:
    """Run independent (key, fn, args, kwargs) jobs; results keyed and merged
    deterministically regardless of completion order."""
    if workers is None:
        workers = int(os.environ.get("STIPT_WORKERS", "0")) or None
    packed = [(fn, key, args, kwargs) for key, fn, args, kwargs in jobs]
    results = {}
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, value in pool.map(_worker, packed):
                results[key] = value
    else:
        for job in packed:
            key, value = _worker(job)
            results[key] = value
    return dict(sorted(results.items(), key=lambda kv: repr(kv[0])))
