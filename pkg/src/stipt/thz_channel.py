"""Deterministic THz channel synthesis.

Builds, for every sub-band, the direct AP-user matrices, the AP-RIS link, and
the rank-one RIS cascades as functions of geometry and of the RIS state
(coordinate and reflecting coefficients).  All phases come straight from
path-length differences; no fading, blockage, or wall reflections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario


class GeometryError(ValueError):
    """Degenerate geometry (coincident or zero-length transmit vectors)."""


def steering_phase(d_vec: np.ndarray, offset: np.ndarray, wavelength: float) -> float:
    """Phase lead of an array element at `offset` for propagation along `d_vec`."""
    dist = float(np.linalg.norm(d_vec))
    if dist <= 0.0:
        raise GeometryError("zero-length transmit vector")
    return 2.0 * np.pi / wavelength * float(d_vec @ offset) / dist


def steering_vector(d_vec: np.ndarray, offsets: np.ndarray, wavelength: float) -> np.ndarray:
    """Unit-modulus array vector exp(-j * phase) over all element offsets."""
    dist = np.linalg.norm(d_vec)
    if dist <= 0.0:
        raise GeometryError("zero-length transmit vector")
    phases = (2.0 * np.pi / wavelength / dist) * (offsets @ d_vec)
    return np.exp(-1j * phases)


def los_gain(distance: float, wavelength: float, absorption: float,
             g_t: float, g_r: float) -> complex:
    """Direct-path complex gain: spreading, carrier phase, molecular absorption."""
    if distance <= 0.0:
        raise GeometryError("nonpositive distance")
    amp = g_r * g_t * wavelength / (4.0 * np.pi * distance)
    return amp * np.exp(-1j * 2.0 * np.pi * distance / wavelength) \
               * np.exp(-0.5 * absorption * distance)


def cascade_gain(r: float, d0: float, wavelength: float, absorption: float,
                 g_t: float, g_r: float) -> complex:
    """Two-hop (AP-RIS-user) complex gain over distances d0 and r."""
    if r <= 0.0 or d0 <= 0.0:
        raise GeometryError("nonpositive distance")
    amp = g_t * g_r * wavelength / (8.0 * np.sqrt(np.pi ** 3) * r * d0)
    return amp * np.exp(-1j * 2.0 * np.pi * (r + d0) / wavelength) \
               * np.exp(-0.5 * absorption * (r + d0))


@dataclass
class ChannelSet:
    """All per-sub-band channel quantities for one (coordinate, phi) state.

    Index conventions: k is the sub-band, u the user (scenario order).
    """

    wavelengths: np.ndarray        # (K,)
    phi: np.ndarray                # (N,) complex reflecting coefficients
    coordinate: np.ndarray         # (3,) RIS reference coordinate
    d0: float                      # |AP -> RIS|
    r_u: np.ndarray                # (U,) |RIS -> user u|
    d_u: np.ndarray                # (U,) |AP -> user u|
    h_direct: np.ndarray           # (K, U) direct scalar gains
    H_direct: np.ndarray           # (K, U, N_r, N_t)
    v_dir: np.ndarray              # (K, U, N_t) AP array vectors toward users
    r_dir: np.ndarray              # (K, U, N_r) user array vectors toward AP
    H_ap_ris_gain: np.ndarray      # (K,) scalar AP -> RIS gains
    H_ap_ris: np.ndarray           # (K, N, N_t)
    v_ris: np.ndarray              # (K, N_t) AP array vectors toward the RIS
    e_ris: np.ndarray              # (K, N) RIS array vectors toward the AP
    e_out: np.ndarray              # (K, U, N) RIS array vectors toward users
    r_ris: np.ndarray              # (K, U, N_r) user array vectors toward the RIS
    g_cascade: np.ndarray          # (K, U) scalar cascade gains
    u_row: np.ndarray              # (K, U, N) rows conj(e_out) * e_ris
    G: np.ndarray                  # (K, U, N_r, N_t) cascades at this phi
    Z: np.ndarray                  # (K, U, N_r, N_t) composite H + G

    @property
    def n_subbands(self) -> int:
        return self.wavelengths.shape[0]

    @property
    def n_users(self) -> int:
        return self.h_direct.shape[1]


def build_channels(scenario: Scenario, coordinate: np.ndarray,
                   phi: np.ndarray) -> ChannelSet:
    """Populate a ChannelSet for the RIS at `coordinate` with coefficients `phi`."""
    radio = scenario.radio
    lams = radio.wavelengths_m
    K = radio.subband_count
    users = scenario.users
    U = len(users)
    n_t = scenario.n_t
    N = scenario.n_ris
    phi = np.asarray(phi, dtype=complex).reshape(N)
    L = np.asarray(coordinate, dtype=float).reshape(3)

    s_ap = scenario.ap.reference
    ap_off = scenario.ap.offsets
    ris_off = scenario.ris.offsets

    d0_vec = L - s_ap
    d0 = float(np.linalg.norm(d0_vec))
    if d0 <= 0.0:
        raise GeometryError("RIS coordinate coincides with the AP reference")

    n_r = users[0].geometry.n_elements
    h_direct = np.zeros((K, U), dtype=complex)
    H_direct = np.zeros((K, U, n_r, n_t), dtype=complex)
    v_dir = np.zeros((K, U, n_t), dtype=complex)
    r_dir = np.zeros((K, U, n_r), dtype=complex)
    H_gain = np.zeros(K, dtype=complex)
    H_ap_ris = np.zeros((K, N, n_t), dtype=complex)
    v_ris = np.zeros((K, n_t), dtype=complex)
    e_ris = np.zeros((K, N), dtype=complex)
    e_out = np.zeros((K, U, N), dtype=complex)
    r_ris = np.zeros((K, U, n_r), dtype=complex)
    g_cascade = np.zeros((K, U), dtype=complex)
    u_row = np.zeros((K, U, N), dtype=complex)
    G = np.zeros((K, U, n_r, n_t), dtype=complex)
    Z = np.zeros((K, U, n_r, n_t), dtype=complex)

    r_u = np.zeros(U)
    d_u = np.zeros(U)
    for u, spec in enumerate(users):
        d_u[u] = np.linalg.norm(spec.geometry.reference - s_ap)
        r_u[u] = np.linalg.norm(spec.geometry.reference - L)
        if d_u[u] <= 0.0 or r_u[u] <= 0.0:
            raise GeometryError(f"user {u} coincides with the AP or the RIS")

    for k in range(K):
        lam = lams[k]
        kf = radio.absorption[k]
        v_ris[k] = steering_vector(d0_vec, ap_off, lam)
        e_ris[k] = steering_vector(d0_vec, ris_off, lam)
        H_gain[k] = radio.g_t * lam / (4.0 * np.pi * d0) \
            * np.exp(-1j * 2.0 * np.pi * d0 / lam) * np.exp(-0.5 * kf * d0)
        H_ap_ris[k] = H_gain[k] * np.outer(e_ris[k], np.conj(v_ris[k]))
        for u, spec in enumerate(users):
            du_vec = spec.geometry.reference - s_ap
            r_vec = spec.geometry.reference - L
            v_dir[k, u] = steering_vector(du_vec, ap_off, lam)
            r_dir[k, u] = steering_vector(du_vec, spec.geometry.offsets, lam)
            h_direct[k, u] = los_gain(d_u[u], lam, kf, radio.g_t, radio.g_r)
            H_direct[k, u] = h_direct[k, u] * np.outer(r_dir[k, u], np.conj(v_dir[k, u]))
            e_out[k, u] = steering_vector(r_vec, ris_off, lam)
            r_ris[k, u] = steering_vector(r_vec, spec.geometry.offsets, lam)
            g_cascade[k, u] = cascade_gain(r_u[u], d0, lam, kf, radio.g_t, radio.g_r)
            u_row[k, u] = np.conj(e_out[k, u]) * e_ris[k]
            G[k, u] = g_cascade[k, u] * (u_row[k, u] @ phi) \
                * np.outer(r_ris[k, u], np.conj(v_ris[k]))
            Z[k, u] = H_direct[k, u] + G[k, u]

    return ChannelSet(
        wavelengths=lams, phi=phi.copy(), coordinate=L.copy(), d0=d0, r_u=r_u,
        d_u=d_u, h_direct=h_direct, H_direct=H_direct, v_dir=v_dir, r_dir=r_dir,
        H_ap_ris_gain=H_gain, H_ap_ris=H_ap_ris, v_ris=v_ris, e_ris=e_ris,
        e_out=e_out, r_ris=r_ris, g_cascade=g_cascade, u_row=u_row, G=G, Z=Z,
    )


def ris_input_output_powers(ch: ChannelSet, F: list[list[np.ndarray]],
                            phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sub-band power hitting the RIS and power it re-radiates."""
    K = ch.n_subbands
    q_in = np.zeros(K)
    q_out = np.zeros(K)
    mod2 = np.abs(np.asarray(phi, dtype=complex)) ** 2
    for k in range(K):
        Hk = ch.H_ap_ris[k]
        for Fk in F[k]:
            HF = Hk @ Fk
            q_in[k] += float(np.sum(np.abs(HF) ** 2))
            q_out[k] += float(np.sum(mod2[:, None] * np.abs(HF) ** 2))
    return q_in, q_out


def harvested_powers(ch: ChannelSet, F: list[list[np.ndarray]], phi: np.ndarray,
                     eta: np.ndarray, scenario: Scenario) -> tuple[float, np.ndarray]:
    """Harvested power at the RIS and at every EU for precoders F and state phi.

    F is indexed [k][i] over sub-bands and IUs.
    """
    q_in, q_out = ris_input_output_powers(ch, F, phi)
    p_ris = float(np.sum(np.asarray(eta) * (q_in - q_out)))
    eus = scenario.eu_indices
    p_eu = np.zeros(len(eus))
    for j, m in enumerate(eus):
        total = 0.0
        for k in range(ch.n_subbands):
            Zm = ch.Z[k, m]
            for Fk in F[k]:
                total += eta[k] * float(np.sum(np.abs(Zm @ Fk) ** 2))
        p_eu[j] = total
    return p_ris, p_eu


def dump_channels_csv(ch: ChannelSet, path: str) -> None:
    """Write the composite per-sub-band matrices to CSV for inspection.

    One row per (subband, user, rx, tx) entry: k,u,row,col,re,im.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("subband,user,rx,tx,re,im\n")
        K, U, n_r, n_t = ch.Z.shape
        for k in range(K):
            for u in range(U):
                for a in range(n_r):
                    for b in range(n_t):
                        z = ch.Z[k, u, a, b]
                        fh.write(f"{k},{u},{a},{b},{z.real!r},{z.imag!r}\n")
