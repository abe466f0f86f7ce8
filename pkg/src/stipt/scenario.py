"""Experiment configuration: geometry, radio parameters, and power budgets.

A Scenario is immutable after construction and is the single source of truth
for one experiment: sub-band plan, antenna array layouts, user population and
their power requirements, and the transmit/harvest budgets.  Config files use
the JSON schema tagged "stipt-v1" (see README for the field list).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

SCHEMA_TAG = "stipt-v1"

_AXES = {"x": np.array([1.0, 0.0, 0.0]),
         "y": np.array([0.0, 1.0, 0.0]),
         "z": np.array([0.0, 0.0, 1.0])}


class ScenarioError(ValueError):
    """Raised on config parse or validation failure; message carries the field path."""


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ScenarioError(f"{path}: {msg}")


def _vec3(value, path: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    _require(arr.shape == (3,), path, f"expected a 3-vector, got shape {arr.shape}")
    _require(bool(np.all(np.isfinite(arr))), path, "entries must be finite")
    arr.setflags(write=False)
    return arr


def upa_offsets(rows: int, cols: int, pitch_m: float,
                axes: tuple[str, str] = ("y", "z")) -> np.ndarray:
    """Element offsets of a rows x cols uniform planar array, first element at 0."""
    a1, a2 = _AXES[axes[0]], _AXES[axes[1]]
    out = np.zeros((rows * cols, 3))
    idx = 0
    for r in range(rows):
        for c in range(cols):
            out[idx] = r * pitch_m * a1 + c * pitch_m * a2
            idx += 1
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RadioConfig:
    """Sub-band plan plus gains, absorption, harvesting efficiency, noise."""

    band_start_hz: float
    band_end_hz: float
    subband_count: int
    absorption: tuple[float, ...]  # medium absorption coefficient per sub-band, 1/m
    eta: tuple[float, ...]         # RF-DC harvesting efficiency per sub-band
    noise_power_w: float
    g_t: float
    g_r: float

    def validate(self, path: str = "radio") -> None:
        _require(self.band_end_hz > self.band_start_hz, f"{path}.band_end_hz",
                 "band_end_hz must exceed band_start_hz")
        _require(self.subband_count >= 1, f"{path}.subband_count", "must be >= 1")
        _require(len(self.absorption) == self.subband_count, f"{path}.absorption",
                 f"expected {self.subband_count} entries")
        _require(len(self.eta) == self.subband_count, f"{path}.eta",
                 f"expected {self.subband_count} entries")
        for i, a in enumerate(self.absorption):
            _require(a >= 0.0, f"{path}.absorption[{i}]", "must be >= 0")
        for i, e in enumerate(self.eta):
            _require(0.0 <= e <= 1.0, f"{path}.eta[{i}]", "must lie in [0, 1]")
        _require(self.noise_power_w > 0.0, f"{path}.noise_power_w", "must be > 0")
        _require(self.g_t > 0.0, f"{path}.g_t", "must be > 0")
        _require(self.g_r > 0.0, f"{path}.g_r", "must be > 0")

    @property
    def subband_centers_hz(self) -> np.ndarray:
        width = (self.band_end_hz - self.band_start_hz) / self.subband_count
        k = np.arange(self.subband_count)
        return self.band_start_hz + (k + 0.5) * width

    @property
    def wavelengths_m(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.subband_centers_hz


@dataclass(frozen=True)
class ArrayGeometry:
    """Reference coordinate of the first element plus per-element offsets."""

    reference: np.ndarray          # (3,) m
    offsets: np.ndarray            # (n_elements, 3) m, offsets[0] == 0

    def validate(self, path: str) -> None:
        _require(self.reference.shape == (3,), f"{path}.reference", "expected 3-vector")
        _require(self.offsets.ndim == 2 and self.offsets.shape[1] == 3,
                 f"{path}.offsets", "expected (n, 3) array")
        _require(bool(np.all(np.isfinite(self.offsets))), f"{path}.offsets",
                 "entries must be finite")
        _require(bool(np.all(self.offsets[0] == 0.0)), f"{path}.offsets",
                 "first offset must be the zero vector")

    @property
    def n_elements(self) -> int:
        return self.offsets.shape[0]

    def element_positions(self, reference: Optional[np.ndarray] = None) -> np.ndarray:
        ref = self.reference if reference is None else np.asarray(reference, dtype=float)
        return ref[None, :] + self.offsets


IU = "iu"
EU = "eu"


@dataclass(frozen=True)
class UserSpec:
    """One served terminal: an information user (IU) or an energy user (EU)."""

    kind: str
    geometry: ArrayGeometry
    power_req_w: Optional[float] = None   # EU only
    stream_count: Optional[int] = None    # IU only

    def validate(self, path: str, n_t: int) -> None:
        _require(self.kind in (IU, EU), f"{path}.kind", "must be 'iu' or 'eu'")
        self.geometry.validate(f"{path}.geometry")
        if self.kind == IU:
            _require(self.power_req_w is None, f"{path}.power_req_w",
                     "not allowed for an IU")
            _require(self.stream_count is not None and self.stream_count >= 1,
                     f"{path}.stream_count", "IU needs a positive stream count")
            _require(self.stream_count <= min(self.geometry.n_elements, n_t),
                     f"{path}.stream_count",
                     "must not exceed min(receive antennas, transmit antennas)")
        else:
            _require(self.stream_count is None, f"{path}.stream_count",
                     "not allowed for an EU")
            _require(self.power_req_w is not None and self.power_req_w >= 0.0,
                     f"{path}.power_req_w", "EU needs a nonnegative power requirement")


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one experiment."""

    radio: RadioConfig
    ap: ArrayGeometry
    ris: ArrayGeometry                 # reference is the initial RIS coordinate
    users: tuple[UserSpec, ...]
    p_t_max_w: float
    p_ris_req_w: float
    ris_box: Optional[tuple[np.ndarray, np.ndarray]] = None
    penalty_fraction: float = 0.01
    rng_seed: int = 0

    def validate(self) -> None:
        self.radio.validate()
        self.ap.validate("ap")
        self.ris.validate("ris")
        _require(self.p_t_max_w > 0.0, "p_t_max_w", "must be > 0")
        _require(self.p_ris_req_w >= 0.0, "p_ris_req_w", "must be >= 0")
        _require(self.penalty_fraction > 0.0, "penalty_fraction", "must be > 0")
        n_t = self.ap.n_elements
        n_iu = 0
        for u, spec in enumerate(self.users):
            spec.validate(f"users[{u}]", n_t)
            n_iu += spec.kind == IU
        _require(n_iu >= 1, "users", "at least one IU is required")
        if self.ris_box is not None:
            lo, hi = self.ris_box
            _require(bool(np.all(lo <= hi)), "ris_box", "min must be <= max per axis")
            _require(bool(np.all(lo <= self.ris.reference))
                     and bool(np.all(self.ris.reference <= hi)),
                     "ris_box", "box must contain the initial RIS coordinate")

    # -- user bookkeeping -------------------------------------------------

    @property
    def iu_indices(self) -> list[int]:
        return [u for u, s in enumerate(self.users) if s.kind == IU]

    @property
    def eu_indices(self) -> list[int]:
        return [u for u, s in enumerate(self.users) if s.kind == EU]

    @property
    def n_t(self) -> int:
        return self.ap.n_elements

    @property
    def n_ris(self) -> int:
        return self.ris.n_elements

    def stream_count(self, u: int) -> int:
        spec = self.users[u]
        if spec.kind != IU:
            raise ValueError(f"user {u} is not an IU")
        return int(spec.stream_count)

    def eu_power_req(self) -> np.ndarray:
        return np.array([self.users[m].power_req_w for m in self.eu_indices])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _geometry_to_dict(g: ArrayGeometry) -> dict:
    return {"reference": g.reference.tolist(), "offsets": g.offsets.tolist()}


def _geometry_from_dict(d: dict, path: str) -> ArrayGeometry:
    _require(isinstance(d, dict), path, "expected an object")
    _require("reference" in d, f"{path}.reference", "missing")
    ref = _vec3(d["reference"], f"{path}.reference")
    if "upa" in d:
        upa = d["upa"]
        for key in ("rows", "cols", "pitch_m"):
            _require(key in upa, f"{path}.upa.{key}", "missing")
        axes = tuple(upa.get("axes", ("y", "z")))
        _require(len(axes) == 2 and all(a in _AXES for a in axes),
                 f"{path}.upa.axes", "expected two of 'x', 'y', 'z'")
        offsets = upa_offsets(int(upa["rows"]), int(upa["cols"]),
                              float(upa["pitch_m"]), axes)  # type: ignore[arg-type]
    else:
        _require("offsets" in d, f"{path}.offsets", "missing (or provide 'upa')")
        offsets = np.asarray(d["offsets"], dtype=float)
        _require(offsets.ndim == 2 and offsets.shape[1] == 3, f"{path}.offsets",
                 "expected a list of 3-vectors")
        offsets.setflags(write=False)
    return ArrayGeometry(reference=ref, offsets=offsets)


def scenario_to_dict(s: Scenario) -> dict:
    users = []
    for spec in s.users:
        entry: dict = {"kind": spec.kind}
        entry.update(_geometry_to_dict(spec.geometry))
        if spec.kind == IU:
            entry["stream_count"] = spec.stream_count
        else:
            entry["power_req_w"] = spec.power_req_w
        users.append(entry)
    out = {
        "schema": SCHEMA_TAG,
        "radio": {
            "band_start_hz": s.radio.band_start_hz,
            "band_end_hz": s.radio.band_end_hz,
            "subband_count": s.radio.subband_count,
            "absorption": list(s.radio.absorption),
            "eta": list(s.radio.eta),
            "noise_power_w": s.radio.noise_power_w,
            "g_t": s.radio.g_t,
            "g_r": s.radio.g_r,
        },
        "ap": _geometry_to_dict(s.ap),
        "ris": _geometry_to_dict(s.ris),
        "users": users,
        "p_t_max_w": s.p_t_max_w,
        "p_ris_req_w": s.p_ris_req_w,
        "ris_box": None if s.ris_box is None else
                   {"min": s.ris_box[0].tolist(), "max": s.ris_box[1].tolist()},
        "penalty_fraction": s.penalty_fraction,
        "rng_seed": s.rng_seed,
    }
    return out


def scenario_from_dict(data: dict) -> Scenario:
    _require(isinstance(data, dict), "$", "top level must be an object")
    _require(data.get("schema") == SCHEMA_TAG, "schema",
             f"expected '{SCHEMA_TAG}', got {data.get('schema')!r}")
    r = data.get("radio")
    _require(isinstance(r, dict), "radio", "missing or not an object")
    for key in ("band_start_hz", "band_end_hz", "subband_count", "absorption",
                "eta", "noise_power_w", "g_t", "g_r"):
        _require(key in r, f"radio.{key}", "missing")
    radio = RadioConfig(
        band_start_hz=float(r["band_start_hz"]),
        band_end_hz=float(r["band_end_hz"]),
        subband_count=int(r["subband_count"]),
        absorption=tuple(float(a) for a in r["absorption"]),
        eta=tuple(float(e) for e in r["eta"]),
        noise_power_w=float(r["noise_power_w"]),
        g_t=float(r["g_t"]),
        g_r=float(r["g_r"]),
    )
    _require("ap" in data, "ap", "missing")
    _require("ris" in data, "ris", "missing")
    ap = _geometry_from_dict(data["ap"], "ap")
    ris = _geometry_from_dict(data["ris"], "ris")
    _require(isinstance(data.get("users"), list) and data["users"], "users",
             "expected a nonempty list")
    users = []
    for u, entry in enumerate(data["users"]):
        path = f"users[{u}]"
        _require(isinstance(entry, dict), path, "expected an object")
        kind = entry.get("kind")
        _require(kind in (IU, EU), f"{path}.kind", "must be 'iu' or 'eu'")
        geom = _geometry_from_dict(entry, path)
        if kind == IU:
            users.append(UserSpec(kind=IU, geometry=geom,
                                  stream_count=int(entry.get("stream_count", 0)) or None))
        else:
            _require("power_req_w" in entry, f"{path}.power_req_w", "missing")
            users.append(UserSpec(kind=EU, geometry=geom,
                                  power_req_w=float(entry["power_req_w"])))
    box = None
    if data.get("ris_box") is not None:
        b = data["ris_box"]
        _require(isinstance(b, dict) and "min" in b and "max" in b, "ris_box",
                 "expected {'min': [...], 'max': [...]}")
        box = (_vec3(b["min"], "ris_box.min"), _vec3(b["max"], "ris_box.max"))
    scn = Scenario(
        radio=radio, ap=ap, ris=ris, users=tuple(users),
        p_t_max_w=float(data.get("p_t_max_w", 0.0)),
        p_ris_req_w=float(data.get("p_ris_req_w", 0.0)),
        ris_box=box,
        penalty_fraction=float(data.get("penalty_fraction", 0.01)),
        rng_seed=int(data.get("rng_seed", 0)),
    )
    scn.validate()
    return scn


def load_scenario(path: str) -> Scenario:
    """Load and validate a stipt-v1 config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"$: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"$: {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(s: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

# Defaults not pinned by the reference setup; see README for rationale.
DEFAULT_ABSORPTION = (0.0033, 0.0052)   # 1/m, per sub-band
DEFAULT_ETA = 0.7
DEFAULT_NOISE_W = 1e-11                 # -80 dBm per sub-band
USER_SQUARE = (0.5, 3.5)                # 3 m square containing users, m
USER_HEIGHT = 1.0                       # m
AP_REFERENCE = (0.0, 0.0, 2.0)          # m
RIS_HEIGHT = 1.0                        # m
RIS_X_RANGE = (0.25, 6.0)               # allowed RIS travel along the x axis, m
ANTENNA_PITCH = 1e-4                    # 0.1 mm element separation


def make_scenario(*, seed: int = 7,
                  iu_count: int = 2,
                  eu_count: int = 2,
                  ap_grid: tuple[int, int] = (5, 10),
                  ris_grid: tuple[int, int] = (10, 10),
                  n_rx: int = 2,
                  streams: int = 2,
                  eu_power_w: float = 1e-4,
                  ris_power_w: float = 1e-4,
                  p_t_max_w: float = 10.0,
                  band_hz: tuple[float, float] = (300e9, 340e9),
                  subband_count: int = 2,
                  absorption: Sequence[float] = DEFAULT_ABSORPTION,
                  eta: float = DEFAULT_ETA,
                  noise_power_w: float = DEFAULT_NOISE_W,
                  g_t: float = 15.0,
                  g_r: float = 6.0) -> Scenario:
    """Parametric scenario with seeded user/RIS placement in the 3 m square."""
    rng = np.random.default_rng(seed)
    radio = RadioConfig(
        band_start_hz=band_hz[0], band_end_hz=band_hz[1],
        subband_count=subband_count,
        absorption=tuple(float(a) for a in absorption[:subband_count]),
        eta=(float(eta),) * subband_count,
        noise_power_w=noise_power_w, g_t=g_t, g_r=g_r,
    )
    ap = ArrayGeometry(reference=_vec3(AP_REFERENCE, "ap.reference"),
                       offsets=upa_offsets(ap_grid[0], ap_grid[1], ANTENNA_PITCH,
                                           axes=("y", "z")))
    lo, hi = USER_SQUARE
    users: list[UserSpec] = []
    for _ in range(iu_count):
        pos = np.array([rng.uniform(lo, hi), rng.uniform(lo, hi), USER_HEIGHT])
        geom = ArrayGeometry(reference=_vec3(pos, "users.reference"),
                             offsets=upa_offsets(1, n_rx, ANTENNA_PITCH, axes=("x", "x")))
        users.append(UserSpec(kind=IU, geometry=geom, stream_count=streams))
    for _ in range(eu_count):
        pos = np.array([rng.uniform(lo, hi), rng.uniform(lo, hi), USER_HEIGHT])
        geom = ArrayGeometry(reference=_vec3(pos, "users.reference"),
                             offsets=upa_offsets(1, n_rx, ANTENNA_PITCH, axes=("x", "x")))
        users.append(UserSpec(kind=EU, geometry=geom, power_req_w=eu_power_w))
    ris_x = rng.uniform(lo, hi)
    ris = ArrayGeometry(reference=_vec3((ris_x, 0.0, RIS_HEIGHT), "ris.reference"),
                        offsets=upa_offsets(ris_grid[0], ris_grid[1], ANTENNA_PITCH,
                                            axes=("x", "z")))
    box = (_vec3((RIS_X_RANGE[0], 0.0, RIS_HEIGHT), "ris_box.min"),
           _vec3((RIS_X_RANGE[1], 0.0, RIS_HEIGHT), "ris_box.max"))
    scn = Scenario(radio=radio, ap=ap, ris=ris, users=tuple(users),
                   p_t_max_w=p_t_max_w, p_ris_req_w=ris_power_w,
                   ris_box=box, penalty_fraction=0.01, rng_seed=seed)
    scn.validate()
    return scn


def default_paper_scenario(seed: int = 7) -> Scenario:
    """Full-size reference setup: 5x10 transmit UPA, 10x10 RIS, 2 IUs + 2 EUs."""
    return make_scenario(seed=seed, ap_grid=(5, 10), ris_grid=(10, 10))


def default_desk_scenario(seed: int = 7, ris_grid: tuple[int, int] = (8, 8)) -> Scenario:
    """Reduced setup (4x4 transmit UPA, 8x8 RIS) for fast experimentation."""
    return make_scenario(seed=seed, ap_grid=(4, 4), ris_grid=ris_grid)
