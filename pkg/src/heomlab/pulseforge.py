"""Gate-to-waveform lowering for the qutrit control pipeline.

Two generation routes produce time-domain I/Q envelopes from pulse
schedules: an analytic route that samples rectangular envelopes at full
float precision, and a hardware-model route that pushes the schedule
through amplitude encoding, per-pulse phase quantization, clock-grid
timing truncation, zero-order-hold upsampling, and an optional uniform
DAC stage.

Units: times ns, amplitudes rad/ns, phases rad.  The drive Hamiltonian
convention is H_d = I(t) X_q + Q(t) Y_q with ladder couplings
sqrt(n+1), so a resonant two-level rotation accumulates angle
2 * integral(Omega dt).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

# Device anharmonicity of the modeled transmon-like qutrit, rad/ns
# (-2*pi * 0.293).  Calibration and closed-system propagators default
# to this value.
DEFAULT_ANHARMONICITY = -2.0 * np.pi * 0.293

RX90_DURATION = 40.0
NATIVE_GATES = ("I", "Z", "RZ", "RX90", "CZ", "MEASURE")

_TIME_EPS = 1e-9


class ScheduleError(ValueError):
    """Pulse schedule is overlapping, unordered, or infeasible."""


class CalibrationError(RuntimeError):
    """Amplitude calibration failed to bracket or converge."""


@dataclass(frozen=True)
class GateOp:
    """One native-gate instruction.

    phase carries the RZ angle or the pulse framing phase; start is the
    scheduled time in ns.
    """

    name: str
    phase: float = 0.0
    start: float = 0.0

    def __post_init__(self):
        if self.name not in NATIVE_GATES:
            raise ValueError(f"unknown gate {self.name!r}; "
                             f"native set is {NATIVE_GATES}")
        if not math.isfinite(self.phase) or not math.isfinite(self.start):
            raise ValueError("gate phase and start must be finite")
        if self.start < 0:
            raise ValueError("gate start must be >= 0")


@dataclass(frozen=True)
class PulseSpec:
    """Rectangular pulse: duration and start in ns, amplitude rad/ns."""

    duration: float
    amplitude: float
    phase: float
    start: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("pulse duration must be > 0")
        if self.start < 0:
            raise ValueError("pulse start must be >= 0")
        for v in (self.duration, self.amplitude, self.phase, self.start):
            if not math.isfinite(v):
                raise ValueError("pulse fields must be finite")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class SequenceSpec:
    """Named experiment schedule; total_time is derived for CPMG."""

    kind: str
    scheme: str | None
    n_pi: int
    t_pi: float
    tau: float
    total_time: float

    def __post_init__(self):
        if self.kind not in ("ramsey", "cpmg"):
            raise ValueError("kind must be 'ramsey' or 'cpmg'")
        if self.kind == "cpmg":
            if self.scheme not in ("x", "y", "xy4"):
                raise ValueError("cpmg scheme must be x, y, or xy4")
            want = self.n_pi * (self.t_pi + self.tau)
            if abs(self.total_time - want) > 1e-9 * max(1.0, want):
                raise ValueError("total_time != n_pi*(t_pi + tau)")

    def to_json_obj(self) -> dict:
        return {"kind": self.kind, "scheme": self.scheme,
                "n_pi": self.n_pi, "t_pi_ns": self.t_pi,
                "tau_ns": self.tau}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SequenceSpec":
        kind = obj["kind"]
        n_pi = int(obj.get("n_pi", 0))
        t_pi = float(obj.get("t_pi_ns", 0.0))
        tau = float(obj.get("tau_ns", 0.0))
        if kind == "cpmg":
            total = n_pi * (t_pi + tau)
        else:
            total = float(obj.get("total_ns", tau))
        return cls(kind=kind, scheme=obj.get("scheme"), n_pi=n_pi,
                   t_pi=t_pi, tau=tau, total_time=total)


def save_sequences(specs, path) -> None:
    """Write a JSON list of {kind, scheme, n_pi, t_pi_ns, tau_ns}."""
    Path(path).write_text(
        json.dumps([s.to_json_obj() for s in specs], indent=1) + "\n")


def load_sequences(path):
    objs = json.loads(Path(path).read_text())
    return [SequenceSpec.from_json_obj(o) for o in objs]


@dataclass(frozen=True)
class Waveform:
    """Sampled I/Q envelope pair on a uniform grid of spacing dt ns."""

    i_samples: np.ndarray
    q_samples: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        i = np.asarray(self.i_samples, dtype=float)
        q = np.asarray(self.q_samples, dtype=float)
        if i.shape != q.shape or i.ndim != 1:
            raise ValueError("i and q must be equal-length 1-D sequences")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not (np.all(np.isfinite(i)) and np.all(np.isfinite(q))):
            raise ValueError("waveform samples must be finite")
        i.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "i_samples", i)
        object.__setattr__(self, "q_samples", q)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.i_samples.size) * self.dt

    def energy(self) -> float:
        """integral (I^2 + Q^2) dt over the sampled window."""
        return float(np.sum(self.i_samples**2 + self.q_samples**2) * self.dt)

    def to_csv(self, path) -> None:
        """CSV with header t_ns,i,q plus a sidecar .json meta block."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_ns", "i", "q"])
            for n, (iv, qv) in enumerate(zip(self.i_samples,
                                             self.q_samples)):
                w.writerow([repr(n * self.dt), repr(float(iv)),
                            repr(float(qv))])
        side = {"route": self.meta.get("route", "standard"),
                "bits": self.meta.get("dac_bits"),
                "clock": self.meta.get("clock_ns"),
                "dt_ns": self.dt}
        side.update({k: v for k, v in self.meta.items()
                     if k not in ("route", "dac_bits", "clock_ns")})
        path.with_suffix(".json").write_text(json.dumps(side, indent=1)
                                             + "\n")

    @classmethod
    def from_csv(cls, path) -> "Waveform":
        path = Path(path)
        ts, iv, qv = [], [], []
        with path.open() as fh:
            r = csv.reader(fh)
            header = next(r)
            if header[:3] != ["t_ns", "i", "q"]:
                raise ValueError("expected header t_ns,i,q")
            for row in r:
                ts.append(float(row[0]))
                iv.append(float(row[1]))
                qv.append(float(row[2]))
        meta = {}
        side = path.with_suffix(".json")
        if side.exists():
            raw = json.loads(side.read_text())
            meta = {"route": raw.get("route", "standard"),
                    "dac_bits": raw.get("bits"),
                    "clock_ns": raw.get("clock")}
        dt = ts[1] - ts[0] if len(ts) > 1 else 1.0
        return cls(np.array(iv), np.array(qv), dt, meta)


def _check_disjoint(pulses) -> list:
    """Time-order the schedule and reject overlaps."""
    seq = sorted(pulses, key=lambda p: p.start)
    for a, b in zip(seq, seq[1:]):
        if a.end > b.start + _TIME_EPS:
            raise ScheduleError(
                f"pulses overlap: [{a.start}, {a.end}) and "
                f"[{b.start}, {b.end})")
    return seq

def drive_matrices(d: int, alpha: float = DEFAULT_ANHARMONICITY):
    """Ladder drive quadratures X_q, Y_q and the static H0 = alpha|2><2|."""
    if d < 2:
        raise ValueError("need d >= 2 levels")
    Xq = np.zeros((d, d), complex)
    Yq = np.zeros((d, d), complex)
    for n in range(d - 1):
        g = math.sqrt(n + 1.0)
        Xq[n, n + 1] = Xq[n + 1, n] = g
        Yq[n, n + 1] = -1j * g
        Yq[n + 1, n] = 1j * g
    H0 = np.zeros((d, d), complex)
    if d > 2:
        H0[2, 2] = alpha
    return Xq, Yq, H0


def calibrate_pi_amplitude(t_pi: float, d: int = 3,
                           alpha: float = DEFAULT_ANHARMONICITY) -> float:
    """Rectangular amplitude driving a pi rotation on {|0>,|1>}.

    Maximizes the |0> -> |1> transfer of the closed-system propagator
    exp(-i (H0 + Omega X_q) t_pi) by bounded scalar search around the
    analytic seed pi/t_pi.  d=2 has the closed form pi/(2 t_pi)
    (rotation angle 2*Omega*t).

    Raises CalibrationError when the bounded search cannot improve on
    the bracket interior.
    """
    if not t_pi > 0:
        raise ValueError("t_pi must be > 0")
    if d == 2:
        return np.pi / (2.0 * t_pi)
    Xq, _, H0 = drive_matrices(d, alpha)
    seed = np.pi / t_pi

    def infidelity(om):
        U = expm(-1j * (H0 + om * Xq) * t_pi)
        return -abs(U[1, 0]) ** 2

    lo, hi = 0.35 * seed, 1.3 * seed
    res = minimize_scalar(infidelity, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13 * seed})
    if not res.success or not (lo < res.x < hi):
        raise CalibrationError("pi-amplitude search failed to bracket "
                               f"a maximum in [{lo:.4g}, {hi:.4g}]")
    return float(res.x)


def build_cpmg(scheme: str, n_pi: int, t_pi: float, tau: float,
               amplitude: float | None = None) -> list:
    """CPMG pulse schedule: n_pi centered cells [tau/2][pi][tau/2].

    Each pi pulse is two contiguous RX90 segments of t_pi/2.  Phases:
    0 for x, pi/2 for y, alternating 0, pi/2 for xy4.  Total schedule
    time is n_pi*(t_pi + tau).
    """
    if scheme not in ("x", "y", "xy4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if n_pi < 1:
        raise ValueError("n_pi must be >= 1")
    if not (t_pi > 0 and tau > 0):
        raise ValueError("t_pi and tau must be > 0")
    if amplitude is None:
        amplitude = calibrate_pi_amplitude(t_pi)
    pulses = []
    cell = t_pi + tau
    for k in range(n_pi):
        if scheme == "x":
            phase = 0.0
        elif scheme == "y":
            phase = np.pi / 2
        else:
            phase = 0.0 if k % 2 == 0 else np.pi / 2
        start = k * cell + tau / 2.0
        half = t_pi / 2.0
        pulses.append(PulseSpec(half, amplitude, phase, start))
        pulses.append(PulseSpec(half, amplitude, phase, start + half))
    return pulses


def cpmg_spec(scheme: str, n_pi: int, t_pi: float, tau: float) -> SequenceSpec:
    return SequenceSpec("cpmg", scheme, n_pi, t_pi, tau,
                        n_pi * (t_pi + tau))


def build_ramsey(total: float, pipeline_prep: bool = False,
                 prep_duration: float = RX90_DURATION,
                 amplitude: float | None = None):
    """Free-precession window, optionally led by one RX90 prep gate.

    Returns (SequenceSpec, pulses).  Without pipeline_prep the drive is
    empty and the caller prepares |+> directly.
    """
    if not total > 0:
        raise ValueError("total must be > 0")
    spec = SequenceSpec("ramsey", None, 0, 0.0, 0.0, total)
    if not pipeline_prep:
        return spec, []
    if total < prep_duration:
        raise ValueError("Ramsey window shorter than the prep gate")
    if amplitude is None:
        # two such segments make a pi pulse
        amplitude = calibrate_pi_amplitude(2.0 * prep_duration)
    return spec, [PulseSpec(prep_duration, amplitude, 0.0, 0.0)]


def lower_gates(gates, amplitude: float | None = None,
                rx90_duration: float = RX90_DURATION) -> list:
    """Lower native GateOps to pulses; Z/RZ become frame-phase updates."""
    frame = 0.0
    pulses = []
    if amplitude is None:
        amplitude = calibrate_pi_amplitude(2.0 * rx90_duration)
    for g in sorted(gates, key=lambda g: g.start):
        if g.name == "RZ":
            frame += g.phase
        elif g.name == "Z":
            frame += np.pi
        elif g.name == "RX90":
            pulses.append(PulseSpec(rx90_duration, amplitude,
                                    g.phase + frame, g.start))
        # I, CZ, MEASURE produce no single-qutrit drive
    return _check_disjoint(pulses)


def generate_standard(pulses, sample_rate: float = 8.0,
                      total: float | None = None) -> Waveform:
    """Sample rectangular envelopes: I = A cos phi, Q = A sin phi.

    The grid covers [0, total) (default: end of the last pulse) at
    sample_rate samples/ns; sample n holds the value at t = n*dt.
    """
    if not sample_rate > 0:
        raise ValueError("sample_rate must be > 0")
    seq = _check_disjoint(pulses)
    if total is None:
        total = seq[-1].end if seq else 0.0
    dt = 1.0 / sample_rate
    n = max(1, int(round(total / dt)))
    t = np.arange(n) * dt
    i = np.zeros(n)
    q = np.zeros(n)
    for p in seq:
        on = (t >= p.start - _TIME_EPS) & (t < p.end - _TIME_EPS)
        i[on] = p.amplitude * np.cos(p.phase)
        q[on] = p.amplitude * np.sin(p.phase)
    return Waveform(i, q, dt, {"route": "standard", "dac_bits": None})


def _round_even(x: np.ndarray | float) -> np.ndarray:
    return np.round(x)


def _encode_amplitude(a: float, bits: int) -> float:
    """Signed fixed-point on [-1, 1] full scale, round-half-even."""
    step = 2.0 ** -(bits - 1)
    k = _round_even(a / step)
    k = np.clip(k, -(2 ** (bits - 1)), 2 ** (bits - 1) - 1)
    return float(k * step)


def _quantize_phase(phi: float, bits: int) -> float:
    step = 2.0 * np.pi / (2.0 ** bits)
    return float(_round_even(phi / step) * step)


def generate_vppu(pulses, amp_bits: int = 15, phase_bits: int = 17,
                  clock_ns: float = 2.0, zoh_factor: int = 16,
                  dac_bits: int | None = None,
                  total: float | None = None) -> Waveform:
    """Hardware-chain route: encode, truncate to the clock grid, ZOH.

    Stages, in order: amplitude to signed amp_bits fixed point on
    [-1, 1]; per-pulse framing phase to phase_bits; start and duration
    truncated down to whole clock_ns cycles; coarse sampling at the
    clock rate; zero-order-hold upsampling by zoh_factor; optional
    mid-tread DAC quantization of the samples.
    """
    if not (amp_bits > 0 and phase_bits > 0 and zoh_factor > 0
            and clock_ns > 0):
        raise ValueError("chain config fields must be positive")
    if dac_bits is not None and not (2 <= dac_bits <= 24):
        raise ValueError("dac_bits must lie in [2, 24]")
    seq = _check_disjoint(pulses)
    encoded = []
    for p in seq:
        start = math.floor(p.start / clock_ns + _TIME_EPS) * clock_ns
        dur = math.floor(p.duration / clock_ns + _TIME_EPS) * clock_ns
        if dur <= 0:
            continue
        encoded.append(PulseSpec(dur, _encode_amplitude(p.amplitude,
                                                        amp_bits),
                                 _quantize_phase(p.phase, phase_bits),
                                 start))
    if total is None:
        total = max((p.end for p in encoded),
                    default=seq[-1].end if seq else clock_ns)
    n_coarse = max(1, int(math.ceil(total / clock_ns - _TIME_EPS)))
    t = np.arange(n_coarse) * clock_ns
    i = np.zeros(n_coarse)
    q = np.zeros(n_coarse)
    for p in encoded:
        on = (t >= p.start - _TIME_EPS) & (t < p.end - _TIME_EPS)
        i[on] = p.amplitude * np.cos(p.phase)
        q[on] = p.amplitude * np.sin(p.phase)
    i = np.repeat(i, zoh_factor)
    q = np.repeat(q, zoh_factor)
    meta = {"route": "vppu", "amp_bits": amp_bits,
            "phase_bits": phase_bits, "clock_ns": clock_ns,
            "zoh_factor": zoh_factor, "dac_bits": None,
            "saturation_count": 0}
    w = Waveform(i, q, clock_ns / zoh_factor, meta)
    if dac_bits is not None:
        w = dac_quantize(w, dac_bits)
    return w


def dac_quantize(w: Waveform, bits: int) -> Waveform:
    """Uniform mid-tread quantizer, step 2^-(bits-1), round-half-even.

    Samples outside [-1, 1] are clamped and counted in
    meta['saturation_count'].  Idempotent at fixed bits.
    """
    if not (2 <= bits <= 24):
        raise ValueError("bits must lie in [2, 24]")
    step = 2.0 ** -(bits - 1)
    sat = 0
    out = []
    for s in (w.i_samples, w.q_samples):
        clipped = np.clip(s, -1.0, 1.0)
        sat += int(np.sum(np.abs(s) > 1.0))
        out.append(_round_even(clipped / step) * step)
    meta = dict(w.meta)
    meta["dac_bits"] = bits
    meta["saturation_count"] = meta.get("saturation_count", 0) + sat
    return Waveform(out[0], out[1], w.dt, meta)


def resample_hold(w: Waveform, sample_rate: float = 50.0) -> Waveform:
    """Nearest-sample hold onto a finer simulation grid."""
    if not sample_rate > 0:
        raise ValueError("sample_rate must be > 0")
    dt = 1.0 / sample_rate
    total = w.i_samples.size * w.dt
    n = int(round(total / dt))
    idx = np.clip(np.round(np.arange(n) * dt / w.dt).astype(int),
                  0, w.i_samples.size - 1)
    meta = dict(w.meta)
    meta["resampled_from_dt"] = w.dt
    return Waveform(w.i_samples[idx], w.q_samples[idx], dt, meta)


def drive_segments(pulses, total: float) -> list:
    """Piecewise-constant (t0, t1, i, q) segments covering [0, total].

    Gaps between pulses become zero-drive segments; used to feed the
    hierarchy integrator exactly (rectangular envelopes need no
    sampling).
    """
    seq = _check_disjoint(pulses)
    segs = []
    cursor = 0.0
    for p in seq:
        if p.start > total + _TIME_EPS:
            break
        if p.start > cursor + _TIME_EPS:
            segs.append((cursor, p.start, 0.0, 0.0))
        end = min(p.end, total)
        if end > p.start + _TIME_EPS:
            segs.append((p.start, end,
                         p.amplitude * math.cos(p.phase),
                         p.amplitude * math.sin(p.phase)))
        cursor = max(cursor, end)
    if cursor < total - _TIME_EPS:
        segs.append((cursor, total, 0.0, 0.0))
    return segs
