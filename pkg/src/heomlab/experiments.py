"""End-to-end Ramsey and CPMG experiments with fidelity observables.

Echo fidelity convention: W_n = 2 F(rho_prep, rho_final) - 1, the
fidelity contrast against the prepared state (for the pure |+>
reference, W = 2 Re rho01 + rho00 + rho11 - 1).  W0 = 1 in
instantaneous-prep mode.  chi = -ln(W/W0), eps = 1 - W/W0, so
chi = -ln(1 - eps) holds identically.

Filter-function infidelity follows the first-order perturbation
integral eps_FF = (units_scale/pi^2) Int S(w) |F(w)|^2 dw with
F(w) = w * Int y(t) e^{iwt} dt over the toggling sign profile y = +-1
on free-evolution spans (0 inside pulses).  units_scale defaults to
1e-9 (PSD read per hertz with band frequencies in rad/ns); pass 1.0
for the literal rad/ns integral.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bathkit, heomcore, pulseforge
from .bathkit import BathSpec, ExponentialBathFit, T2StarNotFoundError
from .heomcore import (HierarchyConfig, LindbladConfig, SystemModel,
                       system_model)

REALIZATIONS = ("standard", "vppu", "ideal")
SOLVERS = ("heom", "lindblad")


def _check_density(rho, name):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(rho, rho.conj().T, atol=1e-8):
        raise ValueError(f"{name} must be Hermitian")
    ev = np.linalg.eigvalsh(rho)
    if ev.min() < -1e-9:
        raise ValueError(f"{name} has negative eigenvalue {ev.min():.2e}")
    if abs(np.trace(rho).real - 1.0) > 1e-6:
        raise ValueError(f"{name} must have unit trace")
    return rho


def uhlmann_fidelity(rho, sigma) -> float:
    """[Tr sqrt(sqrt(rho) sigma sqrt(rho))]^2 by eigendecomposition."""
    rho = _check_density(rho, "rho")
    sigma = _check_density(sigma, "sigma")
    w, U = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    root = (U * np.sqrt(w)) @ U.conj().T
    inner = root @ sigma @ root
    ev = np.linalg.eigvalsh(inner)
    return float(np.sum(np.sqrt(np.clip(ev, 0.0, None))) ** 2)


def population_fidelity(rho, sigma) -> float:
    """sum_i <i|rho|i><i|sigma|i> on the computational basis."""
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    return float(np.real(np.sum(np.diag(rho) * np.diag(sigma))))


def fidelity_contrast(rho_ref, rho) -> float:
    """W = 2 F - 1 against the prepared reference state."""
    return 2.0 * uhlmann_fidelity(rho_ref, rho) - 1.0


@dataclass(frozen=True)
class RamseyResult:
    times: np.ndarray
    coherence: np.ndarray
    t2_star: float | None
    solver: str
    prep: str
    diagnostics: dict | None = None


def run_ramsey(model: SystemModel, bath, config: HierarchyConfig | None = None,
               total: float = 500.0, n_points: int = 251,
               prep: str = "instant", bath_spec: BathSpec | None = None,
               require_crossing: bool = True) -> RamseyResult:
    """Free-precession coherence decay and its 1/e time.

    bath is an ExponentialBathFit (hierarchy solver) or LindbladConfig
    (reference solver).  The coherence observable is 2|rho01|(t); T2*
    is its 1/e crossing relative to the post-preparation value, timed
    from the end of the preparation pulse.  With
    bath_spec given, Gaussianity diagnostics (curvature ratio at T2*/2
    and short-time curvature) are attached.
    """
    if prep not in ("instant", "pipeline"):
        raise ValueError("prep must be 'instant' or 'pipeline'")
    if config is None:
        config = HierarchyConfig()
    tl = np.linspace(0.0, total, n_points)
    if prep == "pipeline":
        _, pulses = pulseforge.build_ramsey(total, True)
        drive = pulseforge.drive_segments(pulses, total)
        rho0 = np.zeros((model.d, model.d), complex)
        rho0[0, 0] = 1.0
        t_ref = pulses[0].end
    else:
        drive = None
        rho0 = heomcore.plus_state(model.d)
        t_ref = 0.0
    if isinstance(bath, LindbladConfig):
        rhos = heomcore.evolve_lindblad(model, bath, drive, rho0, tl)
        solver = "lindblad"
    else:
        rhos = heomcore.evolve_heom(model, bath, drive, config, rho0, tl)
        solver = "heom"
    coh = 2.0 * np.abs(rhos[:, 0, 1])
    ref = np.interp(t_ref, tl, coh) if t_ref > 0 else coh[0]
    target = ref / math.e
    t2 = None
    mask = tl >= t_ref
    cseg = coh[mask]
    tseg = tl[mask]
    below = np.flatnonzero(cseg <= target)
    if below.size and below[0] > 0:
        k = below[0]
        t2 = float(np.interp(target, [cseg[k], cseg[k - 1]],
                             [tseg[k], tseg[k - 1]])) - t_ref
    if t2 is None and require_crossing:
        raise T2StarNotFoundError(
            f"coherence never reached 1/e within {total} ns",
            horizon=total)
    diagnostics = None
    if bath_spec is not None and t2 is not None:
        diagnostics = {
            "gc_ratio_half_t2": bathkit.gc_ratio(bath_spec, t2 / 2.0),
            "gc_curvature": bathkit.gc_curvature(bath_spec),
        }
    return RamseyResult(tl, coh, t2, solver, prep, diagnostics)


@dataclass(frozen=True)
class CpmgPoint:
    n_pi: int
    W: float | None
    eps: float | None
    chi: float | None
    rho00: float | None
    rho11: float | None
    rho22_max: float | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class CpmgScan:
    scheme: str
    realization: str
    solver: str
    t_pi: float
    tau: float
    points: tuple
    bath_digest: str
    config_digest: str
    prep: str = "plus"

    def ok_points(self):
        return [p for p in self.points if p.ok]

    def to_csv(self, path) -> None:
        """CSV of successful points plus a JSON manifest sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n_pi", "W", "eps", "chi", "rho00", "rho11",
                        "rho22max"])
            for p in self.ok_points():
                w.writerow([p.n_pi] + [repr(float(v)) for v in
                                       (p.W, p.eps, p.chi, p.rho00,
                                        p.rho11, p.rho22_max)])
        manifest = {
            "scheme": self.scheme, "realization": self.realization,
            "solver": self.solver, "prep": self.prep,
            "t_pi_ns": self.t_pi, "tau_ns": self.tau,
            "bath": self.bath_digest,
            "config": self.config_digest, "seed": None,
            "errors": {p.n_pi: p.error for p in self.points
                       if not p.ok},
        }
        path.with_suffix(".json").write_text(
            json.dumps(manifest, indent=1) + "\n")


def _digest(obj) -> str:
    return hashlib.sha256(repr(obj).encode()).hexdigest()[:16]


def _bath_digest(bath) -> str:
    if isinstance(bath, LindbladConfig):
        return _digest(("lindblad", bath.gamma_phi, bath.t1))
    return _digest(("fit", tuple(bath.modes), bath.t_max))


def _cpmg_drive(pulses, total, realization):
    if realization == "ideal":
        return pulseforge.drive_segments(pulses, total)
    if realization == "standard":
        return pulseforge.generate_standard(pulses, 8.0, total=total)
    if realization == "vppu":
        return pulseforge.generate_vppu(pulses, total=total)
    raise ValueError(f"unknown realization {realization!r}")


def _prep_vector(scheme: str, prep: str, d: int):
    """Prepared superposition; 'axis' aligns it with the pulse axis.

    'plus' is the fixed |+> preparation the breakdown experiments use.
    'axis' prepares along the scheme's first pulse axis, the d=2
    control convention: diagonal coupling then makes X- and Y-CPMG
    trajectories equal up to a frame rotation.
    """
    if prep not in ("plus", "axis"):
        raise ValueError("prep must be 'plus' or 'axis'")
    phase = 0.0
    if prep == "axis" and scheme == "y":
        phase = math.pi / 2.0
    psi = np.zeros(d, complex)
    psi[0] = 1.0 / math.sqrt(2.0)
    psi[1] = np.exp(1j * phase) / math.sqrt(2.0)
    return psi


def run_cpmg_scan(scheme: str, n_list=(2, 4, 6, 8, 10),
                  realization: str = "standard", solver: str = "heom",
                  *, model: SystemModel | None = None, bath=None,
                  config: HierarchyConfig | None = None,
                  t_pi: float = 80.0, tau: float = 120.0,
                  amplitude: float | None = None,
                  checkpoint_dt: float = 10.0,
                  prep: str = "plus") -> CpmgScan:
    """CPMG scan over pulse numbers; per-point failures are recorded.

    Each point compiles the schedule, evolves from the prepared
    superposition, and records the end-of-sequence fidelity contrast
    W_n against it, populations, and the trajectory maximum of rho22.
    """
    if not n_list:
        raise ValueError("n list must be nonempty")
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}")
    if realization not in REALIZATIONS:
        raise ValueError(f"unknown realization {realization!r}")
    if model is None:
        model = system_model()
    if bath is None:
        raise ValueError("bath (fit or LindbladConfig) is required")
    if config is None:
        config = HierarchyConfig()
    if amplitude is None:
        amplitude = pulseforge.calibrate_pi_amplitude(
            t_pi, d=model.d, alpha=model.alpha)
    psi = _prep_vector(scheme, prep, model.d)
    rho0 = np.outer(psi, psi.conj())
    points = []
    for n in n_list:
        total = n * (t_pi + tau)
        try:
            pulses = pulseforge.build_cpmg(scheme, n, t_pi, tau,
                                           amplitude=amplitude)
            drive = _cpmg_drive(pulses, total, realization)
            tl = np.arange(checkpoint_dt, total + 1e-9, checkpoint_dt)
            if abs(tl[-1] - total) > 1e-9:
                tl = np.append(tl, total)
            if solver == "lindblad":
                if not isinstance(bath, LindbladConfig):
                    raise ValueError("lindblad solver needs a "
                                     "LindbladConfig bath")
                rhos = heomcore.evolve_lindblad(model, bath, drive,
                                                rho0, tl)
            else:
                rhos = heomcore.evolve_heom(model, bath, drive, config,
                                            rho0, tl)
            rf = rhos[-1]
            W = float(np.real(psi.conj() @ rf @ psi) * 2.0 - 1.0)
            if W <= 0:
                raise ArithmeticError(
                    f"nonpositive contrast W = {W:.3e}")
            eps = 1.0 - W
            chi = -math.log(W)
            r22 = (float(np.max(rhos[:, 2, 2].real))
                   if model.d > 2 else 0.0)
            points.append(CpmgPoint(n, W, eps, chi,
                                    float(rf[0, 0].real),
                                    float(rf[1, 1].real), r22))
        except (heomcore.IntegrationError, heomcore.StabilityError,
                ArithmeticError) as exc:
            points.append(CpmgPoint(n, None, None, None, None, None,
                                    None, error=str(exc)))
    return CpmgScan(scheme, realization, solver, t_pi, tau,
                    tuple(points), _bath_digest(bath),
                    _digest((config.depth, config.n_modes, config.atol,
                             config.rtol, config.terminator)), prep)


def population_asymmetry(scan: CpmgScan) -> float:
    """Mean |rho00 - rho11| over the scan's end-of-sequence points."""
    pts = scan.ok_points()
    if not pts:
        raise ValueError("scan has no successful points")
    return float(np.mean([abs(p.rho00 - p.rho11) for p in pts]))


@dataclass(frozen=True)
class FfResult:
    sequence_id: str
    infidelity: float
    peak_omega: float
    band_mass: float


def _toggling_profile(drive, total: float):
    """(t0, t1, y) spans: y = +-1 on free evolution, 0 inside pulses.

    The sign flips once per contiguous on-run, so a pi pulse split
    into abutting sub-segments still counts as a single inversion.
    """
    segs = heomcore._drive_segments(drive, total)
    runs = []
    for (t0, t1, i, q) in segs:
        on = i != 0.0 or q != 0.0
        if runs and runs[-1][2] == on:
            runs[-1] = (runs[-1][0], t1, on)
        else:
            runs.append((t0, t1, on))
    spans = []
    sign = 1.0
    for (t0, t1, on) in runs:
        if on:
            spans.append((t0, t1, 0.0))
            sign = -sign
        else:
            spans.append((t0, t1, sign))
    return spans


def _transfer_sq(spans, omega):
    """|F(w)|^2 with F = w Int y e^{iwt} dt = -i sum y (e^{iwb}-e^{iwa})."""
    w = np.asarray(omega, dtype=float)
    F = np.zeros(w.shape, complex)
    for (a, b, y) in spans:
        if y == 0.0:
            continue
        F += -1j * y * (np.exp(1j * w * b) - np.exp(1j * w * a))
    return np.abs(F) ** 2


def ff_infidelity(drive, spec: BathSpec, total: float | None = None,
                  units_scale: float = 1e-9,
                  abs_tol: float = 1e-12) -> FfResult:
    """First-order filter-function infidelity of a sequence.

    drive: Waveform, segment list, or None (Ramsey idle); total is
    required when the drive does not fix it.  See the module docstring
    for the units_scale convention.
    """
    if total is None:
        if isinstance(drive, pulseforge.Waveform):
            total = drive.i_samples.size * drive.dt
        elif isinstance(drive, (list, tuple)) and drive:
            total = float(drive[-1][1])
        else:
            raise ValueError("need total when drive does not define it")
    spans = _toggling_profile(drive, total)
    seq_id = _digest(tuple(spans))
    if spec.eta == 0.0:
        return FfResult(seq_id, 0.0, 0.0, 0.0)

    def integrand(w):
        return (bathkit.symmetrized_psd(spec, w)
                * _transfer_sq(spans, w))

    lo, hi = bathkit._integration_band(spec)
    val, _ = bathkit._adaptive_integral(integrand, lo, hi, total,
                                        abs_tol)
    mass = float(np.real(val))
    wg = np.geomspace(lo, hi, 4001)
    vals = integrand(wg)
    peak = float(wg[np.argmax(vals)])
    eps = units_scale * mass / np.pi**2
    return FfResult(seq_id, float(max(eps, 0.0)), peak, float(mass))


def qutrit_breakdown_estimate(alpha: float, t_pi: float) -> dict:
    """Leakage-driven Y-CPMG breakdown indicators.

    zeta = pi/(t_pi |alpha|); the per-pulse Y redistribution scale is
    sqrt(2) zeta |sin(|alpha| t_pi / 2)|; monotone decay is predicted
    for zeta >= 0.3.
    """
    if alpha == 0.0:
        raise ValueError("alpha must be nonzero")
    if not t_pi > 0:
        raise ValueError("t_pi must be > 0")
    zeta = math.pi / (t_pi * abs(alpha))
    scale = math.sqrt(2.0) * zeta * abs(math.sin(abs(alpha) * t_pi / 2.0))
    return {"zeta": zeta, "delta_rho_y_scale": scale,
            "predicted_monotone": zeta >= 0.3}


def fit_floquet_coefficients(eigvals, ns, chis):
    """Real least-squares coefficients of W(n) = sum c_k lambda_k^n."""
    lam = np.asarray(eigvals, dtype=complex)
    ns = np.asarray(ns, dtype=float)
    W = np.exp(-np.asarray(chis, dtype=float))
    A = np.real(lam[None, :] ** ns[:, None])
    c, *_ = np.linalg.lstsq(A, W, rcond=None)
    return c


def floquet_transient_model(eigvals, coeffs, n_list) -> dict:
    """Two-eigenvalue transient: chi(n) and local exponents.

    chi(n) = -ln|sum_k c_k lambda_k^n|; gamma_eff is the local
    log-log slope of chi against n.
    """
    lam = np.asarray(eigvals, dtype=complex)
    c = np.asarray(coeffs, dtype=complex)
    if lam.size < 2 or c.size != lam.size:
        raise ValueError("need >= 2 eigenpairs with matching "
                         "coefficients")
    ns = np.asarray(n_list, dtype=float)
    if ns.size < 2:
        raise ValueError("need >= 2 evaluation points")
    if (abs(abs(lam[0]) - abs(lam[1])) < 1e-12
            and np.real(c[0] * np.conj(c[1])) < 0):
        warnings.warn("degenerate eigenvalue moduli with opposing "
                      "coefficients; chi(n) is ill-conditioned",
                      RuntimeWarning, stacklevel=2)
    Wn = np.abs(np.sum(c[None, :] * lam[None, :] ** ns[:, None],
                       axis=1))
    chi = -np.log(Wn)
    ln_n = np.log(ns)
    with np.errstate(invalid="ignore", divide="ignore"):
        ln_chi = np.where(chi > 0.0, np.log(np.abs(chi)), np.nan)
    gamma = np.empty_like(chi)
    gamma[1:-1] = ((ln_chi[2:] - ln_chi[:-2])
                   / (ln_n[2:] - ln_n[:-2]))
    gamma[0] = (ln_chi[1] - ln_chi[0]) / (ln_n[1] - ln_n[0])
    gamma[-1] = (ln_chi[-1] - ln_chi[-2]) / (ln_n[-1] - ln_n[-2])
    return {"n": ns, "chi": chi, "gamma_eff": gamma}
