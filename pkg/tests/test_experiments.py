import json
import math

import numpy as np
import pytest
from mpmath import mp

from heomlab import bathkit, experiments, heomcore, pulseforge
from heomlab.bathkit import T2StarNotFoundError
from heomlab.experiments import (CpmgPoint, ff_infidelity,
                                 fit_floquet_coefficients,
                                 floquet_transient_model,
                                 population_asymmetry,
                                 population_fidelity,
                                 qutrit_breakdown_estimate, run_cpmg_scan,
                                 run_ramsey, uhlmann_fidelity)
from heomlab.heomcore import (HierarchyConfig, LindbladConfig,
                              calibrate_lindblad_rate, system_model)

GAMMA_PHI = calibrate_lindblad_rate(171.712)


def mp_uhlmann(rho, sigma, dps=40):
    """High-precision Uhlmann fidelity, independent of the eigh route."""
    with mp.workdps(dps):
        R = mp.matrix([[mp.mpc(x) for x in row] for row in rho])
        S = mp.matrix([[mp.mpc(x) for x in row] for row in sigma])
        root = mp.sqrtm(R)
        tr = mp.sqrtm(root * S * root)
        val = sum(tr[i, i] for i in range(tr.rows))
        return float((mp.re(val)) ** 2)


def random_density(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


class TestUhlmannFidelity:
    def test_identical_states(self):
        rho = np.diag([0.7, 0.2, 0.1]).astype(complex)
        assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-12)

    def test_classical_diagonal(self):
        rho = np.diag([0.6, 0.4, 0.0]).astype(complex)
        sig = np.diag([0.5, 0.5, 0.0]).astype(complex)
        expected = (math.sqrt(0.3) + math.sqrt(0.2)) ** 2
        assert uhlmann_fidelity(rho, sig) == pytest.approx(expected,
                                                           abs=1e-12)

    def test_pure_states_overlap(self):
        psi = np.array([1.0, 1.0]) / math.sqrt(2.0)
        phi = np.array([1.0, 0.0])
        rho = np.outer(psi, psi).astype(complex)
        sig = np.outer(phi, phi).astype(complex)
        assert uhlmann_fidelity(rho, sig) == pytest.approx(0.5, abs=1e-12)

    def test_matches_high_precision_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            rho = random_density(rng, 3)
            sig = random_density(rng, 3)
            got = uhlmann_fidelity(rho, sig)
            want = mp_uhlmann(rho, sig)
            assert got == pytest.approx(want, abs=1e-10)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        rho = random_density(rng, 3)
        sig = random_density(rng, 3)
        assert uhlmann_fidelity(rho, sig) == pytest.approx(
            uhlmann_fidelity(sig, rho), abs=1e-11)

    def test_rejects_non_hermitian(self):
        rho = np.array([[0.5, 0.3], [0.1, 0.5]], dtype=complex)
        with pytest.raises(ValueError, match="Hermitian"):
            uhlmann_fidelity(rho, np.eye(2) / 2)

    def test_rejects_negative_eigenvalue(self):
        rho = np.array([[1.2, 0.0], [0.0, -0.2]], dtype=complex)
        with pytest.raises(ValueError, match="negative"):
            uhlmann_fidelity(rho, np.eye(2) / 2)

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError, match="trace"):
            uhlmann_fidelity(np.eye(2), np.eye(2) / 2)


class TestPopulationFidelity:
    def test_maximally_mixed_qutrit(self):
        rho = np.eye(3) / 3.0
        assert population_fidelity(rho, rho) == pytest.approx(1.0 / 3.0)

    def test_matching_pure(self):
        rho = np.diag([1.0, 0.0, 0.0]).astype(complex)
        assert population_fidelity(rho, rho) == pytest.approx(1.0)

    def test_ignores_coherences(self):
        plus = heomcore.plus_state(2)
        ground = np.diag([1.0, 0.0]).astype(complex)
        assert population_fidelity(plus, ground) == pytest.approx(0.5)


class TestTogglingProfile:
    def test_idle_is_single_positive_span(self):
        spans = experiments._toggling_profile(None, 100.0)
        assert spans == [(0.0, 100.0, 1.0)]

    def test_cpmg_two_pulse_layout(self):
        pulses = pulseforge.build_cpmg("x", 2, 80.0, 120.0,
                                       amplitude=0.02)
        spans = experiments._toggling_profile(
            pulseforge.drive_segments(pulses, 400.0), 400.0)
        signs = [y for (_, _, y) in spans]
        assert signs == [1.0, 0.0, -1.0, 0.0, 1.0]
        widths = [b - a for (a, b, _) in spans]
        assert widths == pytest.approx([60.0, 80.0, 120.0, 80.0, 60.0])

    def test_waveform_route_matches_segment_route(self):
        pulses = pulseforge.build_cpmg("y", 4, 80.0, 120.0,
                                       amplitude=0.02)
        seg = experiments._toggling_profile(
            pulseforge.drive_segments(pulses, 800.0), 800.0)
        wav = experiments._toggling_profile(
            pulseforge.generate_standard(pulses, 8.0, total=800.0),
            800.0)
        assert [y for *_, y in seg] == [y for *_, y in wav]
        for (a0, b0, _), (a1, b1, _) in zip(seg, wav):
            assert a0 == pytest.approx(a1, abs=1e-9)
            assert b0 == pytest.approx(b1, abs=1e-9)


class TestTransferFunction:
    def test_idle_matches_closed_form(self):
        # |F(w)|^2 = 4 sin^2(wT/2) for free evolution of duration T
        T = 85.856
        spans = experiments._toggling_profile(None, T)
        w = np.geomspace(1e-4, 5.0, 301)
        got = experiments._transfer_sq(spans, w)
        want = 4.0 * np.sin(w * T / 2.0) ** 2
        assert np.max(np.abs(got - want)) < 1e-10

    def test_echo_suppresses_dc(self):
        pulses = pulseforge.build_cpmg("x", 2, 80.0, 120.0,
                                       amplitude=0.02)
        spans = experiments._toggling_profile(
            pulseforge.drive_segments(pulses, 400.0), 400.0)
        w = np.array([1e-6, 1e-5, 1e-4])
        tr = experiments._transfer_sq(spans, w)
        idle = 4.0 * np.sin(w * 400.0 / 2.0) ** 2
        assert np.all(tr < 1e-3 * idle)


class TestFfInfidelity:
    def test_tier0_idle_value(self, tier0_spec):
        res = ff_infidelity(None, tier0_spec, total=85.856)
        assert res.infidelity == pytest.approx(2.4198e-13, rel=2e-3)

    def test_units_scale_is_linear(self, tier0_spec):
        a = ff_infidelity(None, tier0_spec, total=85.856)
        b = ff_infidelity(None, tier0_spec, total=85.856,
                          units_scale=1.0)
        assert b.infidelity == pytest.approx(a.infidelity * 1e9,
                                             rel=1e-12)
        assert b.band_mass == pytest.approx(a.band_mass)

    def test_zero_coupling_is_zero(self, tier0_spec):
        spec = bathkit.BathSpec(eta=0.0,
                                omega_lc=tier0_spec.omega_lc,
                                omega_hc=tier0_spec.omega_hc,
                                temperature=tier0_spec.temperature)
        res = ff_infidelity(None, spec, total=100.0)
        assert res.infidelity == 0.0

    def test_echo_moves_filter_peak_up(self, tier0_spec):
        idle = ff_infidelity(None, tier0_spec, total=400.0)
        pulses = pulseforge.build_cpmg("x", 2, 80.0, 120.0,
                                       amplitude=0.02)
        echo = ff_infidelity(pulseforge.drive_segments(pulses, 400.0),
                             tier0_spec)
        assert echo.peak_omega > idle.peak_omega
        assert 0.0 < echo.infidelity < 1.0

    def test_band_mass_against_dense_grid(self, tier0_spec):
        pulses = pulseforge.build_cpmg("x", 2, 80.0, 120.0,
                                       amplitude=0.02)
        drive = pulseforge.drive_segments(pulses, 400.0)
        res = ff_infidelity(drive, tier0_spec)
        spans = experiments._toggling_profile(drive, 400.0)
        w = np.geomspace(0.0005, 30.0, 200001)
        f = (bathkit.symmetrized_psd(tier0_spec, w)
             * experiments._transfer_sq(spans, w))
        brute = np.trapezoid(f, w)
        assert res.band_mass == pytest.approx(brute, rel=2e-3)

    def test_requires_total_for_idle(self, tier0_spec):
        with pytest.raises(ValueError, match="total"):
            ff_infidelity(None, tier0_spec)


class TestQutritBreakdownEstimate:
    def test_reference_point(self):
        out = qutrit_breakdown_estimate(-0.293, 80.0)
        assert out["zeta"] == pytest.approx(0.134039, rel=1e-4)
        # sqrt(2) * 0.134040 * |sin(11.72)| = sqrt(2)*0.134040*0.748889
        assert out["delta_rho_y_scale"] == pytest.approx(0.14194,
                                                         rel=1e-3)
        assert not out["predicted_monotone"]

    def test_monotone_prediction_table(self):
        expect = {20.0: True, 30.0: True, 40.0: False, 60.0: False,
                  80.0: False}
        for t_pi, mono in expect.items():
            got = qutrit_breakdown_estimate(-0.293, t_pi)
            assert got["predicted_monotone"] is mono, t_pi

    def test_rejects_zero_alpha(self):
        with pytest.raises(ValueError):
            qutrit_breakdown_estimate(0.0, 80.0)

    def test_rejects_bad_duration(self):
        with pytest.raises(ValueError):
            qutrit_breakdown_estimate(-0.293, 0.0)


class TestFloquetTransientModel:
    def test_recovers_synthetic_coefficients(self):
        lam = np.array([0.30, 0.15])
        c_true = np.array([1.4, -0.4])
        ns = np.array([2, 4, 6, 8, 10])
        W = c_true[0] * lam[0] ** ns + c_true[1] * lam[1] ** ns
        chis = -np.log(W)
        c = fit_floquet_coefficients(lam, ns, chis)
        assert c == pytest.approx(c_true, abs=1e-10)

    def test_model_reproduces_series(self):
        lam = [0.30, 0.15]
        c = [1.4, -0.4]
        ns = np.arange(1, 21)
        out = floquet_transient_model(lam, c, ns)
        W = 1.4 * 0.30 ** ns - 0.4 * 0.15 ** ns
        assert out["chi"] == pytest.approx(-np.log(W), abs=1e-12)

    def test_local_exponent_settles_to_one(self):
        # chi(n) -> n ln(1/lam1) is asymptotically linear in n
        out = floquet_transient_model([0.30, 0.15], [1.4, -0.4],
                                      np.arange(1, 40))
        assert out["gamma_eff"][-1] == pytest.approx(1.0, abs=0.02)

    def test_transient_exponent_exceeds_one(self):
        # opposing coefficients produce a super-linear early transient
        out = floquet_transient_model([0.26, 0.18], [4.5, -4.48],
                                      np.arange(2, 16))
        mid = out["gamma_eff"][1:5]
        assert np.all(mid > 1.05)

    def test_degenerate_moduli_warns(self):
        with pytest.warns(RuntimeWarning, match="degenerate"):
            floquet_transient_model([0.3, -0.3], [1.0, -0.9],
                                    np.arange(1, 6))

    def test_argument_errors(self):
        with pytest.raises(ValueError):
            floquet_transient_model([0.3], [1.0], [1, 2, 3])
        with pytest.raises(ValueError):
            floquet_transient_model([0.3, 0.2], [1.0, 0.1], [4])


class TestRunRamseyLindblad:
    def test_t2_star_matches_rate(self):
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        res = run_ramsey(model, lconf, total=400.0, n_points=201)
        assert res.solver == "lindblad"
        assert res.t2_star == pytest.approx(171.712, rel=5e-3)

    def test_no_crossing_raises(self):
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        with pytest.raises(T2StarNotFoundError):
            run_ramsey(model, lconf, total=50.0, n_points=26)

    def test_no_crossing_optional(self):
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        res = run_ramsey(model, lconf, total=50.0, n_points=26,
                         require_crossing=False)
        assert res.t2_star is None
        assert res.coherence[0] == pytest.approx(1.0)

    def test_pipeline_prep_times_from_pulse_end(self):
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        res = run_ramsey(model, lconf, total=400.0, n_points=401,
                         prep="pipeline")
        assert res.prep == "pipeline"
        # decay clock starts when the prep pulse ends
        assert res.t2_star == pytest.approx(171.712, rel=2e-2)

    def test_rejects_unknown_prep(self):
        model = system_model(d=2)
        with pytest.raises(ValueError, match="prep"):
            run_ramsey(model, LindbladConfig(gamma_phi=GAMMA_PHI),
                       prep="warmstart")


@pytest.fixture(scope="module")
def xscan():
    model = system_model(d=2)
    lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
    return run_cpmg_scan("x", (2, 4, 6), realization="ideal",
                         solver="lindblad", model=model, bath=lconf,
                         amplitude=math.pi / 160.0)


class TestRunCpmgScanLindblad:

    def test_markovian_decay_is_linear_in_n(self, xscan):
        chis = np.array([p.chi for p in xscan.points])
        ns = np.array([p.n_pi for p in xscan.points])
        per_pulse = chis / ns
        assert np.ptp(per_pulse) < 1e-6
        assert per_pulse[0] == pytest.approx(GAMMA_PHI * 200.0,
                                             rel=1e-6)

    def test_point_identities(self, xscan):
        for p in xscan.points:
            assert p.ok
            assert p.eps == pytest.approx(1.0 - p.W, abs=1e-12)
            assert p.chi == pytest.approx(-math.log(p.W), abs=1e-12)
            assert p.rho22_max == 0.0

    def test_pure_dephasing_is_symmetric(self, xscan):
        assert population_asymmetry(xscan) < 1e-9

    def test_x_and_y_identical_under_axis_prep(self, xscan):
        # control convention: prepare along the pulse axis, where
        # diagonal coupling makes the schemes frame-equivalent
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        yscan = run_cpmg_scan("y", (2, 4, 6), realization="ideal",
                              solver="lindblad", model=model,
                              bath=lconf, amplitude=math.pi / 160.0,
                              prep="axis")
        for px, py in zip(xscan.points, yscan.points):
            assert abs(px.W - py.W) < 1e-9

    def test_fixed_prep_breaks_xy_equivalence(self):
        # with both schemes prepared in |+>, finite pulses expose the
        # state to dephasing differently per axis; the control must
        # therefore use axis preparation
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        yscan = run_cpmg_scan("y", (2,), realization="ideal",
                              solver="lindblad", model=model,
                              bath=lconf, amplitude=math.pi / 160.0)
        xw = math.exp(-GAMMA_PHI * 400.0)
        assert abs(yscan.points[0].W - xw) > 0.01

    def test_csv_and_manifest(self, xscan, tmp_path):
        out = tmp_path / "scan.csv"
        xscan.to_csv(out)
        rows = out.read_text().strip().split("\n")
        assert rows[0] == "n_pi,W,eps,chi,rho00,rho11,rho22max"
        assert len(rows) == 4
        manifest = json.loads(out.with_suffix(".json").read_text())
        assert manifest["scheme"] == "x"
        assert manifest["realization"] == "ideal"
        assert manifest["solver"] == "lindblad"
        assert manifest["seed"] is None
        assert manifest["errors"] == {}
        # csv floats roundtrip exactly through repr
        w_back = float(rows[1].split(",")[1])
        assert w_back == xscan.points[0].W

    def test_argument_errors(self):
        model = system_model(d=2)
        lconf = LindbladConfig(gamma_phi=GAMMA_PHI)
        with pytest.raises(ValueError, match="scheme"):
            run_cpmg_scan("z", (2,), solver="lindblad", model=model,
                          bath=lconf)
        with pytest.raises(ValueError, match="realization"):
            run_cpmg_scan("x", (2,), realization="exact",
                          solver="lindblad", model=model, bath=lconf)
        with pytest.raises(ValueError, match="solver"):
            run_cpmg_scan("x", (2,), solver="exact", model=model,
                          bath=lconf)
        with pytest.raises(ValueError, match="nonempty"):
            run_cpmg_scan("x", (), solver="lindblad", model=model,
                          bath=lconf)
        with pytest.raises(ValueError, match="bath"):
            run_cpmg_scan("x", (2,), solver="lindblad", model=model)

    def test_lindblad_solver_rejects_fit_bath(self, tier0_fit):
        model = system_model(d=2)
        with pytest.raises(ValueError, match="LindbladConfig"):
            run_cpmg_scan("x", (2,), solver="lindblad", model=model,
                          bath=tier0_fit)


class TestRunCpmgScanHeom:
    def test_qubit_control_trajectory_equality(self, tier0_fit):
        # d=2 frame equivalence holds along the whole trajectory: the
        # y run equals the x run conjugated by the diagonal phase U
        model = system_model(d=2)
        conf = HierarchyConfig()
        amp = pulseforge.calibrate_pi_amplitude(80.0, d=2)
        total = 2 * 200.0
        tl = np.arange(10.0, total + 1e-9, 10.0)
        U = np.diag([1.0, 1j])
        plus = heomcore.plus_state(2)
        dx = pulseforge.drive_segments(
            pulseforge.build_cpmg("x", 2, 80.0, 120.0, amplitude=amp),
            total)
        dy = pulseforge.drive_segments(
            pulseforge.build_cpmg("y", 2, 80.0, 120.0, amplitude=amp),
            total)
        rx = heomcore.evolve_heom(model, tier0_fit, dx, conf, plus, tl)
        ry = heomcore.evolve_heom(model, tier0_fit, dy, conf,
                                  U @ plus @ U.conj().T, tl)
        back = np.einsum("ij,tjk,kl->til", U.conj().T, ry, U)
        assert np.max(np.abs(back - rx)) < 1e-6

    def test_qubit_control_scan_identity(self, tier0_fit):
        model = system_model(d=2)
        amp = pulseforge.calibrate_pi_amplitude(80.0, d=2)
        xs = run_cpmg_scan("x", (2, 4), realization="ideal",
                           solver="heom", model=model, bath=tier0_fit,
                           amplitude=amp, prep="axis")
        ys = run_cpmg_scan("y", (2, 4), realization="ideal",
                           solver="heom", model=model, bath=tier0_fit,
                           amplitude=amp, prep="axis")
        chis = [p.chi for p in xs.points]
        assert chis[1] > chis[0] > 0.0
        for px, py in zip(xs.points, ys.points):
            assert abs(px.W - py.W) < 1e-6

    def test_tier0_two_pulse_point(self, tier0_fit):
        scan = run_cpmg_scan("x", (2,), realization="ideal",
                             solver="heom", bath=tier0_fit)
        p = scan.points[0]
        assert p.ok
        assert p.chi == pytest.approx(0.978, abs=0.01)
        assert p.rho22_max < 5e-3

    def test_realizations_agree_at_default_rates(self, tier0_fit):
        a = run_cpmg_scan("x", (2,), realization="ideal",
                          solver="heom", bath=tier0_fit)
        b = run_cpmg_scan("x", (2,), realization="standard",
                          solver="heom", bath=tier0_fit)
        assert abs(a.points[0].W - b.points[0].W) < 1e-4

    def test_point_failure_is_recorded(self, tmp_path):
        # amplitudes far outside the fit family destabilize the
        # hierarchy; the scan keeps going and records the failure
        bad = bathkit.ExponentialBathFit(
            modes=((5.0 + 0.0j, 1e-4 + 0.0j),
                   (-4.0 + 0.0j, 2e-4 + 0.0j),
                   (1.0 + 0.0j, 3e-4 + 0.0j)),
            fit_order=3, t_max=500.0, residual=0.0)
        scan = run_cpmg_scan("x", (2,), realization="ideal",
                             solver="heom", bath=bad)
        p = scan.points[0]
        assert not p.ok
        assert p.W is None and p.chi is None
        assert p.error
        out = tmp_path / "bad.csv"
        scan.to_csv(out)
        rows = out.read_text().strip().split("\n")
        assert len(rows) == 1
        manifest = json.loads(out.with_suffix(".json").read_text())
        assert "2" in manifest["errors"] or 2 in [
            int(k) for k in manifest["errors"]]


class TestRunRamseyHeom:
    def test_tier0_t2_with_diagnostics(self, tier0_spec, tier0_fit):
        res = run_ramsey(system_model(), tier0_fit, total=250.0,
                         n_points=126, bath_spec=tier0_spec)
        assert res.t2_star == pytest.approx(171.712, rel=0.03)
        assert res.diagnostics["gc_ratio_half_t2"] == pytest.approx(
            3.14, abs=0.1)
        assert res.diagnostics["gc_curvature"] == pytest.approx(
            3.188, abs=0.05)
