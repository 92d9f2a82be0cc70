"""Acceptance criteria, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.
"""
import json
import math
import time

import numpy as np
import pytest

from pxpctl.automaton import BitState, ca_chaotic_step, ca_control_step, ca_h_zz, run_ca_trajectory
from pxpctl.cli import EXIT_OK, main
from pxpctl.config import ExperimentConfig
from pxpctl.control import control_step
from pxpctl.dynamics import ChaoticStepSpec, apply_upxp, apply_usigma, chaotic_step, sample_permutation
from pxpctl.fss import (
    AnsatzForm,
    CollapseAnsatz,
    ScalingDataset,
    collapse,
    dynamic_dataset,
    fit_entropy_decay,
    static_dataset,
)
from pxpctl.harness import aggregate_records, run_ensemble
from pxpctl.hilbert import config_from_string, count_states, enumerate_basis
from pxpctl.magmeter import verify_equivalence
from pxpctl.observables import h_zz, tripartite_mutual_information
from pxpctl.statevec import basis_state
from pxpctl.streams import Streams

pytestmark = pytest.mark.slow

SATURATION = 3 / math.sqrt(5) - 1  # 0.3416...


def brute_force_count(L):
    c = np.arange(2**L, dtype=np.int64)
    rot = ((c >> 1) | ((c & 1) << (L - 1)))
    return int(np.count_nonzero((c & rot) == 0)), c[(c & rot) == 0]


# ------------------------------------------------------------------------ 1


@pytest.mark.criterion(1, "basis dimension equals brute force for L = 4..20 in < 5 s")
def test_basis_counting():
    start = time.perf_counter()
    bases = {L: enumerate_basis(L) for L in range(4, 21, 2)}
    elapsed = time.perf_counter() - start
    for L in range(4, 21):
        n, states = brute_force_count(L)
        assert count_states(L) == n
        if L in bases:
            assert bases[L].dim == n
            assert np.array_equal(np.sort(bases[L].states.astype(np.int64)), states)
    assert elapsed < 5.0


# ------------------------------------------------------------------------ 2


@pytest.mark.criterion(2, "classical p=0, L=300, 1000 samples: H_ZZ(t=L) = 0.3416 +- 0.01")
def test_uncontrolled_saturation():
    cfg = ExperimentConfig(mode="classical", L=300, p=0.0, q=0.2, theta=math.pi / 2, t_max=300,
                           n_samples=1000, master_seed=1)
    s = aggregate_records(run_ensemble(cfg), "h_zz")
    assert s.mean[-1] == pytest.approx(SATURATION, abs=0.01)


# ------------------------------------------------------------------------ 3


def _single_config(state):
    nz = np.flatnonzero(state.amps)
    assert len(nz) == 1, f"{len(nz)} nonzero amplitudes"
    assert abs(abs(state.amps[nz[0]]) - 1.0) < 1e-12
    return int(state.basis.states[nz[0]])


@pytest.mark.criterion(3, "statevector at theta=pi/2 tracks the CA engine on CB inputs, exactly")
@pytest.mark.parametrize("L", [6, 8, 10, 12, 14])
def test_cross_engine_oracle(L):
    basis = enumerate_basis(L)
    spec = ChaoticStepSpec(math.pi / 2)
    for seed in range(100):
        qs, cs = Streams.for_sample(seed, 0), Streams.for_sample(seed, 0)
        c0 = int(basis.states[qs.init.integers(basis.dim)])
        cs.init.integers(basis.dim)
        state, bits = basis_state(basis, c0), BitState.from_config(c0, L)
        for t in range(100):
            uq, uc = qs.coin.random(), cs.coin.random()
            assert uq == uc
            if uq < 0.5:
                _, state = control_step(state, 0.5, qs.site, qs.meas)
                _, bits = ca_control_step(bits, 0.5, cs.site)
            else:
                state = chaotic_step(state, spec, qs.perm)
                bits = ca_chaotic_step(bits, cs.perm)
            assert _single_config(state) == bits.to_config(), (seed, t)
    # the harness drives both engines from the same streams
    q_cfg = ExperimentConfig(L=L, p=0.5, q=0.5, theta=math.pi / 2, t_max=100, n_samples=20)
    for a, b in zip(run_ensemble(q_cfg), run_ensemble(q_cfg.replace(mode="classical"))):
        assert a.initial_config == b.initial_config
        assert np.array_equal(a.choices, b.choices)
        assert np.array_equal(a.series["h_zz"], b.series["h_zz"])


# ------------------------------------------------------------------------ 4


def _orbit(L):
    return [config_from_string(s * (L // 2)) for s in ("00", "01", "10")]


@pytest.mark.criterion(4, "vacuum orbit: period 3, fixed by U_sigma, H_ZZ = 0")
@pytest.mark.parametrize("L", [6, 8, 12, 16])
def test_vacuum_orbit(L):
    basis = enumerate_basis(L)
    orbit = _orbit(L)
    rng = np.random.default_rng(L)
    state = basis_state(basis, orbit[0])
    for t in range(1, 10):
        state = apply_upxp(state)
        assert _single_config(state) == orbit[t % 3]
        assert h_zz(state) == 0.0
        for _ in range(5):
            sigma = sample_permutation(L, rng)
            theta = rng.uniform(0, math.pi)
            before = state.amps.copy()
            state = apply_usigma(state, sigma, theta)
            assert np.array_equal(state.amps, before)
    # the classical engine agrees
    bits = BitState.from_config(orbit[0], L)
    for t in range(1, 10):
        bits = ca_chaotic_step(bits, rng)
        assert bits.to_config() == orbit[t % 3]
        assert ca_h_zz(bits) == 0.0


# ------------------------------------------------------------------------ 5


@pytest.mark.criterion(5, "ancilla magnetization readout equals direct projection for L <= 7")
@pytest.mark.parametrize("L", range(1, 8))
def test_magmeter_equivalence(L):
    report = verify_equivalence(L, 100, seed=100 + L, prob_tol=1e-10, fid_tol=1e-10)
    assert report.max_prob_diff < 1e-10
    assert report.min_fidelity >= 1 - 1e-10
    assert report.passed, str(report)


# ------------------------------------------------------------------------ 6


def absorption_steps(L, seed=11, cap=20):
    """Steps to reach H_ZZ = 0 at p = q = 1, for every CB state of size L."""
    out = {}
    for k, c0 in enumerate(enumerate_basis(L).states):
        s = Streams.for_sample(seed, k)
        hzz, *_ = run_ca_trajectory(BitState.from_config(int(c0), L), 1.0, 1.0, cap, s.coin, s.perm, s.site)
        hit = np.flatnonzero(hzz == 0)
        out[int(c0)] = int(hit[0]) if len(hit) else cap + 1
    return out


@pytest.fixture(scope="module")
def absorption_constant():
    return max(absorption_steps(8).values())


@pytest.mark.criterion(6, "p = q = 1 absorbs every CB state within the L = 8 step count")
@pytest.mark.parametrize("L", [8, 10, 12, 14, 16])
def test_full_control_absorption(L, absorption_constant):
    steps = absorption_steps(L)
    worst = {c: n for c, n in steps.items() if n > absorption_constant}
    assert not worst, f"{len(worst)} states need more than {absorption_constant} steps, e.g. {next(iter(worst))}"


def test_full_control_absorbs_within_three_steps():
    # the bound that does hold over the sizes checked exhaustively
    for L in range(8, 19, 2):
        assert max(absorption_steps(L).values()) <= 3


# ------------------------------------------------------------------------ 7

SIZES_7 = (100, 200, 300)
PS_7 = tuple(np.round(np.arange(0.35, 0.6501, 0.025), 4))


@pytest.fixture(scope="module")
def classical_sweep():
    series = {}
    for L in SIZES_7:
        for p in PS_7:
            cfg = ExperimentConfig(mode="classical", L=L, p=float(p), q=0.2, theta=math.pi / 2, t_max=L,
                                   n_samples=2000, master_seed=2024)
            series[(L, float(p))] = aggregate_records(run_ensemble(cfg), "h_zz")
    return series


@pytest.fixture(scope="module")
def static_fit(classical_sweep):
    data = static_dataset(classical_sweep, lambda L: L**0.86)
    return collapse(data, CollapseAnsatz(AnsatzForm.STATIC), {"p_c": 0.5, "nu": 2.3, "beta": 0.17})


@pytest.mark.criterion(7, "classical transition: p_c in [0.45, 0.53], nu in [1.8, 2.8], z in [0.6, 1.0]")
def test_classical_static_collapse(static_fit):
    print(static_fit.to_text())
    assert static_fit.converged
    assert 0.45 <= static_fit.params["p_c"] <= 0.53
    assert 1.8 <= static_fit.params["nu"] <= 2.8


@pytest.mark.criterion(7, "classical transition: p_c in [0.45, 0.53], nu in [1.8, 2.8], z in [0.6, 1.0]")
def test_classical_dynamic_collapse(classical_sweep, static_fit):
    ratio = static_fit.params["beta"] / static_fit.params["nu"]
    data = dynamic_dataset({L: classical_sweep[(L, 0.5)] for L in SIZES_7}, t_min=5, t_max_of_L=lambda L: L)
    res = collapse(data, CollapseAnsatz(AnsatzForm.DYNAMIC, fixed={"beta_over_nu": ratio}), {"z": 0.8})
    print(res.to_text())
    assert res.converged
    assert 0.6 <= res.params["z"] <= 1.0


# ------------------------------------------------------------------------ 8


@pytest.mark.criterion(8, "quantum property suite (a)-(e)")
@pytest.mark.parametrize("p,perturb", [(0.2, False), (0.5, False), (0.8, False), (0.2, True)])
def test_a_norm_conservation(p, perturb):
    cfg = ExperimentConfig(L=12, p=p, q=0.2, t_max=1000, n_samples=3, perturb=perturb, observables=("norm",))
    for r in run_ensemble(cfg):
        assert np.max(np.abs(r.series["norm"] - 1.0)) <= 1e-10
        assert np.max(np.abs(np.diff(r.series["norm"]))) <= 1e-10


@pytest.mark.criterion(8, "quantum property suite (a)-(e)")
@pytest.mark.parametrize("L", [8, 12, 16])
def test_b_ancilla_purifies(L):
    cfg = ExperimentConfig(L=L, p=0.6, q=0.2, t_max=4 * L, n_samples=200, master_seed=5,
                           initial_state="ancilla_joint", observables=("s_anc",))
    v = np.stack([r.series["s_anc"] for r in run_ensemble(cfg)])
    assert np.max(np.abs(v[:, 0] - 1.0)) <= 1e-10
    blocks = [v[:, 1 + k * L: 1 + (k + 1) * L].mean(axis=1) for k in range(4)]
    means = [b.mean() for b in blocks]
    sems = [b.std() / math.sqrt(len(b)) for b in blocks]
    for k in range(3):
        assert means[k + 1] <= means[k] + 2 * math.hypot(sems[k], sems[k + 1]) + 1e-12
    assert means[0] < 1.0 and means[-1] < 0.01


@pytest.fixture(scope="module")
def half_chain_at_L():
    out = {}
    for p in (0.2, 0.8):
        for L in (12, 16):
            cfg = ExperimentConfig(L=L, p=p, q=0.2, t_max=L, record_every=L, n_samples=200, master_seed=8,
                                   observables=("entropy",))
            s = aggregate_records(run_ensemble(cfg), "entropy")
            out[(p, L)] = (s.mean[-1], s.sem[-1])
    return out


@pytest.mark.criterion(8, "quantum property suite (a)-(e)")
def test_c_phase_separation(half_chain_at_L):
    (a12, e12), (a16, e16) = half_chain_at_L[(0.2, 12)], half_chain_at_L[(0.2, 16)]
    growth = a16 - a12
    assert growth > 3 * math.hypot(e12, e16)
    (b12, _), (b16, _) = half_chain_at_L[(0.8, 12)], half_chain_at_L[(0.8, 16)]
    assert abs(b16 - b12) < 0.25 * growth


@pytest.mark.criterion(8, "quantum property suite (a)-(e)")
@pytest.mark.parametrize("L", [8, 12, 16])
def test_d_tmi_of_cb_states(L):
    basis = enumerate_basis(L)
    for c in basis.states:
        assert tripartite_mutual_information(basis_state(basis, int(c))) == 0.0


@pytest.mark.criterion(8, "quantum property suite (a)-(e)")
def test_e_synthetic_collapse_recovery():
    truth = {"p_c": 0.5, "nu": 2.0, "beta": 0.2}
    rng = np.random.default_rng(3)
    rows = []
    for L in (16, 32, 64, 128):
        for p in np.arange(0.40, 0.601, 0.02):
            v = L ** (-truth["beta"] / truth["nu"]) * (0.5 + 0.3 * np.tanh(0.8 * L ** (1 / truth["nu"]) * (p - 0.5)))
            rows.append((L, p, v * (1 + 0.01 * rng.standard_normal()), 0.01 * v))
    res = collapse(ScalingDataset.from_points(rows), CollapseAnsatz(AnsatzForm.STATIC),
                   {"p_c": 0.48, "nu": 1.7, "beta": 0.25})
    assert res.converged
    for name, value in truth.items():
        lo, hi = res.errors[name]
        assert lo <= value <= hi, (name, value, lo, hi)


# ------------------------------------------------------------------------ 9


@pytest.mark.criterion(9, "entropy decay: Gamma agrees across L within 20%; perturbed runs saturate")
def test_a_decay_rate_is_size_independent():
    gamma = {}
    for L in (12, 16):
        cfg = ExperimentConfig(L=L, p=0.7, q=0.2, n_samples=1000, master_seed=10, observables=("entropy",))
        s = aggregate_records(run_ensemble(cfg), "entropy")
        gamma[L] = fit_entropy_decay(s.times, s.mean, L, sem=s.sem)[0]
    rel = abs(gamma[12] - gamma[16]) / (0.5 * (gamma[12] + gamma[16]))
    print(f"Gamma: {gamma}  relative difference {rel:.3f}")
    assert rel < 0.2


def _last_quarter_drift(values):
    tail = values[len(values) - len(values) // 4:]
    half = len(tail) // 2
    return abs(tail[half:].mean() - tail[:half].mean()) / tail.mean()


@pytest.mark.criterion(9, "entropy decay: Gamma agrees across L within 20%; perturbed runs saturate")
@pytest.mark.parametrize("L", [12, 16])
def test_b_perturbed_runs_saturate(L):
    cfg = ExperimentConfig(L=L, p=0.2, q=0.2, t_max=10 * L, n_samples=400, master_seed=12, perturb=True,
                           observables=("h_zz", "entropy"))
    records = run_ensemble(cfg)
    for name in ("h_zz", "entropy"):
        drift = _last_quarter_drift(aggregate_records(records, name).mean)
        print(f"L={L} {name}: last-quarter drift {drift:.4f}")
        assert drift < 0.05


# ----------------------------------------------------------------------- 10

DETERMINISM_CONFIGS = {
    "quantum": """\
[experiment]
mode = quantum
L = 8
q = 0.3
theta_rad = 1.1
t_max_steps = 16
n_samples = 8
master_seed = 99
perturb = true
observables = h_zz,entropy,tmi,z_profile

[sweep]
p = 0.2,0.6
""",
    "classical": """\
[experiment]
mode = classical
L = 40
q = 0.2
theta_rad = pi/2
n_samples = 50
master_seed = 5
observables = h_zz,z_profile

[sweep]
L = 40,64
p = 0.3,0.5
t_max_rule = L
""",
}


@pytest.mark.criterion(10, "runs repeated from the manifest are byte-identical across worker counts")
@pytest.mark.parametrize("mode", sorted(DETERMINISM_CONFIGS))
def test_determinism(mode, tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(DETERMINISM_CONFIGS[mode])
    assert main(["run", str(cfg), "--out", str(tmp_path / "a"), "--workers", "1", "--raw"]) == EXIT_OK
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    for workers in ("2", "3"):
        out = tmp_path / f"w{workers}"
        assert main(["run", str(tmp_path / "a" / "manifest.json"), "--out", str(out), "--workers", workers,
                     "--raw"]) == EXIT_OK
        for name in manifest["outputs"]:
            assert (tmp_path / "a" / name).read_bytes() == (out / name).read_bytes(), name
    capsys.readouterr()
