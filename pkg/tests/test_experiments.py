import numpy as np
import pytest

from lgrape import experiments as ex
from lgrape import grape
from lgrape.config import ConfigError
from lgrape.integrators import TimeGrid
from lgrape.linalg import expm

TINY_INTEGRATORS = {"n_spins": 2, "counts": [10, 20, 40, 80], "reference_factor": 4}
TINY_RADDAMP = {"counts": [50, 100, 200, 400], "reference_factor": 4}
TINY_BROADBAND = {"counts": [4, 6], "seeds": [0, 1], "n_offsets": 3, "power_scales": [1.0],
                  "max_iterations": 5}
TINY_PREPHASING = {"n_slices": 8, "n_orientations": 3, "seeds": [0, 1], "max_iterations": 5,
                   "n_frozen": 1, "f0_hz": 5e6, "q": 50.0}


def test_config_validation():
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("nope")
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("integrator-scaling", {"bogus": 1})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("integrator-scaling", {"rules": ["RK4"]})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("raddamp-scaling", {"rules": ["MP"]})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("broadband-grape", {"parameterizations": ["spline"]})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("broadband-grape", {"seeds": []})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("broadband-grape", {"guess_anchors": 1})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("prephasing-rlc", {"oversampling": 4})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("prephasing-rlc", {"n_frozen": 12})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("integrator-scaling", {"counts": [0, 10]})
    with pytest.raises(ConfigError):
        ex.ExperimentConfig("integrator-scaling", jobs=0)
    cfg = ex.ExperimentConfig.from_sections("broadband-grape",
                                            {"broadband": {"counts": "8, 12"}})
    assert cfg.params["counts"] == [8, 12]


def test_integrator_table(tmp_path):
    cfg = ex.ExperimentConfig("integrator-scaling", TINY_INTEGRATORS, out=tmp_path / "i.csv")
    t = ex.run(cfg)
    assert t.columns == ["rule", "slice_count", "error"]
    assert len(t.rows) == 16
    assert t.meta["slope_LG4"] < t.meta["slope_LP"] < 0
    back = ex.read_table(tmp_path / "i.csv")
    assert back.experiment == "integrator-scaling" and back.rows == t.rows


def test_chain_pulse_flip_area():
    sampler, psi0 = ex.chain_pulse(ex.INTEGRATOR_DEFAULTS)
    t = np.linspace(0, sampler.duration, 20001)
    area = np.trapezoid(sampler.amplitude * sampler.envelope(t), t)
    assert area == pytest.approx(np.pi / 2, rel=1e-9)
    assert psi0[0] == 1 and np.linalg.norm(psi0) == 1


def test_raddamp_table():
    t = ex.run(ex.ExperimentConfig("raddamp-scaling", TINY_RADDAMP))
    assert {r[0] for r in t.rows} == {"LP", "LG2", "LG4"}
    assert t.meta["final_mu"][2] > 0


def test_broadband_members():
    params = dict(ex.BROADBAND_DEFAULTS, n_offsets=3, power_scales=[1.0])
    seq = grape.ControlSequence(np.zeros((2, 4)), TimeGrid.uniform(1e-5, 4), "pwc")
    ens = ex.broadband_members(params, seq)
    assert len(ens.problems) == 3 and ens.problems[0].dim == 3
    # no pulse: on resonance only Sy -> Sy succeeds
    assert ens.member_fidelities()[1] == pytest.approx(1 / 3)


def test_random_phases():
    grid = TimeGrid.uniform(1.0, 10)
    a = ex.random_phases(grid, "pwl", 3, 4)
    b = ex.random_phases(grid, "pwc", 3, 4)
    assert a.size == 11 and b.size == 10
    # same underlying waveform: slice-centre values lie between node values
    assert np.all(np.minimum(a[:-1], a[1:]) - 1e-12 <= b)
    assert np.all(b <= np.maximum(a[:-1], a[1:]) + 1e-12)
    w = ex.random_phases(grid, "pwc", 3, 0)
    assert w.size == 10 and np.all(np.abs(w) <= np.pi)


def test_broadband_table_and_determinism(tmp_path):
    a = ex.run(ex.ExperimentConfig("broadband-grape", TINY_BROADBAND, out=tmp_path / "a.csv"))
    ex.run(ex.ExperimentConfig("broadband-grape", TINY_BROADBAND, out=tmp_path / "b.csv",
                               jobs=2))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(a.rows) == 8
    m = ex.medians(a)
    assert set(m) == {(s, n) for s in ("pwc", "pwl") for n in (4, 6)}
    for row in a.rows:
        hist = row[-1]
        assert hist[-1] == pytest.approx(row[3]) and len(hist) == row[4] + 1


def test_back_evolution_invariant():
    params = dict(ex.PREPHASING_DEFAULTS, n_orientations=4, n_slices=6, n_frozen=1)
    seq = ex.prephasing_sequence(params, "pwl")
    seq = seq.with_coeffs(ex.random_guess(seq.coeffs.shape, 2e5, 0, seq.freeze))
    ens = ex.prephasing_ensemble(params, seq)
    drifts, _, _, goal = ex.prephasing_operators(params)
    fin = ens.final_states()
    for b, d in enumerate(drifts):
        later = expm(-1j * d * params["dead_time"]) @ fin[b, 0]
        assert np.vdot(goal, later).real == pytest.approx(ens.member_fidelities()[b], abs=1e-12)


def test_prephasing_sequence_freezes_edges():
    seq = ex.prephasing_sequence(ex.PREPHASING_DEFAULTS, "pwc")
    assert seq.freeze[:, :2].all() and seq.freeze[:, -2:].all() and not seq.freeze[:, 2:-2].any()


def test_distorted_fidelity_of_zero_pulse_matches_free_evolution():
    params = dict(ex.PREPHASING_DEFAULTS, **TINY_PREPHASING)
    seq = ex.prephasing_sequence(params, "pwl")
    ens = ex.prephasing_ensemble(params, seq)
    assert ex.distorted_fidelity(params, seq) == pytest.approx(ens.evaluate().f, abs=1e-12)


def test_distorted_fidelity_at_low_q_matches_ideal_pwc():
    # at Q = 2 the circuit is nearly transparent, so the chain reproduces the exact PWC fidelity
    params = dict(ex.PREPHASING_DEFAULTS, **dict(TINY_PREPHASING, q=2.0))
    seq = ex.prephasing_sequence(params, "pwc")
    rng = np.random.default_rng(3)
    c = rng.uniform(-1, 1, seq.coeffs.shape) * 2 * np.pi * params["nutation_hz"]
    seq = seq.with_coeffs(np.where(seq.freeze, 0.0, c))
    ideal = ex.prephasing_ensemble(params, seq).evaluate().f
    assert ex.distorted_fidelity(params, seq) == pytest.approx(ideal, abs=2e-3)


def test_distorted_fidelity_rejects_long_tail():
    params = dict(ex.PREPHASING_DEFAULTS, **TINY_PREPHASING)
    params.update(q=1e4, dead_time=1e-6)
    seq = ex.prephasing_sequence(params, "pwl")
    with pytest.raises(ValueError):
        ex.distorted_fidelity(params, seq)


def test_prephasing_table_and_determinism(tmp_path):
    a = ex.run(ex.ExperimentConfig("prephasing-rlc", TINY_PREPHASING, out=tmp_path / "a.csv"))
    ex.run(ex.ExperimentConfig("prephasing-rlc", TINY_PREPHASING, out=tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(a.rows) == 4
    for row in a.rows:
        assert 0 <= row[3] <= 1 and row[2] <= 1


def test_fmt():
    assert ex._fmt(True) == "true"
    assert ex._fmt(0.1) == "0.1"
    assert ex._fmt([1, 2.5]) == "1;2.5"
    assert ex._fmt(np.int64(3)) == "3"
