"""Benchmark studies as configurable runners that produce CSV tables.

Four experiments are available:

``integrator-scaling``
    Final-state error against slice count for LP/MP/LG2/LG4 on a coupled
    spin chain driven by a smooth band-selective pulse.
``raddamp-scaling``
    The same for the state-dependent radiation-damping Bloch equations.
``broadband-grape``
    Converged fidelity of phase-modulated universal 90-degree rotation
    pulses against interval count, PWC versus PWL.
``prephasing-rlc``
    Spin-1 powder excitation pulses refocusing after a dead time, scored
    before and after passing through a series-RLC probe model.

All runs are deterministic in their parameters and seeds.  Independent
tasks can be spread over worker processes; results are collected in task
order, so the CSV bytes do not depend on scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import grape, hardware, spins
from . import integrators as itg
from .config import ConfigError, merge
from .linalg import expm
from .optimizer import OptimizerConfig, minimize, random_guess

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
DOUBLING_COUNTS = [25, 50, 100, 200, 400, 800, 1600, 3200]


# -- result tables -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class ResultTable:
    """Rows of one experiment plus ``# key: value`` metadata lines."""

    experiment: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self):
        lines = [f"# experiment: {self.experiment}"]
        lines += [f"# {k}: {_fmt(v)}" for k, v in self.meta.items()]
        lines.append(",".join(self.columns))
        lines += [",".join(_fmt(x) for x in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_csv())


def _parse_cell(s):
    for kind in (int, float):
        try:
            return kind(s)
        except ValueError:
            pass
    return s


def read_table(path):
    """Read a CSV written by :meth:`ResultTable.write` (cells parsed as int/float/str)."""
    meta, header, rows, name = {}, None, [], ""
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            if key == "experiment":
                name = value.strip()
            else:
                meta[key] = value.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(tuple(_parse_cell(c) for c in line.split(",")))
    return ResultTable(name, header or [], rows, meta)


# -- configuration -------------------------------------------------------------------

INTEGRATOR_DEFAULTS = {
    "n_spins": 5,
    "offset_span_hz": 1000.0,
    "coupling_hz": 7.0,
    "duration": 4e-3,
    "bandwidth_hz": 1000.0,
    "window": 0.2,
    "flip_deg": 90.0,
    "counts": list(DOUBLING_COUNTS),
    "rules": ["LP", "MP", "LG2", "LG4"],
    "reference_factor": 32,
}

RADDAMP_DEFAULTS = {
    "duration": 0.5,
    "sweep_hz": 200.0,
    "r1": 10.0,
    "r2": 10.0,
    "k_rd": 40.0,
    "mu_eq": 1.0,
    "tilt_deg": 2.0,
    "counts": list(DOUBLING_COUNTS),
    "rules": ["LP", "LG2", "LG4"],
    "reference_factor": 32,
}

BROADBAND_DEFAULTS = {
    "duration": 51.2e-6,
    "nutation_hz": 60e3,
    "offset_span_hz": 30e3,
    "n_offsets": 15,
    "power_scales": [50 / 60, 1.0, 70 / 60],
    "counts": [8, 12, 16, 24, 32, 48, 60],
    "parameterizations": ["pwc", "pwl"],
    "seeds": list(range(10)),
    "max_iterations": 200,
    "guess_anchors": 6,
}

PREPHASING_DEFAULTS = {
    "duration": 156e-6,
    "n_slices": 24,
    "nutation_hz": 35e3,
    "quad_hz": 40e3,
    "n_orientations": 20,
    "offset_hz": 0.0,
    "dead_time": 100e-6,
    "n_frozen": 2,
    "q": 200.0,
    "f0_hz": 92.1e6,
    "oversampling": 16,
    "resample_dt": 50e-9,
    "parameterizations": ["pwc", "pwl"],
    "seeds": list(range(20)),
    "max_iterations": 300,
}

EXPERIMENTS = {
    "integrator-scaling": ("integrators", INTEGRATOR_DEFAULTS),
    "raddamp-scaling": ("raddamp", RADDAMP_DEFAULTS),
    "broadband-grape": ("broadband", BROADBAND_DEFAULTS),
    "prephasing-rlc": ("prephasing", PREPHASING_DEFAULTS),
}


@dataclass
class ExperimentConfig:
    """Experiment id, parameter overrides, output path and worker count."""

    experiment: str
    params: dict = field(default_factory=dict)
    out: Optional[Path] = None
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose from {', '.join(EXPERIMENTS)}")
        section, defaults = EXPERIMENTS[self.experiment]
        self.params = merge(defaults, self.params, section)
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be at least 1")
        self.jobs = int(self.jobs)
        _validate(self.experiment, self.params)

    @classmethod
    def from_sections(cls, experiment, sections, **kw):
        """Build from parsed config sections (see :mod:`lgrape.config`)."""
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}")
        return cls(experiment, dict(sections.get(EXPERIMENTS[experiment][0], {})), **kw)


def _validate(experiment, p):
    def positive(*keys):
        for k in keys:
            v = p[k]
            vals = v if isinstance(v, list) else [v]
            if not vals or any(not x > 0 for x in vals):
                raise ConfigError(f"{k} must be positive")

    if "counts" in p:
        positive("counts")
    if "seeds" in p and not p["seeds"]:
        raise ConfigError("seed list is empty")
    if "rules" in p:
        try:
            rules = [itg.as_rule(r) for r in p["rules"]]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if experiment == "raddamp-scaling" and itg.Rule.MP in rules:
            raise ConfigError("MP is not defined for state-dependent generators")
    if "parameterizations" in p:
        for s in p["parameterizations"]:
            if s not in ("pwc", "pwl"):
                raise ConfigError(f"unknown parameterization {s!r}")
    if experiment == "integrator-scaling":
        positive("n_spins", "duration", "reference_factor")
        if p["n_spins"] > spins.MAX_SPINS:
            raise ConfigError(f"n_spins exceeds the limit of {spins.MAX_SPINS}")
    elif experiment == "raddamp-scaling":
        positive("duration", "reference_factor")
    elif experiment == "broadband-grape":
        positive("duration", "nutation_hz", "n_offsets", "power_scales", "max_iterations")
        if p["guess_anchors"] == 1 or p["guess_anchors"] < 0:
            raise ConfigError("guess_anchors must be 0 or at least 2")
    elif experiment == "prephasing-rlc":
        positive("duration", "n_slices", "nutation_hz", "n_orientations", "dead_time", "q",
                 "f0_hz", "resample_dt", "max_iterations")
        if p["oversampling"] < hardware.MIN_OVERSAMPLING:
            raise ConfigError(f"oversampling must be >= {hardware.MIN_OVERSAMPLING}")
        npts = p["n_slices"] + 1
        if 2 * p["n_frozen"] >= npts - 1:
            raise ConfigError("too many frozen points for the slice count")


def _map(func, tasks, jobs):
    """``[func(*t) for t in tasks]``, optionally over worker processes, in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [func(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, *zip(*tasks)))


# -- integrator scaling --------------------------------------------------------------

@dataclass(frozen=True)
class ChainPulse:
    """Time-dependent chain Hamiltonian ``D + a(t) Sx_total``.

    ``a(t)`` is a sinc of the given bandwidth under a Gaussian window of
    width ``window * duration``, scaled to the requested flip angle.
    """

    drift: np.ndarray
    control: np.ndarray
    duration: float
    bandwidth: float
    window: float
    amplitude: float = 1.0

    def envelope(self, t):
        x = np.asarray(t) - self.duration / 2
        return np.sinc(self.bandwidth * x) * np.exp(-0.5 * (x / (self.window * self.duration)) ** 2)

    def __call__(self, t):
        return self.drift + (self.amplitude * self.envelope(t)) * self.control


def chain_pulse(params):
    n = params["n_spins"]
    span = params["offset_span_hz"]
    chain = spins.SpinChain(offsets=TWO_PI * np.linspace(-span, span, n),
                            couplings=[TWO_PI * params["coupling_hz"]] * (n - 1))
    drift, (cx, _) = spins.chain_hamiltonian(chain)
    T = params["duration"]
    proto = ChainPulse(drift, cx, T, params["bandwidth_hz"], params["window"])
    t = np.linspace(0, T, 20001)
    area = np.trapezoid(proto.envelope(t), t)
    amp = np.deg2rad(params["flip_deg"]) / area
    psi0 = np.zeros(drift.shape[0], dtype=complex)
    psi0[0] = 1.0
    return ChainPulse(drift, cx, T, params["bandwidth_hz"], params["window"], amp), psi0


def _error_task(rule, n, sampler, T, initial, reference, state_dependent):
    x = itg.final_state(rule, sampler, T, n, initial, state_dependent)
    return itg.relative_error(x, reference)


def _scaling_table(name, sampler, T, initial, params, jobs, state_dependent):
    counts = sorted(int(c) for c in params["counts"])
    rules = [itg.as_rule(r) for r in params["rules"]]
    reference = itg.final_state(itg.Rule.LG4, sampler, T,
                                params["reference_factor"] * counts[-1], initial, state_dependent)
    tasks = [(r, n, sampler, T, initial, reference, state_dependent) for r in rules for n in counts]
    errors = _map(_error_task, tasks, jobs)
    table = ResultTable(name, ["rule", "slice_count", "error"])
    k = 0
    for r in rules:
        errs = errors[k:k + len(counts)]
        k += len(counts)
        table.rows += [(r.value, n, e) for n, e in zip(counts, errs)]
        try:
            table.meta[f"slope_{r.value}"] = itg.fit_slope(counts, errs)
        except ValueError:
            table.meta[f"slope_{r.value}"] = "nan"
    table.meta["reference"] = f"LG4 with {params['reference_factor'] * counts[-1]} slices"
    return table, reference


def run_integrator_scaling(cfg: ExperimentConfig):
    """Error table ``(rule, slice_count, error)`` with fitted slopes in the metadata."""
    p = cfg.params
    sampler, psi0 = chain_pulse(p)
    table, reference = _scaling_table("integrator-scaling", sampler, p["duration"], psi0, p,
                                      cfg.jobs, False)
    table.meta = {
        "full_scale": "31 coupled spins over +-2500 Hz under a 1000 Hz band-selective pulse",
        "run_scale": (f"{p['n_spins']} spins over +-{p['offset_span_hz']} Hz, "
                      f"sinc pulse {p['bandwidth_hz']} Hz under a Gaussian window"),
        **table.meta,
    }
    for rule, n in (("LG4", 50), ("LP", 1000)):
        e = _error_task(rule, n, sampler, p["duration"], psi0, reference, False)
        table.meta[f"error_{rule}_{n}"] = e
    return table


# -- radiation damping -----------------------------------------------------------------

@dataclass(frozen=True)
class LinearSweep:
    """Offset ramp ``2 pi * rate_hz * t / duration``."""

    rate_hz: float
    duration: float

    def __call__(self, t):
        return TWO_PI * self.rate_hz * t / self.duration


@dataclass(frozen=True)
class RadDampSampler:
    params: spins.RadiationDamping

    def __call__(self, t, state):
        return spins.raddamp_generator(self.params, state, t)


def raddamp_problem(params):
    T = params["duration"]
    rd = spins.RadiationDamping(omega=LinearSweep(params["sweep_hz"], T), r1=params["r1"],
                                r2=params["r2"], k_rd=params["k_rd"], mu_eq=params["mu_eq"])
    return RadDampSampler(rd), spins.tilted_state(params["tilt_deg"])


def run_raddamp_scaling(cfg: ExperimentConfig):
    """Error table for the state-dependent radiation-damping benchmark."""
    p = cfg.params
    sampler, x0 = raddamp_problem(p)
    table, reference = _scaling_table("raddamp-scaling", sampler, p["duration"], x0, p,
                                      cfg.jobs, True)
    table.meta = {
        "full_scale": "same system and parameters",
        "run_scale": (f"sweep 0-{p['sweep_hz']} Hz in {p['duration']} s, r1={p['r1']}, "
                      f"r2={p['r2']}, k_rd={p['k_rd']} 1/s, tilt {p['tilt_deg']} deg"),
        **table.meta,
        "final_mu": [float(v) for v in reference[:3].real],
    }
    return table


# -- broadband universal rotation ------------------------------------------------------

def broadband_members(params, sequence):
    """Offset/power ensemble for the universal 90-degree rotation about y.

    Each member carries the three transfers ``Sz -> Sx``, ``Sy -> Sy``,
    ``Sx -> -Sz`` on the traceless Liouville subspace of a single spin-1/2.
    """
    sx, sy, sz = spins.spin_operators(0.5)
    basis = spins.cartesian_basis(0.5)
    cx, cy, cz = (spins.restrict(spins.hamiltonian_superop(o), basis) for o in (sx, sy, sz))
    ex, ey, ez = np.eye(3, dtype=complex)
    rho0 = np.stack([ez, ey, ex])
    target = np.stack([ex, ey, -ez])
    span = params["offset_span_hz"]
    offsets = TWO_PI * np.linspace(-span, span, params["n_offsets"])
    scales = params["power_scales"]
    w = 1.0 / (len(offsets) * len(scales))
    return grape.Ensemble([(w, grape.ControlProblem(o * cz, [s * cx, s * cy], rho0, target,
                                                    sequence))
                           for o in offsets for s in scales])


def _phase_objective(ens, seq, amplitude):
    def obj(phi):
        r = ens.evaluate(seq.with_coeffs(grape.phase_to_xy(amplitude, phi)))
        g = grape.phase_chain_rule(amplitude, phi, r.grad_c[0], r.grad_c[1])
        return 1.0 - r.f, -g
    return obj


def random_phases(grid, interpolation, seed, anchors):
    """Random initial phases at the control points of ``grid``.

    With ``anchors > 1`` the phase is a piecewise-linear function of time
    through that many uniform random values, so PWC (slice centres) and PWL
    (nodes) runs with the same seed start from the same waveform.  With
    ``anchors = 0`` every point gets an independent uniform phase.
    """
    interp = grape.as_interp(interpolation)
    pts = grid.points
    if interp is grape.Interp.PWC:
        pts = 0.5 * (pts[1:] + pts[:-1])
    rng = np.random.default_rng(seed)
    if anchors == 0:
        return rng.uniform(-np.pi, np.pi, pts.size)
    if anchors < 2:
        raise ConfigError("guess_anchors must be 0 or at least 2")
    values = rng.uniform(-np.pi, np.pi, anchors)
    return np.interp(pts, np.linspace(grid.points[0], grid.points[-1], anchors), values)


def optimise_broadband(params, interpolation, n_intervals, seed):
    """Phase-modulated optimisation from a random initial phase waveform.

    Returns the optimised Cartesian sequence and the optimiser result.
    """
    interp = grape.as_interp(interpolation)
    npts = n_intervals + 1 if interp is grape.Interp.PWL else n_intervals
    seq = grape.ControlSequence(np.zeros((2, npts)),
                                itg.TimeGrid.uniform(params["duration"], n_intervals), interp)
    ens = broadband_members(params, seq)
    amplitude = TWO_PI * params["nutation_hz"]
    phi0 = random_phases(seq.grid, interp, seed, params["guess_anchors"])
    res = minimize(_phase_objective(ens, seq, amplitude), phi0,
                   OptimizerConfig(max_iterations=params["max_iterations"], seed=seed))
    return seq.with_coeffs(grape.phase_to_xy(amplitude, res.x)), res


def broadband_task(params, interpolation, n_intervals, seed):
    """One optimisation; returns the CSV row."""
    seq, res = optimise_broadband(params, interpolation, n_intervals, seed)
    history = [1.0 - v for v in res.history]
    return (seq.interpolation.value, n_intervals, seed, 1.0 - res.fun, res.n_iter, res.status,
            history)


def run_broadband_grape(cfg: ExperimentConfig):
    """Converged fidelities of PWC and PWL phase-modulated pulses per interval count."""
    p = cfg.params
    tasks = [(p, s, n, seed) for n in p["counts"] for s in p["parameterizations"]
             for seed in p["seeds"]]
    rows = _map(broadband_task, tasks, cfg.jobs)
    meta = {
        "full_scale": "100 offsets over +-30 kHz, 50-70 kHz nutation, 51.2 us",
        "run_scale": (f"{p['n_offsets']} offsets over +-{p['offset_span_hz']} Hz, "
                      f"power scales {_fmt(p['power_scales'])}, {p['duration']} s"),
        "nutation_hz": p["nutation_hz"],
        "max_iterations": p["max_iterations"],
        "guess_anchors": p["guess_anchors"],
    }
    return ResultTable("broadband-grape",
                       ["parameterization", "n_intervals", "seed", "final_fidelity",
                        "iterations", "status", "iteration_history"], rows, meta)


# -- prephasing pulses through the RLC model --------------------------------------------

def prephasing_operators(params):
    """Drifts, controls, initial and refocused states of the spin-1 powder."""
    sx, sy, sz = spins.spin_operators(1)
    cx, cy = spins.hamiltonian_superop(sx), spins.hamiltonian_superop(sy)
    splittings = spins.powder_splittings(TWO_PI * params["quad_hz"], params["n_orientations"])
    drifts = [spins.liouvillian(spins.quadrupolar_drift(
        spins.Quadrupolar(wq, TWO_PI * params["offset_hz"]))) for wq in splittings]
    rho0 = spins.vec(sz) / np.linalg.norm(spins.vec(sz))
    goal = spins.vec(sx) / np.linalg.norm(spins.vec(sx))
    return drifts, (cx, cy), rho0, goal


def back_evolved(drift, goal, delay):
    """``P^dagger goal`` with ``P = exp(-i L delay)``: the state that reaches ``goal`` freely."""
    return expm(-1j * drift * delay).conj().T @ goal


def prephasing_ensemble(params, sequence, delay=None):
    drifts, controls, rho0, goal = prephasing_operators(params)
    delay = params["dead_time"] if delay is None else delay
    w = 1.0 / len(drifts)
    return grape.Ensemble([(w, grape.ControlProblem(d, list(controls), rho0,
                                                    back_evolved(d, goal, delay), sequence))
                           for d in drifts])


def prephasing_sequence(params, interpolation):
    interp = grape.as_interp(interpolation)
    n = params["n_slices"]
    npts = n + 1 if interp is grape.Interp.PWL else n
    freeze = np.zeros((2, npts), bool)
    k = params["n_frozen"]
    if k:
        freeze[:, :k] = True
        freeze[:, -k:] = True
    return grape.ControlSequence(np.zeros((2, npts)),
                                 itg.TimeGrid.uniform(params["duration"], n), interp, freeze)


def optimise_prephasing(params, interpolation, seed):
    seq = prephasing_sequence(params, interpolation)
    ens = prephasing_ensemble(params, seq)
    c_max = TWO_PI * params["nutation_hz"]
    x0 = random_guess(seq.coeffs.shape, c_max, seed, seq.freeze)

    def obj(x):
        r = ens.evaluate(seq.with_coeffs(x.reshape(seq.coeffs.shape)))
        return 1.0 - r.f, -r.grad_c.ravel()

    cfg = OptimizerConfig(max_iterations=params["max_iterations"], bound=c_max, seed=seed)
    res = minimize(obj, x0.ravel(), cfg, frozen=seq.freeze.ravel())
    return seq.with_coeffs(res.x.reshape(seq.coeffs.shape)), res


def distorted_fidelity(params, sequence):
    """Fidelity after the RLC chain, scored at the same absolute refocusing time.

    The distorted envelope, including its ring-down tail, drives the spins;
    the remaining dead time is free evolution.
    """
    rlc = hardware.RLCParams(TWO_PI * params["f0_hz"], params["q"])
    d = hardware.distort(hardware.Waveform.from_sequence(sequence), rlc, params["oversampling"])
    out = d.output
    T = params["duration"]
    t_end = float(out.t[-1])
    if t_end - T >= params["dead_time"]:
        raise ValueError("RLC ring-down tail is longer than the dead time")
    n = int(np.ceil(t_end / params["resample_dt"]))
    nodes = np.linspace(0.0, t_end, n + 1)
    env = np.stack([np.interp(nodes, out.t, out.cx), np.interp(nodes, out.t, out.cy)])
    seq = grape.ControlSequence(env, itg.TimeGrid(nodes), grape.Interp.PWL)
    ens = prephasing_ensemble(params, seq, delay=params["dead_time"] - (t_end - T))
    return float(ens.weights @ ens.member_fidelities(seq))


def prephasing_task(params, interpolation, seed):
    seq, res = optimise_prephasing(params, interpolation, seed)
    post = distorted_fidelity(params, seq)
    return (seq.interpolation.value, seed, 1.0 - res.fun, post, res.n_iter, res.status)


def run_prephasing_rlc(cfg: ExperimentConfig):
    """Pre- and post-distortion fidelities for PWC and PWL prephasing pulses."""
    p = cfg.params
    tasks = [(p, s, seed) for s in p["parameterizations"] for seed in p["seeds"]]
    rows = _map(prephasing_task, tasks, cfg.jobs)
    meta = {
        "full_scale": "200 powder orientations, 40 kHz quadrupolar anisotropy, f0 92.1 MHz",
        "run_scale": (f"{p['n_orientations']} orientations, {p['quad_hz']} Hz anisotropy, "
                      f"f0 {p['f0_hz']} Hz, Q {p['q']}, oversampling {p['oversampling']}"),
        "duration": p["duration"],
        "dead_time": p["dead_time"],
    }
    return ResultTable("prephasing-rlc",
                       ["parameterization", "seed", "pre_distortion_fidelity",
                        "post_distortion_fidelity", "iterations", "status"], rows, meta)


RUNNERS = {
    "integrator-scaling": run_integrator_scaling,
    "raddamp-scaling": run_raddamp_scaling,
    "broadband-grape": run_broadband_grape,
    "prephasing-rlc": run_prephasing_rlc,
}


def run(cfg: ExperimentConfig):
    """Run an experiment, write its CSV if ``cfg.out`` is set, return the table."""
    table = RUNNERS[cfg.experiment](cfg)
    if cfg.out is not None:
        table.write(cfg.out)
    return table


def medians(table, value="final_fidelity", by=("parameterization", "n_intervals")):
    """Median of a column grouped by other columns, ``{group: median}``."""
    idx = [table.columns.index(b) for b in by]
    j = table.columns.index(value)
    groups: dict = {}
    for row in table.rows:
        groups.setdefault(tuple(row[i] for i in idx), []).append(float(row[j]))
    return {k: float(np.median(v)) for k, v in groups.items()}
