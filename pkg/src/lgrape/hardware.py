"""Series-RLC probe response: rotating frame -> laboratory frame -> circuit
filter -> rotating frame.

The circuit current response used throughout is the band-pass

    T(s) = (s / (Q w0)) / (s^2 / w0^2 + s / (Q w0) + 1),

which has unit gain and zero phase at ``s = i w0``.  The filter integrates
the two-state circuit ODE exactly for a lab-frame signal held constant
around each sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .linalg import expm

MIN_OVERSAMPLING = 8


@dataclass(frozen=True)
class RLCParams:
    omega0: float
    Q: float

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError("resonance frequency must be positive")
        if not self.Q > 0.5:
            raise ValueError("quality factor must exceed 1/2 (underdamped circuit)")

    @property
    def ringdown_rate(self):
        """Envelope decay rate ``w0 / 2Q`` (1/s)."""
        return self.omega0 / (2 * self.Q)

    def transfer(self, omega):
        """``T(i omega)``."""
        s = 1j * np.asarray(omega, dtype=float)
        w0, Q = self.omega0, self.Q
        return (s / (Q * w0)) / (s * s / w0 ** 2 + s / (Q * w0) + 1)


@dataclass
class Waveform:
    """Rotating-frame envelope samples (rad/s).

    ``interpolation="pwl"`` interpolates linearly between samples;
    ``"pwc"`` holds ``cx[i], cy[i]`` on ``[t[i], t[i+1])``.  The envelope is
    zero outside ``[t[0], t[-1]]``.
    """

    t: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    interpolation: str = "pwl"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.cx = np.asarray(self.cx, dtype=float)
        self.cy = np.asarray(self.cy, dtype=float)
        if not (self.t.shape == self.cx.shape == self.cy.shape):
            raise ValueError("waveform channels must have equal length")
        if self.interpolation not in ("pwl", "pwc"):
            raise ValueError("interpolation must be 'pwl' or 'pwc'")

    @classmethod
    def from_sequence(cls, seq):
        """Envelope of a two-channel :class:`~lgrape.grape.ControlSequence`."""
        pts = seq.grid.points
        c = seq.coeffs
        if c.shape[0] != 2:
            raise ValueError("need an (x, y) two-channel sequence")
        if seq.interpolation.value == "pwc":
            c = np.concatenate([c, c[:, -1:]], axis=1)
            return cls(pts, c[0], c[1], "pwc")
        return cls(pts, c[0], c[1], "pwl")

    @property
    def complex(self):
        return self.cx + 1j * self.cy

    def envelope(self, times):
        """Complex envelope ``cx + i cy`` at arbitrary times."""
        times = np.asarray(times, dtype=float)
        inside = (times >= self.t[0]) & (times <= self.t[-1])
        if self.interpolation == "pwl":
            z = np.interp(times, self.t, self.cx) + 1j * np.interp(times, self.t, self.cy)
        else:
            idx = np.clip(np.searchsorted(self.t, times, side="right") - 1, 0, self.t.size - 1)
            z = self.complex[idx]
        return np.where(inside, z, 0.0)


@dataclass
class LabSignal:
    """Uniformly sampled real laboratory-frame signal."""

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.t.shape != self.v.shape or self.t.size < 2:
            raise ValueError("lab signal needs matching time and value arrays")

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def sample_rate(self):
        return 1.0 / self.dt


def _lab_grid(t0, t1, omega0, oversampling):
    if int(oversampling) != oversampling or oversampling < MIN_OVERSAMPLING:
        raise ValueError(f"oversampling must be an integer >= {MIN_OVERSAMPLING} "
                         f"samples per carrier period, got {oversampling}")
    dt = 2 * np.pi / (omega0 * oversampling)
    n = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
    return t0 + dt * np.arange(n)


def upconvert(w: Waveform, omega0, oversampling=16, tail=0.0):
    """Mix an envelope onto the carrier: ``v = cx cos(w0 t) - cy sin(w0 t)``.

    The lab grid has ``oversampling`` samples per carrier period and runs
    ``tail`` seconds past the last envelope sample (zero envelope there).
    """
    t = _lab_grid(w.t[0], w.t[-1] + tail, omega0, oversampling)
    z = w.envelope(t)
    return LabSignal(t, (z * np.exp(1j * omega0 * t)).real)


def _check_rate(sig: LabSignal, omega0):
    per_period = 2 * np.pi / (omega0 * sig.dt)
    if per_period < MIN_OVERSAMPLING * (1 - 1e-9):
        raise ValueError(f"sample rate gives {per_period:.2f} samples per carrier period; "
                         f"need at least {MIN_OVERSAMPLING}")
    return per_period


def discretize(p: RLCParams, dt):
    """Exact zero-order-hold discretisation with sample-centred holds.

    Sample ``u[k]`` drives the circuit on ``[t_k - dt/2, t_k + dt/2]``, so
    ``x[k+1] = Phi x[k] + G0 u[k] + G1 u[k+1]``.  Centring the hold removes
    the half-sample delay of a leading-edge hold.  States are ``V_C / Q``
    and ``R I`` (the output).
    """
    w0, Q = p.omega0, p.Q
    M = np.zeros((3, 3))
    M[0, 1] = w0
    M[1, 0] = -w0
    M[1, 1] = -w0 / Q
    M[1, 2] = w0 / Q
    E = expm(M * (0.5 * dt))
    half, gam = E[:2, :2], E[:2, 2]
    return half @ half, half @ gam, gam.copy()


def rlc_filter(sig: LabSignal, p: RLCParams):
    """Circuit current response (scaled by R) to a lab-frame voltage, zero initial state."""
    _check_rate(sig, p.omega0)
    phi, g0, g1 = discretize(p, sig.dt)
    y = _kernels.rlc_recursion(phi, g0, g1, np.ascontiguousarray(sig.v, dtype=float))
    return LabSignal(sig.t.copy(), np.asarray(y))


def _period_average(x, m):
    """Two cascaded one-period moving averages (``m`` samples per period).

    The response has double zeros at every carrier harmonic, so the image
    at twice the carrier is rejected even where the envelope has a slope.
    Even ``m`` uses ``m + 1`` taps with half-weight ends.
    """
    if m % 2 == 0:
        k = np.ones(m + 1)
        k[0] = k[-1] = 0.5
    else:
        k = np.ones(m)
    k /= m
    return np.convolve(x, np.convolve(k, k), mode="same")


def downconvert(sig: LabSignal, omega0, times=None, interpolation="pwl"):
    """Heterodyne back to the rotating frame.

    Multiplies by ``2 cos(w0 t)`` and ``-2 sin(w0 t)``, applies two
    one-carrier-period averages and resamples to ``times`` (the lab grid by default).
    """
    per = _check_rate(sig, omega0)
    m = int(round(per))
    if abs(per - m) > 1e-6 * per:
        raise ValueError("downconversion needs an integer number of samples per carrier period")
    ph = omega0 * sig.t
    cx = _period_average(2 * sig.v * np.cos(ph), m)
    cy = _period_average(-2 * sig.v * np.sin(ph), m)
    if times is None:
        return Waveform(sig.t.copy(), cx, cy, "pwl")
    times = np.asarray(times, dtype=float)
    return Waveform(times, np.interp(times, sig.t, cx), np.interp(times, sig.t, cy), interpolation)


def envelope_delay(inp: np.ndarray, out: np.ndarray, dt, max_lag=None):
    """Lag (s) maximising the cross-correlation magnitude of two complex envelopes."""
    n = inp.size
    max_lag = n - 1 if max_lag is None else min(int(max_lag), n - 1)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    corr = np.fft.ifft(np.fft.fft(out, size) * np.conj(np.fft.fft(inp, size)))
    lag = int(np.argmax(np.abs(corr[: max_lag + 1])))
    return lag * dt


@dataclass
class Distortion:
    """Output of :func:`distort` on the lab grid."""

    input: Waveform
    output: Waveform
    delay: float

    def compensated(self, times=None):
        """Output shifted earlier by the measured delay (for plotting/comparison)."""
        t = self.output.t
        times = t if times is None else np.asarray(times, dtype=float)
        s = times + self.delay
        cx = np.interp(s, t, self.output.cx, left=0.0, right=0.0)
        cy = np.interp(s, t, self.output.cy, left=0.0, right=0.0)
        return Waveform(times, cx, cy, "pwl")


def distort(w: Waveform, p: RLCParams, oversampling=16, tail=None):
    """Rotating-frame envelope as seen through the RLC circuit.

    ``tail`` (s) extends the simulation past the pulse end to capture the
    ring-down; by default ten envelope time constants ``2Q/w0``.
    """
    if tail is None:
        tail = 10.0 / p.ringdown_rate
    lab = upconvert(w, p.omega0, oversampling, tail)
    out = downconvert(rlc_filter(lab, p), p.omega0)
    inp = Waveform(lab.t, *_split(w.envelope(lab.t)), "pwl")
    delay = envelope_delay(inp.complex, out.complex, lab.dt)
    return Distortion(inp, out, delay)


def _split(z):
    return z.real.copy(), z.imag.copy()


def baseband_response(w: Waveform, p: RLCParams, times):
    """Reference output envelope from the circuit ODE in the rotating frame.

    Integrates ``xi' = (A - i w0) xi + B z(t)`` exactly for an envelope that
    is linear between the requested ``times``; no rotating-wave
    approximation is involved because the circuit is real.
    """
    times = np.asarray(times, dtype=float)
    w0, Q = p.omega0, p.Q
    A = np.array([[0, w0], [-w0, -w0 / Q]], dtype=complex) - 1j * w0 * np.eye(2)
    B = np.array([0, w0 / Q], dtype=complex)
    z = w.envelope(times)
    xi = np.zeros(2, dtype=complex)
    out = np.zeros(times.size, dtype=complex)
    cache = {}
    for k in range(times.size - 1):
        dt = times[k + 1] - times[k]
        key = round(dt, 18)
        if key not in cache:
            M = np.zeros((4, 4), dtype=complex)
            M[:2, :2] = A
            M[:2, 2] = B
            M[2, 3] = 1.0
            E = expm(M * dt)
            cache[key] = (E[:2, :2], E[:2, 2], E[:2, 3])
        phi, ga, gb = cache[key]
        xi = phi @ xi + ga * z[k] + gb * (z[k + 1] - z[k]) / dt
        out[k + 1] = xi[1]
    return Waveform(times, out.real, out.imag, "pwl")


# -- CSV ------------------------------------------------------------------------

ROTATING_HEADER = ["time_s", "cx_rad_s", "cy_rad_s"]
LAB_HEADER = ["time_s", "v"]


def write_waveform(path, w):
    """Write a :class:`Waveform` or :class:`LabSignal` as CSV."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        if isinstance(w, LabSignal):
            out.writerow(LAB_HEADER)
            out.writerows(zip(map(repr, w.t.tolist()), map(repr, w.v.tolist())))
        else:
            out.writerow(ROTATING_HEADER)
            out.writerows(zip(map(repr, w.t.tolist()), map(repr, w.cx.tolist()),
                              map(repr, w.cy.tolist())))


def read_waveform(path, interpolation="pwl"):
    """Read a waveform CSV; the header decides the frame."""
    with open(Path(path), newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path}: empty waveform file")
    header = [h.strip() for h in rows[0]]
    data = np.array(rows[1:], dtype=float).reshape(-1, len(header))
    if header == ROTATING_HEADER:
        return Waveform(data[:, 0], data[:, 1], data[:, 2], interpolation)
    if header == LAB_HEADER:
        return LabSignal(data[:, 0], data[:, 1])
    raise ValueError(f"{path}: unrecognised waveform header {header}")
