"""Exploration signals and persistency-of-excitation diagnostics.

Every signal is a deterministic function of ``(spec, t)``: each channel draws
from its own seeded stream, and streams are prefix-consistent, so
``generate(spec, t)`` does not depend on which other times were requested.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidArgumentError

PE_TOLERANCE = 1e-9
RANK_TOLERANCE = 1e-10

# x^31 + x^28 + 1 is primitive: period 2**31 - 1.
_LFSR_ORDER = 31
_LFSR_TAP = 28


class SignalKind(str, enum.Enum):
    PRBS = "PRBS"
    GBN = "GBN"
    SUM_OF_SINUSOIDS = "SumOfSinusoids"
    FILTERED_WHITE_NOISE = "FilteredWhiteNoise"


@dataclass(frozen=True)
class SignalSpec:
    """Exploration input description.

    ``amplitude`` is a scalar or one value per channel. ``sinusoids`` holds
    ``(frequency [cycles/step], amplitude, phase)`` triples shared by all
    channels; channels after the first get seeded phase offsets so that they
    are not copies of each other. ``numerator``/``denominator`` are the
    direct-form filter coefficients applied to unit Gaussian noise.
    """

    kind: SignalKind = SignalKind.PRBS
    channels: int = 1
    amplitude: float | tuple = 1.0
    seed: int = 0
    switch_probability: float = 0.5
    sinusoids: tuple = ()
    numerator: tuple = (1.0,)
    denominator: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind(self.kind))
        if self.channels < 1:
            raise InvalidArgumentError("channels must be >= 1")
        amp = self.amplitude
        if isinstance(amp, (list, tuple, np.ndarray)):
            amp = tuple(float(a) for a in amp)
            if len(amp) != self.channels:
                raise InvalidArgumentError(f"need {self.channels} amplitudes, got {len(amp)}")
            if min(amp) <= 0:
                raise InvalidArgumentError("amplitude must be positive")
        else:
            amp = float(amp)
            if not amp > 0:
                raise InvalidArgumentError("amplitude must be positive")
        object.__setattr__(self, "amplitude", amp)
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", int(self.seed))
        if not 0.0 < self.switch_probability < 1.0:
            raise InvalidArgumentError("switch_probability must lie in (0, 1)")
        sins = tuple(tuple(float(v) for v in s) for s in self.sinusoids)
        if any(len(s) != 3 for s in sins):
            raise InvalidArgumentError("sinusoids must be (frequency, amplitude, phase) triples")
        object.__setattr__(self, "sinusoids", sins)
        if self.kind is SignalKind.SUM_OF_SINUSOIDS and not sins:
            raise InvalidArgumentError("SumOfSinusoids needs at least one component")
        object.__setattr__(self, "numerator", tuple(float(v) for v in self.numerator))
        object.__setattr__(self, "denominator", tuple(float(v) for v in self.denominator))
        if not self.denominator or self.denominator[0] == 0.0:
            raise InvalidArgumentError("denominator[0] must be nonzero")

    def distinct_frequencies(self) -> int:
        return len({s[0] for s in self.sinusoids})

    def amplitudes(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.amplitude, dtype=float), (self.channels,))

    def with_seed(self, seed: int) -> "SignalSpec":
        return replace(self, seed=seed)


def _rng(spec: SignalSpec, channel: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([spec.seed, channel, stream])


def _lfsr_bits(state: int, length: int) -> np.ndarray:
    bits = np.empty(length + _LFSR_ORDER, dtype=np.uint8)
    for i in range(_LFSR_ORDER):
        bits[i] = (state >> i) & 1
    # a[k] = a[k-31] ^ a[k-28]; chunks of length 28 only read already-filled entries.
    k = _LFSR_ORDER
    end = length + _LFSR_ORDER
    while k < end:
        stop = min(k + _LFSR_TAP, end)
        bits[k:stop] = bits[k - _LFSR_ORDER : stop - _LFSR_ORDER] ^ bits[k - _LFSR_TAP : stop - _LFSR_TAP]
        k = stop
    return bits[_LFSR_ORDER:]


def _channel_prbs(spec, channel, length):
    state = int(_rng(spec, channel).integers(1, 2**_LFSR_ORDER))
    return 2.0 * _lfsr_bits(state, length).astype(float) - 1.0


def _channel_gbn(spec, channel, length):
    rng = _rng(spec, channel)
    first = 1.0 if rng.random() < 0.5 else -1.0
    switches = rng.random(length) < spec.switch_probability
    switches[0] = False
    flips = np.cumsum(switches) % 2
    return first * (1.0 - 2.0 * flips)


def _channel_sines(spec, channel, length):
    t = np.arange(length, dtype=float)
    if channel == 0:
        offsets = np.zeros(len(spec.sinusoids))
    else:
        offsets = _rng(spec, channel).uniform(0.0, 2.0 * np.pi, len(spec.sinusoids))
    out = np.zeros(length)
    for (f, a, phase), off in zip(spec.sinusoids, offsets):
        out += a * np.sin(2.0 * np.pi * f * t + phase + off)
    return out


def _channel_fwn(spec, channel, length):
    e = _rng(spec, channel).standard_normal(length)
    return lfilter(spec.numerator, spec.denominator, e)


_CHANNEL_GENERATORS = {
    SignalKind.PRBS: _channel_prbs,
    SignalKind.GBN: _channel_gbn,
    SignalKind.SUM_OF_SINUSOIDS: _channel_sines,
    SignalKind.FILTERED_WHITE_NOISE: _channel_fwn,
}


@lru_cache(maxsize=256)
def _cached_sequence(spec: SignalSpec, length: int) -> np.ndarray:
    gen = _CHANNEL_GENERATORS[spec.kind]
    cols = [gen(spec, c, length) for c in range(spec.channels)]
    seq = np.column_stack(cols) * spec.amplitudes()
    seq.setflags(write=False)
    return seq


def sequence(spec: SignalSpec, length: int) -> np.ndarray:
    """First ``length`` inputs as an array of shape (length, channels)."""
    if length < 0:
        raise InvalidArgumentError("length must be nonnegative")
    # Round up to a power of two so repeated calls share cache entries.
    padded = max(64, 1 << max(0, int(length - 1)).bit_length())
    return _cached_sequence(spec, padded)[:length]


def generate(spec: SignalSpec, t: int) -> np.ndarray:
    """Exploration input at time ``t``."""
    if t < 0:
        raise InvalidArgumentError("t must be nonnegative")
    return np.array(sequence(spec, t + 1)[t])


def _stack(samples, k=None, start=0) -> np.ndarray:
    samples = list(samples)
    if not samples:
        raise InvalidArgumentError("need at least one sample")
    if k is None:
        k = len(samples) - start
    if k < 1 or start + k > len(samples):
        raise InvalidArgumentError(f"window [{start}, {start + k}) exceeds {len(samples)} samples")
    M = np.array([np.asarray(v, dtype=float).reshape(-1) for v in samples[start : start + k]])
    return M.T


def normalized_min_eigenvalue(X) -> float:
    """Smallest eigenvalue of X after scaling it to unit diagonal.

    A zero diagonal entry means a feature never moved, so the result is 0.
    """
    X = np.asarray(X, dtype=float)
    d = np.diag(X)
    if np.any(d <= 0.0):
        return 0.0
    s = 1.0 / np.sqrt(d)
    return float(np.linalg.eigvalsh(X * s[:, None] * s[None, :])[0])


def is_pe(samples: Sequence, k: int | None = None, start: int = 0, tol: float = PE_TOLERANCE):
    """Check that sum v v^T over the window ``[start, start + k)`` is positive definite.

    Returns ``(is_pe, min_eigenvalue)`` where the eigenvalue is taken from the
    unit-diagonal scaling of the Gram matrix, so the test does not depend on
    the units of individual features.
    """
    S = _stack(samples, k, start)
    lam = normalized_min_eigenvalue(S @ S.T)
    return lam > tol, lam


def stacked_regressors(inputs: Sequence, p: int, k: int) -> np.ndarray:
    """Rows are v_p(t) = [v(t); ...; v(t+p-1)] for t = 0..k-1."""
    V = _stack(inputs).T
    if p < 1 or k < 1:
        raise InvalidArgumentError("p and k must be positive")
    if V.shape[0] < k + p - 1:
        raise InvalidArgumentError(f"need {k + p - 1} inputs for order {p} over {k} windows, got {V.shape[0]}")
    return np.hstack([V[i : i + k] for i in range(p)])


def is_sufficiently_rich(inputs: Sequence, p: int, k: int | None = None, tol: float = PE_TOLERANCE) -> bool:
    """SR-p test: the p-step stacked regressors are PE over ``k`` windows.

    ``k`` defaults to every window the data allows.
    """
    n_inputs = len(inputs)
    if k is None:
        k = n_inputs - p + 1
    return is_pe(list(stacked_regressors(inputs, p, k)), tol=tol)[0]


def count_independent(samples: Sequence, tol: float = RANK_TOLERANCE) -> int:
    """Numerical rank of the matrix whose columns are ``samples``.

    Rows are scaled to unit norm first (exact rank is unchanged), then
    singular values above ``tol`` times the largest are counted.
    """
    S = _stack(samples)
    norms = np.linalg.norm(S, axis=1)
    live = norms > 0.0
    if not np.any(live):
        return 0
    S = S[live] / norms[live, None]
    sv = np.linalg.svd(S, compute_uv=False)
    return int(np.sum(sv > tol * sv[0]))


def default_sinusoids(order: int, seed: int) -> tuple:
    """ceil(order / 2) distinct seeded frequencies with equal weights summing to 1."""
    count = max(1, math.ceil(order / 2))
    rng = np.random.default_rng([seed, 0xF5E0])
    freqs = np.sort(rng.uniform(0.02, 0.48, count))
    phases = rng.uniform(0.0, 2.0 * np.pi, count)
    return tuple((float(f), 1.0 / count, float(ph)) for f, ph in zip(freqs, phases))


def default_signal(kind, channels: int, order: int, seed: int = 0, amplitude=1.0, **kw) -> SignalSpec:
    """Spec of the given kind with parameters sized for richness order ``order``."""
    kind = SignalKind(kind)
    if kind is SignalKind.SUM_OF_SINUSOIDS and "sinusoids" not in kw:
        kw["sinusoids"] = default_sinusoids(order, seed)
    return SignalSpec(kind=kind, channels=channels, amplitude=amplitude, seed=seed, **kw)
