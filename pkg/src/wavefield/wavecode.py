"""Decoders that read stimulus history back out of a wave snapshot.

A single ring gives *where* (its center) and *when* (its radius over the
conduction velocity). Several overlapping rings are peeled apart by greedy
template matching against a bank of single-event responses.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NoEventDetected, NonPositiveParameter, ShapeMismatch
from .lattice import Boundary, DelayRounding, TopographicLattice
from .wavesim import (
    KernelProfile,
    NeuronModel,
    Snapshot,
    StimulusEvent,
    build_network,
    detection_threshold,
    run_protocol,
)


@dataclass(frozen=True)
class DecodedEvent:
    position: tuple[float, float]  # (x, y), fractional unit coordinates
    onset: float  # steps
    confidence: float = 0.0


def _circle_fit(xs, ys, w):
    """Weighted algebraic circle fit; returns (cx, cy, r)."""
    sw = np.sqrt(w)
    A = np.column_stack([xs, ys, np.ones_like(xs)]) * sw[:, None]
    b = -(xs**2 + ys**2) * sw
    (D, E, F), *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy = -D / 2, -E / 2
    r2 = cx**2 + cy**2 - F
    return cx, cy, float(np.sqrt(max(r2, 0.0)))


def decode_single(snapshot: Snapshot, lattice: TopographicLattice, v: float,
                  threshold: float | None = None) -> DecodedEvent:
    """Center and onset of the one wave present in ``snapshot``.

    ``v`` is the conduction velocity in mm/ms. Pixels above threshold are
    weighted by their activity in a least-squares circle fit; the fitted
    center is the stimulus position and the radius, converted to steps,
    is the time since onset.
    """
    if not v > 0:
        raise NonPositiveParameter("velocity must be > 0")
    act = np.abs(snapshot.activity())
    peak = float(act.max())
    thr = threshold if threshold is not None else detection_threshold(snapshot.noise_std, peak)
    if peak <= thr or peak == 0.0:
        raise NoEventDetected(f"peak activity {peak:.3g} below threshold {thr:.3g}")
    ys, xs = np.nonzero(act > thr)
    w = act[ys, xs]
    xs, ys = xs.astype(float), ys.astype(float)
    if xs.size >= 3 and np.linalg.matrix_rank(np.column_stack([xs, ys, np.ones_like(xs)])) == 3:
        cx, cy, r = _circle_fit(xs, ys, w)
    else:
        cx, cy, r = float(np.average(xs, weights=w)), float(np.average(ys, weights=w)), 0.0
    cx = float(np.clip(cx, 0, lattice.width - 1))
    cy = float(np.clip(cy, 0, lattice.height - 1))
    lag = r * lattice.spacing / v / snapshot.dt
    if lattice.delay_rounding is DelayRounding.UP:
        lag += 0.5  # rounding travel times up delays arrivals by half a step on average
    onset = min(snapshot.step - lag, float(snapshot.step))
    return DecodedEvent((cx, cy), onset, confidence=peak / thr)


class TemplateBank:
    """Single-event responses indexed by (position, lag), scored by FFT correlation.

    Responses are translation invariant away from boundaries, so one kernel
    per lag is stored, measured by simulating a noise-free event at the center
    of a canvas large enough to hold every displacement. Template ``(p, L)``
    is that kernel shifted to ``p`` and cropped to the lattice; its norm after
    cropping is precomputed so scores are correlations with unit-norm templates.
    """

    def __init__(self, lattice: TopographicLattice, kernels: np.ndarray):
        self.lattice = lattice
        self.kernels = kernels  # (horizon + 1, KH, KW), displacement (0, 0) at center / origin
        h, w = lattice.shape
        self.horizon = kernels.shape[0] - 1
        if lattice.periodic:
            self._fshape = (h, w)
            self._kspec = np.fft.rfft2(kernels, axes=(1, 2))
            sq = np.fft.rfft2(kernels**2, axes=(1, 2))
            self.norms = np.sqrt(np.maximum(sq[:, 0:1, 0:1].real, 0) * np.ones((1, h, w)))
        else:
            kh, kw = kernels.shape[1:]
            self._fshape = (h + kh - 1, w + kw - 1)
            flipped = kernels[:, ::-1, ::-1]
            self._kspec = np.fft.rfft2(flipped, s=self._fshape, axes=(1, 2))
            sq = np.fft.rfft2(flipped**2, s=self._fshape, axes=(1, 2))
            mask = np.fft.rfft2(np.ones((h, w)), s=self._fshape)
            n2 = np.fft.irfft2(sq * mask, s=self._fshape, axes=(1, 2))
            self.norms = np.sqrt(np.maximum(n2[:, kh // 2 : kh // 2 + h, kw // 2 : kw // 2 + w], 0))
        self._tiny = 1e-12 * float(self.norms.max()) if self.norms.size else 0.0

    @classmethod
    def build(cls, lattice: TopographicLattice, kernel: KernelProfile, neuron: NeuronModel,
              dt: float = 1.0, horizon: int = 40, amplitude: float = 1.5, duration: int = 1):
        quiet = replace(neuron, noise_std=0.0)
        h, w = lattice.shape
        if lattice.periodic:
            canvas, center = lattice, (0, 0)
        else:
            canvas = TopographicLattice(2 * w - 1, 2 * h - 1, lattice.spacing,
                                        lattice.conduction_velocity, Boundary.OPEN,
                                        lattice.delay_rounding)
            center = (w - 1, h - 1)
        net = build_network(canvas, kernel, quiet, dt, seed=0)
        rec = run_protocol(net, [StimulusEvent(center, 0, duration, amplitude)], horizon + 1)
        kernels = rec.activity()
        return cls(lattice, kernels)

    def kernel(self, lag: int) -> np.ndarray:
        return self.kernels[lag]

    def template(self, position, lag: int, normalized: bool = True) -> np.ndarray:
        """Template for an event at ``position`` (x, y) observed ``lag`` steps later."""
        x, y = int(position[0]), int(position[1])
        h, w = self.lattice.shape
        k = self.kernels[lag]
        if self.lattice.periodic:
            out = np.roll(k, (y, x), axis=(0, 1))
        else:
            kh, kw = k.shape
            cy, cx = kh // 2, kw // 2
            out = k[cy - y : cy - y + h, cx - x : cx - x + w].copy()
        if normalized:
            n = np.linalg.norm(out)
            if n > 0:
                out = out / n
        return out

    def correlations(self, field: np.ndarray) -> np.ndarray:
        """Raw inner products ``<field, T(p, L)>`` for all lags and positions: (L, H, W)."""
        h, w = self.lattice.shape
        spec = np.fft.rfft2(field, s=self._fshape)
        if self.lattice.periodic:
            full = np.fft.irfft2(np.conj(self._kspec) * spec[None], s=self._fshape, axes=(1, 2))
            return full
        kh, kw = self.kernels.shape[1:]
        full = np.fft.irfft2(self._kspec * spec[None], s=self._fshape, axes=(1, 2))
        return full[:, kh // 2 : kh // 2 + h, kw // 2 : kw // 2 + w]

    def scores(self, field: np.ndarray) -> np.ndarray:
        """Correlations with unit-normalized templates (zero where a template is empty)."""
        c = self.correlations(field)
        out = np.zeros_like(c)
        ok = self.norms > self._tiny
        out[ok] = c[ok] / self.norms[ok]
        return out


def decode_sequence(snapshot: Snapshot, bank: TemplateBank, max_events: int,
                    floor: float = 0.2) -> list[DecodedEvent]:
    """Greedy matching pursuit over the template bank.

    Each pass picks the best-scoring (position, lag) template, then refits
    the amplitudes of all picks jointly and subtracts them. Stops after
    ``max_events`` picks or when the best score falls below ``floor`` times
    the first pick's score. Events come back in onset order.
    """
    if max_events < 0:
        raise NonPositiveParameter("max_events must be >= 0")
    if snapshot.values.shape != bank.lattice.shape:
        raise ShapeMismatch("snapshot does not match the bank's lattice")
    target = snapshot.activity().astype(float)
    residual = target.copy()
    picks: list[tuple[int, int, int, float]] = []
    atoms: list[np.ndarray] = []
    first = None
    while len(picks) < max_events:
        s = bank.scores(residual)
        idx = np.unravel_index(int(np.argmax(s)), s.shape)
        best = float(s[idx])
        if best <= 0 or (first is not None and best < floor * first):
            break
        lag, y, x = (int(i) for i in idx)
        if any(p[:3] == (lag, y, x) for p in picks):
            break
        first = best if first is None else first
        picks.append((lag, y, x, best))
        atoms.append(bank.template((x, y), lag).ravel())
        D = np.column_stack(atoms)
        coef, *_ = np.linalg.lstsq(D, target.ravel(), rcond=None)
        residual = target - (D @ coef).reshape(target.shape)
    events = [DecodedEvent((float(x), float(y)), float(snapshot.step - lag), conf)
              for lag, y, x, conf in picks]
    return sorted(events, key=lambda e: (e.onset, e.position))


def order_distance(recording_a, recording_b, window=None) -> float:
    """One minus the cosine similarity of two rest-subtracted spacetime windows."""
    lo, hi = window if window is not None else (0, recording_a.n_steps)
    a = recording_a.activity()[lo:hi]
    b = recording_b.activity()[lo:hi]
    if a.shape != b.shape:
        raise ShapeMismatch(f"window shapes differ: {a.shape} vs {b.shape}")
    return cosine_distance(a, b)


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0 if na == nb else 1.0
    return float(np.clip(1.0 - a @ b / (na * nb), 0.0, 2.0))


def separation_statistic(between, within) -> float:
    """Mean between-order distance over mean within-order distance."""
    within = float(np.mean(within))
    between = float(np.mean(between))
    return np.inf if within == 0 else between / within
