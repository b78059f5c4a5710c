"""Delayed recurrent network on a topographic lattice.

Every unit integrates a leaky membrane potential driven by feedforward input
and by the outputs of other units, each arriving after a conduction delay set
by distance. Two output rules are available: a rectified (or linear) rate and
leaky integrate-and-fire spikes. A punctate stimulus makes the stimulated
unit fire, and its output reaches a unit at distance ``r`` exactly
``r / v`` later, so the subthreshold potential forms a ring expanding at the
conduction velocity.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import (
    NoWaveDetected,
    NonFiniteState,
    NonPositiveParameter,
    ProtocolOutOfRange,
    ShapeMismatch,
    WrongVariant,
)
from .lattice import DelayTable, TopographicLattice


class Variant(str, Enum):
    RATE = "rate_leaky"
    SPIKING = "spiking_lif"


@dataclass(frozen=True)
class KernelProfile:
    """Center-surround (difference of Gaussians) coupling; widths in lattice units."""

    excitatory_amplitude: float = 1.0
    excitatory_width: float = 20.0
    inhibitory_amplitude: float = 0.1
    inhibitory_width: float = 60.0
    cutoff_radius: float = 48.0

    def __post_init__(self):
        if not (self.excitatory_width > 0 and self.inhibitory_width > 0):
            raise NonPositiveParameter("kernel widths must be > 0")
        if self.excitatory_amplitude < 0 or self.inhibitory_amplitude < 0:
            raise NonPositiveParameter("kernel amplitudes must be >= 0")
        if self.cutoff_radius < 0:
            raise NonPositiveParameter("cutoff_radius must be >= 0")

    @property
    def is_center_surround(self) -> bool:
        return self.inhibitory_width > self.excitatory_width

    def weight(self, r):
        r = np.asarray(r, dtype=float)
        return (self.excitatory_amplitude * np.exp(-(r**2) / (2 * self.excitatory_width**2))
                - self.inhibitory_amplitude * np.exp(-(r**2) / (2 * self.inhibitory_width**2)))


def mexican_hat(r, kernel: KernelProfile):
    return kernel.weight(r)


@dataclass(frozen=True)
class NeuronModel:
    variant: Variant = Variant.SPIKING
    tau: float = 1.0  # ms
    threshold: float = 1.0
    reset: float = 0.0
    rest: float = 0.0
    recurrent_gain: float = 0.5
    feedforward_gain: float = 1.0
    noise_std: float = 0.01
    rectify: bool = True  # rate variant only; False gives a linear network

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not self.tau > 0:
            raise NonPositiveParameter(f"tau must be > 0, got {self.tau!r}")
        if self.noise_std < 0:
            raise NonPositiveParameter("noise_std must be >= 0")
        if self.variant is Variant.SPIKING and not self.threshold > self.reset:
            raise NonPositiveParameter("threshold must exceed reset")


@dataclass(frozen=True)
class StimulusEvent:
    position: tuple[int, int]  # (x, y)
    onset: int
    duration: int = 1
    amplitude: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "position", (int(self.position[0]), int(self.position[1])))
        if self.onset < 0:
            raise ProtocolOutOfRange(f"onset must be >= 0, got {self.onset}")
        if self.duration < 1:
            raise ProtocolOutOfRange(f"duration must be >= 1, got {self.duration}")
        if not self.amplitude > 0:
            raise NonPositiveParameter(f"amplitude must be > 0, got {self.amplitude}")

    def active(self, step: int) -> bool:
        return self.onset <= step < self.onset + self.duration


class Connectivity:
    """Recurrent weights grouped by arrival lag.

    ``groups[k]`` lists the displacements whose output arrives ``k`` steps
    later together with their weights. The self connection has zero delay
    but is read one step late so the update stays explicit.
    """

    def __init__(self, table: DelayTable, kernel: KernelProfile):
        lat = table.lattice
        self.lattice = lat
        self.table = table
        units = table.distances / lat.spacing
        weights = kernel.weight(units)
        lags = np.maximum(table.steps, 1)
        self.max_lag = int(lags.max()) if lags.size else 1
        self.groups = {}
        for k in np.unique(lags):
            sel = lags == k
            self.groups[int(k)] = (table.offsets[sel, 0], table.offsets[sel, 1], weights[sel])
        self.total_abs_weight = float(np.abs(weights).sum())
        self._spectra = None

    def spectra(self) -> np.ndarray:
        """Per-lag kernel spectra, shape ``(max_lag + 1, P, Q // 2 + 1)``."""
        if self._spectra is None:
            h, w = self.lattice.shape
            P, Q = (h, w) if self.lattice.periodic else (2 * h, 2 * w)
            kern = np.zeros((self.max_lag + 1, P, Q))
            for k, (dy, dx, wts) in self.groups.items():
                np.add.at(kern[k], (dy % P, dx % Q), wts)
            self._spectra = np.fft.rfft2(kern, axes=(1, 2))
        return self._spectra

    @property
    def fft_shape(self):
        h, w = self.lattice.shape
        return (h, w) if self.lattice.periodic else (2 * h, 2 * w)

    def scatter(self, lag: int, ys, xs, vals, out: np.ndarray) -> None:
        """Add the lag-``lag`` contributions of sparse outputs into ``out``."""
        group = self.groups.get(lag)
        if group is None:
            return
        dy, dx, wts = group
        h, w = self.lattice.shape
        ty = ys[:, None] + dy[None, :]
        tx = xs[:, None] + dx[None, :]
        contrib = vals[:, None] * wts[None, :]
        if self.lattice.periodic:
            ty %= h
            tx %= w
        else:
            ok = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
            ty, tx, contrib = ty[ok], tx[ok], contrib[ok]
        np.add.at(out, (ty.ravel(), tx.ravel()), contrib.ravel())


class NetworkState:
    """Mutable simulation state: potentials, delay ring buffer of past outputs, RNG."""

    #: frames with at most this many nonzero outputs are propagated exactly by scatter
    SPARSE_LIMIT = 256

    def __init__(self, lattice, kernel, neuron, dt, seed, connectivity=None):
        self.lattice = lattice
        self.kernel = kernel
        self.neuron = neuron
        self.dt = float(dt)
        self.seed = seed
        self.conn = connectivity or Connectivity(
            DelayTable.build(lattice, dt, kernel.cutoff_radius), kernel)
        self.rng = np.random.default_rng(seed)
        self.potentials = np.full(lattice.shape, neuron.rest, dtype=float)
        self.step_count = 0
        self.buffer_length = self.conn.max_lag + 1
        # slot -> None | ("sparse", ys, xs, vals) | ("dense", frame)
        self.buffer = [None] * self.buffer_length
        P, Q = self.conn.fft_shape
        self._spec_buffer = None
        self._spec_live = np.zeros(self.buffer_length, dtype=bool)
        self._fft_shape = (P, Q)
        self.last_output = np.zeros(lattice.shape)
        self.last_spikes = None
        self.last_recorded = self.potentials.copy()

    @property
    def max_delay_steps(self) -> int:
        return self.conn.max_lag

    def recurrent_input(self) -> np.ndarray:
        """Sum of delayed outputs arriving at the current step."""
        t = self.step_count
        total = np.zeros(self.lattice.shape)
        dense_lags = []
        for k in range(1, self.buffer_length):
            slot = (t - k) % self.buffer_length
            entry = self.buffer[slot]
            if entry is None or t - k < 0:
                continue
            if entry[0] == "sparse":
                self.conn.scatter(k, entry[1], entry[2], entry[3], total)
            else:
                dense_lags.append((k, slot))
        if dense_lags:
            W = self.conn.spectra()
            acc = np.zeros(W.shape[1:], dtype=complex)
            peak = 0.0
            for k, slot in dense_lags:
                acc += W[k] * self._spec_buffer[slot]
                peak = max(peak, float(np.abs(self.buffer[slot][1]).max()))
            h, w = self.lattice.shape
            full = np.fft.irfft2(acc, s=self._fft_shape)[:h, :w]
            # flush FFT round-off so untouched units stay exactly zero
            full[np.abs(full) < 1e-12 * self.conn.total_abs_weight * peak] = 0.0
            total += full
        return total

    def _store(self, output: np.ndarray) -> None:
        slot = self.step_count % self.buffer_length
        nz = np.flatnonzero(output)
        if nz.size == 0:
            self.buffer[slot] = None
        elif nz.size <= self.SPARSE_LIMIT:
            ys, xs = np.divmod(nz, self.lattice.width)
            self.buffer[slot] = ("sparse", ys, xs, output.ravel()[nz].copy())
        else:
            self.buffer[slot] = ("dense", output.copy())
            if self._spec_buffer is None:
                P, Q = self._fft_shape
                self._spec_buffer = np.zeros((self.buffer_length, P, Q // 2 + 1), dtype=complex)
            self._spec_buffer[slot] = np.fft.rfft2(output, s=self._fft_shape)


def build_network(lattice: TopographicLattice, kernel: KernelProfile, neuron_model: NeuronModel,
                  dt: float = 1.0, seed: int = 0) -> NetworkState:
    if not dt > 0:
        raise NonPositiveParameter(f"dt must be > 0, got {dt!r}")
    if kernel.cutoff_radius == 0:
        warnings.warn("cutoff_radius is 0: only self-coupling remains", RuntimeWarning, stacklevel=2)
    return NetworkState(lattice, kernel, neuron_model, dt, seed)


def step(state: NetworkState, feedforward_input=None) -> NetworkState:
    """Advance ``state`` by one step in place and return it."""
    nm = state.neuron
    shape = state.lattice.shape
    if feedforward_input is None:
        feedforward_input = np.zeros(shape)
    feedforward_input = np.asarray(feedforward_input, dtype=float)
    if feedforward_input.shape != shape:
        raise ShapeMismatch(f"input shape {feedforward_input.shape} != lattice {shape}")

    decay = math.exp(-state.dt / nm.tau)
    v = nm.rest + (state.potentials - nm.rest) * decay
    v = v + nm.feedforward_gain * feedforward_input
    if nm.recurrent_gain != 0:
        v = v + nm.recurrent_gain * state.recurrent_input()
    if nm.noise_std > 0:
        # scaled so that the stationary std of the potential equals noise_std
        v = v + nm.noise_std * math.sqrt(1.0 - decay**2) * state.rng.standard_normal(shape)
    if not np.all(np.isfinite(v)):
        raise NonFiniteState(f"non-finite potential at step {state.step_count}")

    state.last_recorded = v.copy()
    if nm.variant is Variant.SPIKING:
        spikes = v >= nm.threshold
        v[spikes] = nm.reset
        output = spikes.astype(float)
        state.last_spikes = spikes
    else:
        output = v - nm.rest
        if nm.rectify:
            output = np.maximum(output, 0.0)
        state.last_spikes = None
    state.potentials = v
    state.last_output = output
    state._store(output)
    state.step_count += 1
    return state


@dataclass
class Recording:
    """Spacetime field of a run: one membrane-potential frame per step.

    Frames hold the potential after integration and before any spike reset,
    so a spiking unit shows its suprathreshold value on the step it fires.
    """

    frames: np.ndarray  # (T, H, W)
    dt: float
    lattice: TopographicLattice
    neuron: NeuronModel
    protocol: tuple = ()
    seed: int | None = None
    raster: np.ndarray | None = None  # (T, H, W) bool, spiking variant only
    start_step: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0]

    @property
    def rest(self) -> float:
        return self.neuron.rest

    @property
    def noise_std(self) -> float:
        return self.neuron.noise_std

    def activity(self) -> np.ndarray:
        return self.frames - self.neuron.rest

    def snapshot(self, step: int) -> "Snapshot":
        return Snapshot(self.frames[step].copy(), step, self.dt, self.lattice,
                        rest=self.neuron.rest, noise_std=self.neuron.noise_std)

    def spike_counts(self, window=None) -> np.ndarray:
        if self.raster is None:
            raise WrongVariant("recording has no spike raster (rate variant)")
        lo, hi = window if window is not None else (0, self.n_steps)
        return self.raster[lo:hi].sum(axis=0)


@dataclass
class Snapshot:
    values: np.ndarray  # (H, W)
    step: int
    dt: float
    lattice: TopographicLattice
    rest: float = 0.0
    noise_std: float = 0.0

    def activity(self) -> np.ndarray:
        return self.values - self.rest


def protocol_input(lattice: TopographicLattice, protocol, step_index: int) -> np.ndarray:
    field_ = np.zeros(lattice.shape)
    for ev in protocol:
        if ev.active(step_index):
            x, y = ev.position
            field_[y, x] += ev.amplitude
    return field_


def run_protocol(network: NetworkState, protocol, total_steps: int) -> Recording:
    """Drive ``network`` with the protocol for ``total_steps`` steps and record every frame.

    Onsets are relative to the network's current step.
    """
    protocol = tuple(protocol)
    lat = network.lattice
    for ev in protocol:
        x, y = ev.position
        if not (0 <= x < lat.width and 0 <= y < lat.height):
            raise ProtocolOutOfRange(f"stimulus at {ev.position} outside lattice")
        if ev.onset + ev.duration > total_steps:
            raise ProtocolOutOfRange(
                f"event at onset {ev.onset} (duration {ev.duration}) exceeds {total_steps} steps")
    spiking = network.neuron.variant is Variant.SPIKING
    frames = np.empty((total_steps,) + lat.shape)
    raster = np.zeros((total_steps,) + lat.shape, dtype=bool) if spiking else None
    start = network.step_count
    for s in range(total_steps):
        step(network, protocol_input(lat, protocol, s))
        frames[s] = network.last_recorded
        if spiking:
            raster[s] = network.last_spikes
    return Recording(frames, network.dt, lat, network.neuron, protocol, network.seed, raster,
                     start_step=start, meta={"max_delay_steps": network.max_delay_steps})


def simulate(lattice, kernel, neuron, protocol, total_steps, dt=1.0, seed=0) -> Recording:
    return run_protocol(build_network(lattice, kernel, neuron, dt, seed), protocol, total_steps)


def detection_threshold(noise_std: float, reference_peak: float) -> float:
    """5 noise standard deviations; a tiny fraction of the peak for noise-free fields."""
    if noise_std > 0:
        return 5.0 * noise_std
    return 1e-6 * reference_peak


def front_radius(activity: np.ndarray, lattice: TopographicLattice, center, threshold: float):
    """Outermost radius (mm) whose one-unit-thick shell is at least half active, or None."""
    active = np.abs(activity) > threshold
    if not active.any():
        return None
    d = lattice.distance_map(center).ravel() / lattice.spacing
    order = np.argsort(d, kind="stable")
    d_sorted = d[order]
    act_sorted = active.ravel()[order]
    cum_active = np.concatenate([[0], np.cumsum(act_sorted)])
    cand = np.unique(d_sorted[act_sorted])[::-1]
    hi = np.searchsorted(d_sorted, cand + 1e-9, side="right")
    lo = np.searchsorted(d_sorted, cand - 1.0 + 1e-9, side="right")
    n_shell = hi - lo
    n_active = cum_active[hi] - cum_active[lo]
    ok = n_active >= 0.5 * n_shell
    if not ok.any():
        return None
    return float(cand[np.argmax(ok)] * lattice.spacing)


def front_trajectory(recording: Recording, event: StimulusEvent, window=None):
    """Front radius (mm, NaN when undetected) for each frame from the event onset onward."""
    act = recording.activity()
    stop = recording.n_steps if window is None else min(recording.n_steps, event.onset + window)
    post = act[event.onset:stop]
    thr = detection_threshold(recording.noise_std, float(np.abs(post).max()) if post.size else 0.0)
    radii = np.full(post.shape[0], np.nan)
    for i, frame in enumerate(post):
        r = front_radius(frame, recording.lattice, event.position, thr)
        if r is not None:
            radii[i] = r
    times = np.arange(post.shape[0]) * recording.dt
    return times, radii


def measure_wave_speed(recording: Recording, onset_event: StimulusEvent, window=None) -> float:
    """Least-squares slope (mm/ms) of front radius against time after the event.

    Frames where the front has already reached the edge of the region the wave
    ever covers are dropped, since the front can no longer advance there.
    """
    times, radii = front_trajectory(recording, onset_event, window)
    ok = np.isfinite(radii)
    if ok.sum() < 2:
        raise NoWaveDetected("no expanding front above threshold after the event")
    reach = radii[ok].max()
    ok &= radii < reach - recording.lattice.spacing + 1e-9
    ok[0] = False  # onset frame: the wave has not left its source yet
    if ok.sum() < 2:
        raise NoWaveDetected("front detected in fewer than two frames")
    slope, _ = np.polyfit(times[ok], radii[ok], 1)
    return float(slope)


def participation_fraction(recording: Recording, window=None) -> float:
    if recording.raster is None:
        raise WrongVariant("participation needs a spiking-variant recording")
    lo, hi = window if window is not None else (0, recording.n_steps)
    spiked = recording.raster[lo:hi].any(axis=0)
    return float(spiked.sum() / spiked.size)


__all__ = [
    "Variant", "KernelProfile", "NeuronModel", "StimulusEvent", "NetworkState", "Recording",
    "Snapshot", "Connectivity", "build_network", "step", "run_protocol", "simulate",
    "measure_wave_speed", "participation_fraction", "front_radius", "front_trajectory",
    "mexican_hat", "protocol_input", "detection_threshold",
]
