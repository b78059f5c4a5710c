"""Linear state-space models with circulant (Toeplitz) state matrices.

``x' = A x + B u`` and ``y = C x + D u``. When ``A`` is circulant it is
diagonalized by Fourier modes, so products cost one FFT pair and the
exact exponential step is a per-mode scalar update.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadKernel, NonPositiveParameter, ShapeMismatch, UnstableStep
from .wavesim import KernelProfile

STATE_GUARD = 1e12


@dataclass(frozen=True)
class CirculantSpec:
    """Circulant matrix given by its first row: ``A[i, j] = c[(j - i) mod N]``."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c)
        if c.ndim != 1 or c.size < 1:
            raise ShapeMismatch("circulant first row must be a non-empty vector")
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.size

    def dense(self) -> np.ndarray:
        n = self.n
        i = np.arange(n)
        return self.c[(i[None, :] - i[:, None]) % n]

    def scaled(self, factor: float) -> "CirculantSpec":
        return CirculantSpec(self.c * factor)

    def with_zero_row_sum(self) -> "CirculantSpec":
        """Shift the diagonal so every row sums to zero (uniform mode becomes neutral)."""
        c = self.c.astype(float).copy()
        c[0] -= c.sum()
        return CirculantSpec(c)


def make_mexican_hat_circulant(n: int, kernel: KernelProfile) -> CirculantSpec:
    if n < 3:
        raise NonPositiveParameter(f"N must be >= 3, got {n}")
    if not kernel.is_center_surround:
        raise BadKernel("inhibitory_width must exceed excitatory_width")
    k = np.arange(n)
    ring = np.minimum(k, n - k)
    return CirculantSpec(kernel.weight(ring))


def is_toeplitz(a: np.ndarray, atol: float = 0.0) -> bool:
    a = np.asarray(a)
    for off in range(-a.shape[0] + 1, a.shape[1]):
        d = np.diagonal(a, off)
        if d.size and np.max(np.abs(d - d[0])) > atol:
            return False
    return True


def eigenvalues(spec: CirculantSpec) -> np.ndarray:
    return np.fft.fft(spec.c)


def eigenmodes(spec: CirculantSpec):
    """Eigenvalues and unit-norm Fourier eigenvectors (columns), paired so ``A f_k = lam_k f_k``.

    ``lam_k`` is the DFT of the first row; with the row convention used here
    the matching mode is ``f_k[n] = exp(-2 pi i k n / N) / sqrt(N)``.
    """
    n = spec.n
    lam = eigenvalues(spec)
    idx = np.arange(n)
    modes = np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    return lam, modes


def to_modes(x: np.ndarray) -> np.ndarray:
    """Coordinates of ``x`` in the eigenmode basis (unitary)."""
    n = x.shape[0]
    return np.fft.ifft(x, axis=0) * np.sqrt(n)


def from_modes(z: np.ndarray) -> np.ndarray:
    n = z.shape[0]
    return np.fft.fft(z, axis=0) / np.sqrt(n)


def circulant_apply(spec: CirculantSpec, x) -> np.ndarray:
    """``A @ x`` as a cyclic correlation in O(N log N)."""
    x = np.asarray(x)
    if x.shape[0] != spec.n:
        raise ShapeMismatch(f"vector length {x.shape[0]} != N = {spec.n}")
    lam = eigenvalues(spec)
    shape = (-1,) + (1,) * (x.ndim - 1)
    y = from_modes(lam.reshape(shape) * to_modes(x))
    if np.isrealobj(spec.c) and np.isrealobj(x):
        y = y.real
    return y


@dataclass(frozen=True)
class StateSpaceModel:
    """``A`` may be a dense array or a :class:`CirculantSpec`."""

    A: object
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise NonPositiveParameter("dt must be > 0")
        n = self.n
        B, C, D = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.B, self.C, self.D))
        if not isinstance(self.A, CirculantSpec):
            A = np.asarray(self.A, dtype=float)
            if A.shape != (n, n):
                raise ShapeMismatch(f"A must be square, got {A.shape}")
            object.__setattr__(self, "A", A)
        if B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], B.shape[1]):
            raise ShapeMismatch(
                f"inconsistent shapes A:{n}x{n} B:{B.shape} C:{C.shape} D:{D.shape}")
        for m in (B, C, D, self.dense_A):
            if not np.all(np.isfinite(m)):
                raise ShapeMismatch("model matrices must be finite")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.n if isinstance(self.A, CirculantSpec) else np.asarray(self.A).shape[0]

    @property
    def circulant(self) -> bool:
        return isinstance(self.A, CirculantSpec)

    @property
    def dense_A(self) -> np.ndarray:
        return self.A.dense() if self.circulant else self.A

    def apply_A(self, x):
        return circulant_apply(self.A, x) if self.circulant else self.A @ x

    def eigenvalues(self) -> np.ndarray:
        return eigenvalues(self.A) if self.circulant else np.linalg.eigvals(self.A)

    def stability_report(self) -> dict:
        lam = self.eigenvalues()
        top = float(np.max(lam.real))
        radius = float(np.max(np.abs(lam)))
        # round-off of a zero eigenvalue (e.g. zero row sums) is not growth
        stable = top <= 1e-12 * max(radius, 1.0)
        report = {"max_real_eigenvalue": top, "spectral_radius": radius, "stable": stable}
        if not stable:
            warnings.warn(f"A has eigenvalues with positive real part (max {top:.3g})",
                          RuntimeWarning, stacklevel=2)
        return report


def _zoh_gain(lam: np.ndarray, dt: float) -> np.ndarray:
    """(exp(lam dt) - 1) / lam, continuous at lam = 0."""
    lam = np.asarray(lam, dtype=complex)
    out = np.full(lam.shape, dt, dtype=complex)
    nz = np.abs(lam * dt) > 1e-12
    out[nz] = np.expm1(lam[nz] * dt) / lam[nz]
    small = ~nz
    out[small] = dt * (1 + lam[small] * dt / 2)
    return out


def simulate_ssm(model: StateSpaceModel, inputs, method: str = "euler", x0=None,
                 return_state: bool = False):
    """Run the model over inputs ``u_0 .. u_{T-1}`` and return ``y_0 .. y_{T-1}``.

    ``y_t = C x_t + D u_t`` where ``x_t`` is the state before ``u_t`` is
    applied. ``method`` is ``"euler"`` or ``"exact"`` (zero-order hold; spectral
    for circulant ``A``, matrix exponential otherwise). With ``return_state``
    the state after the last input is returned as well.
    """
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    T, m = u.shape
    if T < 1:
        raise NonPositiveParameter("need at least one input step")
    if m != model.B.shape[1]:
        raise ShapeMismatch(f"inputs have dimension {m}, model expects {model.B.shape[1]}")
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    ys = np.empty((T, model.C.shape[0]))
    dt = model.dt
    Bu = u @ model.B.T  # (T, N)

    if method == "euler":
        for t in range(T):
            ys[t] = model.C @ x + model.D @ u[t]
            x = x + dt * (model.apply_A(x) + Bu[t])
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > STATE_GUARD:
                raise UnstableStep(f"Euler state exceeded {STATE_GUARD:g} at step {t}; reduce dt")
    elif method == "exact" and model.circulant:
        lam = eigenvalues(model.A)
        decay = np.exp(lam * dt)
        gain = _zoh_gain(lam, dt)
        z = to_modes(x)
        bz = to_modes(Bu.T)  # (N, T)
        for t in range(T):
            ys[t] = model.C @ from_modes(z).real + model.D @ u[t]
            z = decay * z + gain * bz[:, t]
        x = from_modes(z).real
    elif method == "exact":
        n = model.n
        # augmented exponential gives exp(A dt) and the ZOH input integral in one go
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = model.A * dt
        aug[:n, n:] = np.eye(n) * dt
        E = scipy.linalg.expm(aug)
        Ad, G = E[:n, :n], E[:n, n:]
        for t in range(T):
            ys[t] = model.C @ x + model.D @ u[t]
            x = Ad @ x + G @ Bu[t]
    else:
        raise ValueError(f"unknown method {method!r}")
    return (ys, x) if return_state else ys


def mode_trajectory(lam: complex, z0: complex, forcing, dt: float) -> np.ndarray:
    """Closed-form ZOH trajectory of one scalar mode ``z' = lam z + f``."""
    forcing = np.asarray(forcing, dtype=complex)
    T = forcing.size
    k = np.arange(T + 1)
    out = np.exp(lam * dt * k) * z0
    g = _zoh_gain(np.array([lam]), dt)[0]
    for s in range(T):
        out[s + 1 :] += np.exp(lam * dt * (k[s + 1 :] - s - 1)) * g * forcing[s]
    return out


def spatial_variance(x: np.ndarray, center: int = 0) -> float:
    """Energy-weighted mean squared ring distance from ``center``."""
    n = x.shape[0]
    k = (np.arange(n) - center) % n
    d = np.minimum(k, n - k).astype(float)
    e = np.abs(x) ** 2
    return float((d**2 * e).sum() / e.sum())
