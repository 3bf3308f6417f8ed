"""Frequency diverse coprime array geometry, steering vectors and snapshots."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class InvalidLayoutError(ValueError):
    """Raised when coprime parameters do not describe a valid array."""


class InvalidSceneError(ValueError):
    pass


@dataclass(frozen=True)
class CoprimeLayout:
    """Sensor positions and carrier offsets of a coprime array.

    Both the sensor positions (``integer_set * d``) and the carrier
    frequencies (``f0 + integer_set * df``) follow the same coprime pattern.
    Spatial phases assume half-wavelength unit spacing, so ``d`` is only
    carried for reporting.
    """

    m_coprime: int
    n_coprime: int
    unit_spacing_d: float
    ref_freq_f0: float
    unit_offset_df: float
    integer_set: np.ndarray = field(repr=False)
    c: float = SPEED_OF_LIGHT

    @property
    def size(self) -> int:
        return len(self.integer_set)

    @property
    def max_lag(self) -> int:
        """``L = M(N-1)``, the largest coarray lag."""
        return self.m_coprime * (self.n_coprime - 1)

    @property
    def positions(self) -> np.ndarray:
        return self.integer_set * self.unit_spacing_d

    @property
    def carrier_frequencies(self) -> np.ndarray:
        return self.ref_freq_f0 + self.integer_set * self.unit_offset_df

    @property
    def max_range(self) -> float:
        """Unambiguous range ``c / (2 df)``."""
        return self.c / (2.0 * self.unit_offset_df)

    def range_phase(self, r) -> np.ndarray:
        """Per-unit-lag range phase ``4 pi df r / c`` in radians."""
        return 4.0 * np.pi * self.unit_offset_df * np.asarray(r, dtype=float) / self.c


def build_coprime_layout(M: int, N: int, d: float = 0.015, f0: float = 10e9,
                         df: float = 30e3, c: float = SPEED_OF_LIGHT) -> CoprimeLayout:
    """Build the coprime integer set ``{N m} U {M n}`` and wrap it in a layout.

    Raises:
        InvalidLayoutError: if ``M, N`` are not coprime, ``M >= N``, ``M < 2``
            or a physical scale is not positive.
    """
    M, N = int(M), int(N)
    if M < 2 or M >= N:
        raise InvalidLayoutError(f'need 2 <= M < N, got M={M}, N={N}')
    if gcd(M, N) != 1:
        raise InvalidLayoutError(f'M={M} and N={N} are not coprime')
    if d <= 0 or df <= 0 or c <= 0:
        raise InvalidLayoutError('d, df and c must be positive')
    s1 = N * np.arange(M)
    s2 = M * np.arange(N)
    integer_set = np.union1d(s1, s2).astype(int)
    integer_set.setflags(write=False)
    return CoprimeLayout(M, N, float(d), float(f0), float(df), integer_set, float(c))


@dataclass(frozen=True)
class Target:
    theta: float  # degrees
    range: float  # meters
    power: float = 1.0


@dataclass(frozen=True)
class TargetScene:
    targets: tuple[Target, ...]
    noise_power: float
    snapshots: int
    rng_seed: int = 0

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([t.theta for t in self.targets], dtype=float)

    @property
    def ranges(self) -> np.ndarray:
        return np.array([t.range for t in self.targets], dtype=float)

    @property
    def powers(self) -> np.ndarray:
        return np.array([t.power for t in self.targets], dtype=float)

    def validate(self, layout: CoprimeLayout, allow_empty: bool = False) -> None:
        if not self.targets and not allow_empty:
            raise InvalidSceneError('scene needs at least one target')
        if self.noise_power < 0:
            raise InvalidSceneError('noise power must be nonnegative')
        if self.snapshots < 1:
            raise InvalidSceneError('need at least one snapshot')
        for t in self.targets:
            if not -90.0 < t.theta < 90.0:
                raise InvalidSceneError(f'theta {t.theta} outside (-90, 90)')
            if not 0.0 <= t.range < layout.max_range:
                raise InvalidSceneError(
                    f'range {t.range} outside [0, {layout.max_range:.3f})')
            if t.power <= 0:
                raise InvalidSceneError('target powers must be positive')


def make_scene(thetas, ranges, powers=None, noise_power=0.0, snapshots=1,
               rng_seed=0) -> TargetScene:
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    ranges = np.atleast_1d(np.asarray(ranges, dtype=float))
    if powers is None:
        powers = np.ones_like(thetas)
    powers = np.broadcast_to(np.asarray(powers, dtype=float), thetas.shape)
    targets = tuple(Target(float(t), float(r), float(p))
                    for t, r, p in zip(thetas, ranges, powers))
    return TargetScene(targets, float(noise_power), int(snapshots), int(rng_seed))


def spatial_steering(layout: CoprimeLayout, theta, indices=None) -> np.ndarray:
    """Entries ``exp(-j pi s sin(theta))`` for each integer index ``s``.

    ``theta`` is in degrees. A vector of angles yields one column per angle.
    """
    s = layout.integer_set if indices is None else np.asarray(indices)
    u = np.sin(np.deg2rad(np.asarray(theta, dtype=float)))
    return np.exp(-1j * np.pi * np.multiply.outer(s, u))


def frequency_steering(layout: CoprimeLayout, r, indices=None) -> np.ndarray:
    """Entries ``exp(+j 4 pi s df r / c)`` for each integer index ``s``."""
    s = layout.integer_set if indices is None else np.asarray(indices)
    return np.exp(1j * np.multiply.outer(s, layout.range_phase(r)))


def joint_steering(layout: CoprimeLayout, theta, r) -> np.ndarray:
    """Kronecker product ``h_p(theta) (x) h_f(r)``, sensor index major.

    Vector inputs of equal length give a ``(|S|^2, K)`` steering matrix.
    """
    hp = spatial_steering(layout, theta)
    hf = frequency_steering(layout, r)
    if hp.ndim == 1:
        return np.kron(hp, hf)
    n = layout.size
    return (hp[:, None, :] * hf[None, :, :]).reshape(n * n, -1)


def joint_steering_matrix(layout: CoprimeLayout, scene: TargetScene) -> np.ndarray:
    n = layout.size
    if scene.n_targets == 0:
        return np.zeros((n * n, 0), dtype=complex)
    return joint_steering(layout, scene.thetas, scene.ranges)


def simulate_snapshots(layout: CoprimeLayout, scene: TargetScene,
                       rng: np.random.Generator | None = None,
                       signals: np.ndarray | None = None) -> np.ndarray:
    """Draw ``T`` receive snapshots ``x(t) = H s(t) + n(t)``.

    Source envelopes and noise are i.i.d. circular complex Gaussian. The
    random stream depends only on ``scene.rng_seed`` unless ``rng`` is
    given. ``signals`` (K x T) overrides the random source envelopes.
    """
    scene.validate(layout, allow_empty=True)
    if rng is None:
        rng = np.random.default_rng(scene.rng_seed)
    n2 = layout.size ** 2
    T = scene.snapshots
    H = joint_steering_matrix(layout, scene)
    if signals is None:
        amp = np.sqrt(scene.powers / 2.0)[:, None]
        signals = amp * (rng.standard_normal((scene.n_targets, T))
                         + 1j * rng.standard_normal((scene.n_targets, T)))
    else:
        signals = np.asarray(signals, dtype=complex).reshape(scene.n_targets, T)
    x = H @ signals
    if scene.noise_power > 0:
        x = x + np.sqrt(scene.noise_power / 2.0) * (
            rng.standard_normal((n2, T)) + 1j * rng.standard_normal((n2, T)))
    return x


def sample_covariance(snapshots: np.ndarray) -> np.ndarray:
    """Sample covariance ``(1/T) X X^H``, symmetrized to be exactly Hermitian."""
    x = np.asarray(snapshots)
    if x.ndim == 1:
        x = x[:, None]
    R = (x @ x.conj().T) / x.shape[1]
    return 0.5 * (R + R.conj().T)


def theoretical_covariance(layout: CoprimeLayout, scene: TargetScene) -> np.ndarray:
    """Exact ``R = sum_k p_k h_k h_k^H + noise * I`` for uncorrelated targets."""
    H = joint_steering_matrix(layout, scene)
    R = (H * scene.powers) @ H.conj().T if scene.n_targets else 0.0
    return R + scene.noise_power * np.eye(layout.size ** 2)
