"""Multipath CSI synthesis.

A receiver's channel is modeled as a sum of propagation paths.  Each path
contributes, at packet index a, subcarrier index s and antenna index b,
the complex sample

    A * exp(-j 2 pi (s*df*tof + fc*db*b*aoa - dfs*a*dt))

where df is the subcarrier spacing (Hz), dt the packet interval (s), fc
the carrier frequency (Hz) and db the inter-element delay of the uniform
linear array in seconds (element spacing divided by the speed of light;
the default is half a carrier period, i.e. half-wavelength spacing).
With that convention ``aoa`` is the broadside direction sine, a
dimensionless value in [-1, 1], and ``dfs`` is the Doppler shift in Hz.
Static paths are the same expression with dfs = 0.

On top of the path sum the synthesizer can add circular complex Gaussian
receiver noise and then multiply a per-packet (optionally per-subcarrier)
random phase screen shared by all antennas — the impairment that the
preprocessing stage cancels exactly.  Noise and phase draw from separate
named substreams, so switching the phase model never changes the noise
realization.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .errors import AliasingWarning, InvalidScenario
from .seeding import substream

TWO_PI = 2.0 * math.pi

_RANDOM_WALK_STEP_RAD = 0.2  # std of per-packet phase increments


@dataclass(frozen=True)
class PathComponent:
    """One propagation path.

    Parameters
    ----------
    amplitude : float
        Linear gain, >= 0.
    tof : float
        Time of flight in seconds, >= 0.
    aoa : float
        Angle-of-arrival coordinate (direction sine), in [-pi/2, pi/2].
    dfs : float or None
        Doppler shift in Hz; present exactly when the path is dynamic.
    kind : str
        "static" (environment) or "dynamic" (gesture-induced).
    """

    amplitude: float
    tof: float
    aoa: float
    dfs: float = None
    kind: str = "static"

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise InvalidScenario(f"unknown path kind {self.kind!r}")
        if not (self.amplitude >= 0.0 and math.isfinite(self.amplitude)):
            raise InvalidScenario("path amplitude must be finite and >= 0")
        if not (self.tof >= 0.0 and math.isfinite(self.tof)):
            raise InvalidScenario("path tof must be finite and >= 0")
        if not (abs(self.aoa) <= math.pi / 2):
            raise InvalidScenario("path aoa outside [-pi/2, pi/2]")
        if self.kind == "dynamic":
            if self.dfs is None or not math.isfinite(self.dfs):
                raise InvalidScenario("dynamic path needs a finite dfs")
        elif self.dfs is not None:
            raise InvalidScenario("static path must not carry a dfs")


@dataclass(frozen=True)
class PhysicalSemantics:
    """A receiver's path-level description: static and dynamic path lists."""

    environment_paths: tuple  # static paths (environment)
    gesture_paths: tuple  # dynamic paths (gestures)
    receiver_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "environment_paths", tuple(self.environment_paths))
        object.__setattr__(self, "gesture_paths", tuple(self.gesture_paths))
        for p in self.environment_paths:
            if p.kind != "static":
                raise InvalidScenario("environment_paths must hold static paths")
        for p in self.gesture_paths:
            if p.kind != "dynamic":
                raise InvalidScenario("gesture_paths must hold dynamic paths")

    @property
    def all_paths(self):
        return self.environment_paths + self.gesture_paths


@dataclass(frozen=True)
class SamplingGrid:
    """Sampling geometry of one CSI tensor.

    ``antenna_spacing`` is the adjacent-element propagation delay in
    seconds; ``None`` selects half-wavelength spacing, 1/(2*carrier_freq).
    """

    num_packets: int
    num_subcarriers: int
    num_antennas: int
    packet_interval: float
    subcarrier_spacing: float
    carrier_freq: float
    antenna_spacing: float = None

    def __post_init__(self):
        for name in ("num_packets", "num_subcarriers", "num_antennas"):
            if int(getattr(self, name)) < 1:
                raise InvalidScenario(f"{name} must be >= 1")
        for name in ("packet_interval", "subcarrier_spacing", "carrier_freq"):
            if not getattr(self, name) > 0:
                raise InvalidScenario(f"{name} must be > 0")
        if self.antenna_spacing is None:
            object.__setattr__(
                self, "antenna_spacing", 1.0 / (2.0 * self.carrier_freq)
            )
        elif not self.antenna_spacing > 0:
            raise InvalidScenario("antenna_spacing must be > 0")

    @property
    def packet_rate(self) -> float:
        return 1.0 / self.packet_interval

    @property
    def shape(self):
        return (self.num_packets, self.num_subcarriers, self.num_antennas)

    @property
    def num_samples(self) -> int:
        return self.num_packets * self.num_subcarriers * self.num_antennas


@dataclass
class CsiTensor:
    """Complex samples indexed (packet, subcarrier, antenna) plus the grid."""

    samples: np.ndarray
    grid: SamplingGrid

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != self.grid.shape:
            raise InvalidScenario(
                f"sample shape {self.samples.shape} does not match grid "
                f"shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.samples.view(np.float64))):
            raise InvalidScenario("CSI samples must be finite")

    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


# --- steering-vector helpers -------------------------------------------------
#
# The synthesizer and the estimator share these; the estimator correlates
# with the exact conjugate of the synthesis steering, so a matched grid
# point sums coherently.

def packet_steering(grid: SamplingGrid, dfs: float) -> np.ndarray:
    a = np.arange(grid.num_packets)
    return np.exp(1j * TWO_PI * dfs * grid.packet_interval * a)


def subcarrier_steering(grid: SamplingGrid, tof: float) -> np.ndarray:
    s = np.arange(grid.num_subcarriers)
    return np.exp(-1j * TWO_PI * grid.subcarrier_spacing * tof * s)


def antenna_steering(grid: SamplingGrid, aoa: float) -> np.ndarray:
    b = np.arange(grid.num_antennas)
    return np.exp(
        -1j * TWO_PI * grid.carrier_freq * grid.antenna_spacing * aoa * b
    )


def path_tensor(grid: SamplingGrid, path: PathComponent) -> np.ndarray:
    """The path's contribution over the whole grid (complex tensor)."""
    dfs = path.dfs if path.kind == "dynamic" else 0.0
    va = packet_steering(grid, dfs)
    vs = subcarrier_steering(grid, path.tof)
    vb = antenna_steering(grid, path.aoa)
    return path.amplitude * np.einsum("a,s,b->asb", va, vs, vb)


def synthesize_csi(
    semantics: PhysicalSemantics,
    grid: SamplingGrid,
    phase_error_model: str = "none",
    noise_std: float = 0.0,
    seed: int = 0,
) -> CsiTensor:
    """Synthesize one receiver's CSI tensor from its path parameters.

    Parameters
    ----------
    semantics : PhysicalSemantics
        Static and dynamic path lists; at least one path in total.
    grid : SamplingGrid
    phase_error_model : {"none", "iid-uniform", "random-walk"}
        "iid-uniform" draws an independent U[0, 2pi) phase per (packet,
        subcarrier); "random-walk" accumulates Gaussian increments per
        packet (shared by all subcarriers).  Either screen is common to
        all antennas, which is what makes conjugate cancellation exact.
    noise_std : float
        Standard deviation of the circular complex receiver noise
        (E|n|^2 = noise_std^2), applied to the path sum *before* the
        phase screen.
    seed : int
        Root seed; noise and phase use separate substreams of it.

    Notes
    -----
    With ``noise_std=0`` and ``phase_error_model="none"`` every entry is
    the plain sum of path terms, so superposition holds exactly.
    A Doppler shift at or above half the packet rate cannot be
    represented on the packet axis and triggers an AliasingWarning.
    """
    paths = semantics.all_paths
    if not paths:
        raise InvalidScenario("semantics contain no paths")
    if phase_error_model not in ("none", "iid-uniform", "random-walk"):
        raise InvalidScenario(
            f"unknown phase_error_model {phase_error_model!r}"
        )
    nyquist = 0.5 * grid.packet_rate
    for p in semantics.gesture_paths:
        if abs(p.dfs) >= nyquist:
            warnings.warn(
                f"dfs {p.dfs:g} Hz at/above packet-rate Nyquist "
                f"{nyquist:g} Hz; the tone will alias",
                AliasingWarning,
                stacklevel=2,
            )

    field_sum = np.zeros(grid.shape, dtype=np.complex128)
    for p in paths:
        field_sum += path_tensor(grid, p)

    if noise_std > 0.0:
        rng = substream(seed, "noise")
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(
            grid.shape
        )
        field_sum = field_sum + (noise_std / math.sqrt(2.0)) * noise

    if phase_error_model != "none":
        rng = substream(seed, "phase")
        if phase_error_model == "iid-uniform":
            eps = rng.uniform(
                0.0, TWO_PI, size=(grid.num_packets, grid.num_subcarriers)
            )
        else:  # random-walk
            steps = rng.normal(
                0.0, _RANDOM_WALK_STEP_RAD, size=grid.num_packets
            )
            eps = np.cumsum(steps)[:, None] * np.ones(
                (1, grid.num_subcarriers)
            )
        field_sum = field_sum * np.exp(1j * eps)[:, :, None]

    return CsiTensor(samples=field_sum, grid=grid)
