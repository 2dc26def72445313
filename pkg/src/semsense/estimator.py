"""Path-parameter estimation by expectation-maximization grid search.

The estimator explains the dynamic part of a CSI tensor as a small number
of parametric paths.  One full sweep visits every dynamic component in
turn: the component's signal share is isolated by subtracting the other
components from the observation (expectation step), each of its
parameters (tof, then aoa, then dfs) is re-fit by a 1-D grid argmax of
the matched-filter power |z|^2, and its complex amplitude is re-fit in
closed form.  Static components are refit the same way against the
static per-(subcarrier, antenna) matrix, with the Doppler sweep skipped.
Sweeps repeat until the largest parameter move (measured in grid steps)
drops below the threshold.

With the default unit step size the expectation step is successive
cancellation, and because the previous grid point and the closed-form
amplitude are always among the candidates, the residual energy is
non-increasing across sweeps.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np

from .channel import (
    CsiTensor,
    PathComponent,
    PhysicalSemantics,
    SamplingGrid,
    TWO_PI,
    antenna_steering,
    packet_steering,
    subcarrier_steering,
)
from .errors import ConvergenceWarning, GridMismatch, InvalidGrid
from .preproc import split_components


def _check_grid(candidates) -> np.ndarray:
    arr = np.asarray(candidates, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidGrid("parameter grid must be a non-empty 1-D array")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise InvalidGrid("parameter grid must be strictly ascending")
    return arr


@dataclass
class EstimatorConfig:
    """Search grids and loop controls for the EM estimator."""

    tof_grid: np.ndarray
    aoa_grid: np.ndarray
    dfs_grid: np.ndarray
    num_dynamic_paths: int = 2
    num_static_paths: int = 2
    threshold: float = 0.5  # convergence: max parameter move, in grid steps
    step_size: float = 1.0  # expectation-step mixing; 1 = full cancellation
    max_sweeps: int = 30
    split_cutoff_hz: float = 2.0

    def __post_init__(self):
        self.tof_grid = _check_grid(self.tof_grid)
        self.aoa_grid = _check_grid(self.aoa_grid)
        self.dfs_grid = _check_grid(self.dfs_grid)
        if self.num_dynamic_paths < 1 or self.num_static_paths < 0:
            raise InvalidGrid("component counts must be positive")
        if not self.threshold > 0:
            raise InvalidGrid("threshold must be > 0")
        if not 0.0 < self.step_size <= 1.0:
            raise InvalidGrid("step_size must be in (0, 1]")


def default_estimator_config(grid: SamplingGrid, **overrides) -> EstimatorConfig:
    """Grids matched to the sampling geometry's native resolutions."""
    bandwidth = grid.subcarrier_spacing * grid.num_subcarriers
    tof_step = 1.0 / (2.0 * bandwidth)
    duration = grid.num_packets * grid.packet_interval
    dfs_step = 1.0 / duration
    dfs_max = min(100.0, 0.4 * grid.packet_rate)
    n_dfs = int(dfs_max / dfs_step)
    defaults = dict(
        tof_grid=np.arange(grid.num_subcarriers) * tof_step,
        aoa_grid=np.linspace(-1.0, 1.0, 41),
        dfs_grid=np.arange(-n_dfs, n_dfs + 1) * dfs_step,
    )
    defaults.update(overrides)
    return EstimatorConfig(**defaults)


# --- matched-filter machinery ------------------------------------------------

def _conj_vectors(grid, tof, aoa, dfs):
    vs = np.conj(subcarrier_steering(grid, tof))
    vb = np.conj(antenna_steering(grid, aoa))
    va = None if dfs is None else np.conj(packet_steering(grid, dfs))
    return va, vs, vb


def _correlate(q, grid, tof, aoa, dfs):
    """<steering, q>: coherent sum of q against the conjugate steering."""
    va, vs, vb = _conj_vectors(grid, tof, aoa, dfs)
    if q.ndim == 3:
        if va is None:
            raise GridMismatch("3-D observation needs a dfs value")
        return complex(np.einsum("a,asb,s,b->", va, q, vs, vb))
    if q.ndim == 2:
        if dfs is not None:
            raise GridMismatch("2-D static observation has no Doppler axis")
        return complex(np.einsum("sb,s,b->", q, vs, vb))
    raise GridMismatch(f"observation must be 2-D or 3-D, got {q.ndim}-D")


def z_objective(q, tof, aoa, dfs, grid: SamplingGrid) -> float:
    """Matched-filter power |z|^2 of q at one parameter point.

    For a single noise-free path synthesized at exactly (tof, aoa, dfs)
    with amplitude A the peak value is (N*A)^2, N being the number of
    samples in the observation.
    """
    z = _correlate(np.asarray(q, dtype=np.complex128), grid, tof, aoa, dfs)
    return abs(z) ** 2


def maximize_param(
    q, grid: SamplingGrid, sweep: str, candidates, tof=None, aoa=None, dfs=None
) -> float:
    """1-D grid argmax of |z|^2 over one parameter, the other two fixed.

    ``sweep`` names the free parameter ("tof", "aoa" or "dfs"); its
    current value argument is ignored and ``candidates`` supplies the
    ascending grid.  Exact ties resolve to the smallest candidate.
    """
    cand = _check_grid(candidates)
    q = np.asarray(q, dtype=np.complex128)
    is_static = q.ndim == 2
    if q.ndim not in (2, 3):
        raise GridMismatch(f"observation must be 2-D or 3-D, got {q.ndim}-D")
    if is_static and sweep == "dfs":
        raise InvalidGrid("static observations have no Doppler parameter")

    g = grid
    a_idx = np.arange(g.num_packets)
    s_idx = np.arange(g.num_subcarriers)
    b_idx = np.arange(g.num_antennas)
    va, vs, vb = _conj_vectors(g, tof or 0.0, aoa or 0.0, dfs)

    if sweep == "tof":
        if is_static:
            r = np.einsum("sb,b->s", q, vb)
        else:
            r = np.einsum("a,asb,b->s", va, q, vb)
        steer = np.exp(
            1j * TWO_PI * g.subcarrier_spacing * np.outer(cand, s_idx)
        )
    elif sweep == "aoa":
        if is_static:
            r = np.einsum("sb,s->b", q, vs)
        else:
            r = np.einsum("a,asb,s->b", va, q, vs)
        steer = np.exp(
            1j
            * TWO_PI
            * g.carrier_freq
            * g.antenna_spacing
            * np.outer(cand, b_idx)
        )
    elif sweep == "dfs":
        r = np.einsum("asb,s,b->a", q, vs, vb)
        steer = np.exp(
            -1j * TWO_PI * g.packet_interval * np.outer(cand, a_idx)
        )
    else:
        raise InvalidGrid(f"unknown sweep parameter {sweep!r}")

    power = np.abs(steer @ r) ** 2
    return float(cand[int(np.argmax(power))])


def update_amplitude(q, tof, aoa, dfs, grid: SamplingGrid) -> complex:
    """Closed-form least-squares complex amplitude at a parameter point.

    The correlation is divided by the number of samples in the sweep
    domain (packets*subcarriers*antennas for dynamic observations,
    subcarriers*antennas for static ones), which is exactly the
    least-squares fit because the steering tensor has unit-magnitude
    entries.
    """
    q = np.asarray(q, dtype=np.complex128)
    return _correlate(q, grid, tof, aoa, dfs) / q.size


def expectation_step(residual_source, components, m: int, step: float = 1.0):
    """Isolate component m's share of the observation.

    ``components`` are the current per-component signal tensors.  The
    update is components[m] + step * (residual_source - sum(components));
    with step = 1 this is the observation minus all other components
    (successive cancellation), and with step = 0 it is a no-op.
    """
    source = np.asarray(residual_source, dtype=np.complex128)
    total = np.zeros_like(source)
    for t in components:
        t = np.asarray(t)
        if t.shape != source.shape:
            raise GridMismatch(
                f"component shape {t.shape} != observation {source.shape}"
            )
        total += t
    return components[m] + step * (source - total)


# --- the sweep loop ----------------------------------------------------------

@dataclass
class _Component:
    amp: complex
    tof: float
    aoa: float
    dfs: float = None  # None marks a static component

    def tensor(self, grid, static=False):
        vs = subcarrier_steering(grid, self.tof)
        vb = antenna_steering(grid, self.aoa)
        if static:
            return self.amp * np.einsum("s,b->sb", vs, vb)
        va = packet_steering(grid, self.dfs)
        return self.amp * np.einsum("a,s,b->asb", va, vs, vb)


@dataclass
class EstimationResult:
    semantics: PhysicalSemantics
    dynamic_residuals: list
    static_residuals: list
    sweeps_used: int
    converged: bool
    final_change: float


def _grid_step(grid_values):
    return grid_values[1] - grid_values[0] if grid_values.size > 1 else 1.0


def run_estimation(
    csi: CsiTensor, cfg: EstimatorConfig, component_order=None
) -> EstimationResult:
    """Full EM loop; returns estimates plus per-sweep diagnostics.

    ``component_order`` optionally reorders the within-sweep visiting
    order of the dynamic components (a permutation of range(L)); the
    recovered path *set* does not depend on it.
    """
    grid = csi.grid
    dynamic_csi, static_mat = split_components(csi, cfg.split_cutoff_hz)
    h_dyn = dynamic_csi.samples
    h_sta = static_mat

    order = list(
        component_order
        if component_order is not None
        else range(cfg.num_dynamic_paths)
    )
    if sorted(order) != list(range(cfg.num_dynamic_paths)):
        raise InvalidGrid("component_order must permute range(L)")

    dyn = [
        _Component(0j, cfg.tof_grid[0], cfg.aoa_grid[0], cfg.dfs_grid[0])
        for _ in range(cfg.num_dynamic_paths)
    ]
    sta = [
        _Component(0j, cfg.tof_grid[0], cfg.aoa_grid[0])
        for _ in range(cfg.num_static_paths)
    ]
    dyn_tensors = [np.zeros_like(h_dyn) for _ in dyn]
    sta_tensors = [np.zeros_like(h_sta) for _ in sta]

    steps = {
        "tof": _grid_step(cfg.tof_grid),
        "aoa": _grid_step(cfg.aoa_grid),
        "dfs": _grid_step(cfg.dfs_grid),
    }

    def dyn_residual():
        r = h_dyn - sum(dyn_tensors)
        return float(np.vdot(r, r).real)

    def sta_residual():
        r = h_sta - sum(sta_tensors)
        return float(np.vdot(r, r).real)

    dynamic_residuals = [dyn_residual()]
    static_residuals = [sta_residual()]
    converged = False
    change = np.inf
    sweeps = 0

    for sweeps in range(1, cfg.max_sweeps + 1):
        change = 0.0
        for m in order:
            c = dyn[m]
            q = expectation_step(h_dyn, dyn_tensors, m, cfg.step_size)
            new_tof = maximize_param(
                q, grid, "tof", cfg.tof_grid, aoa=c.aoa, dfs=c.dfs
            )
            new_aoa = maximize_param(
                q, grid, "aoa", cfg.aoa_grid, tof=new_tof, dfs=c.dfs
            )
            new_dfs = maximize_param(
                q, grid, "dfs", cfg.dfs_grid, tof=new_tof, aoa=new_aoa
            )
            change = max(
                change,
                abs(new_tof - c.tof) / steps["tof"],
                abs(new_aoa - c.aoa) / steps["aoa"],
                abs(new_dfs - c.dfs) / steps["dfs"],
            )
            c.tof, c.aoa, c.dfs = new_tof, new_aoa, new_dfs
            c.amp = update_amplitude(q, c.tof, c.aoa, c.dfs, grid)
            dyn_tensors[m] = c.tensor(grid)

        for n in range(cfg.num_static_paths):
            c = sta[n]
            q = expectation_step(h_sta, sta_tensors, n, cfg.step_size)
            new_tof = maximize_param(q, grid, "tof", cfg.tof_grid, aoa=c.aoa)
            new_aoa = maximize_param(q, grid, "aoa", cfg.aoa_grid, tof=new_tof)
            change = max(
                change,
                abs(new_tof - c.tof) / steps["tof"],
                abs(new_aoa - c.aoa) / steps["aoa"],
            )
            c.tof, c.aoa = new_tof, new_aoa
            c.amp = update_amplitude(q, c.tof, c.aoa, None, grid)
            sta_tensors[n] = c.tensor(grid, static=True)

        dynamic_residuals.append(dyn_residual())
        static_residuals.append(sta_residual())
        if change < cfg.threshold:
            converged = True
            break

    if not converged:
        warnings.warn(
            f"estimator hit max_sweeps={cfg.max_sweeps} with parameter "
            f"change {change:.3g} grid steps; returning best-so-far",
            ConvergenceWarning,
            stacklevel=2,
        )

    g_sem = tuple(
        PathComponent(
            amplitude=abs(c.amp), tof=c.tof, aoa=c.aoa, dfs=c.dfs,
            kind="dynamic",
        )
        for c in sorted(dyn, key=lambda c: -abs(c.amp))
    )
    e_sem = tuple(
        PathComponent(amplitude=abs(c.amp), tof=c.tof, aoa=c.aoa, kind="static")
        for c in sorted(sta, key=lambda c: -abs(c.amp))
    )
    semantics = PhysicalSemantics(
        environment_paths=e_sem, gesture_paths=g_sem, receiver_id=""
    )
    return EstimationResult(
        semantics=semantics,
        dynamic_residuals=dynamic_residuals,
        static_residuals=static_residuals,
        sweeps_used=sweeps,
        converged=converged,
        final_change=float(change),
    )


def estimate_semantics(csi: CsiTensor, cfg: EstimatorConfig) -> PhysicalSemantics:
    """Recover static and dynamic path parameters from (cancelled) CSI."""
    return run_estimation(csi, cfg).semantics
