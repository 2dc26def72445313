"""Synthesis-stage behavior: path arithmetic, noise, and phase screens."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference
from semsense.channel import (
    CsiTensor,
    PathComponent,
    PhysicalSemantics,
    SamplingGrid,
    path_tensor,
    synthesize_csi,
)
from semsense.errors import AliasingWarning, InvalidScenario

from conftest import dynamic_path, static_path


def _rel_err(a, b):
    scale = max(np.max(np.abs(b)), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


def test_synthesis_matches_scalar_oracle(tiny_grid, mixed_semantics):
    csi = synthesize_csi(mixed_semantics, tiny_grid)
    expected = reference.csi_tensor(mixed_semantics.all_paths, tiny_grid)
    assert _rel_err(csi.samples, expected) < 1e-12


def test_path_tensor_matches_sample_formula(tiny_grid):
    p = dynamic_path(0.7, 4.5e-8, -0.4, 25.0)
    tensor = path_tensor(tiny_grid, p)
    for a, s, b in [(0, 0, 0), (3, 2, 1), (15, 5, 2), (7, 1, 2)]:
        want = p.amplitude * reference.unit_sample(
            tiny_grid, a, s, b, p.tof, p.aoa, p.dfs
        )
        assert abs(tensor[a, s, b] - want) < 1e-12


@settings(max_examples=20, deadline=None)
@given(
    amp=st.floats(0.1, 3.0),
    tof=st.floats(0.0, 1.2e-7),
    aoa=st.floats(-1.0, 1.0),
    dfs=st.floats(-90.0, 90.0),
)
def test_superposition_is_exact(tiny_grid, amp, tof, aoa, dfs):
    extra = PathComponent(amp, tof, aoa, dfs, kind="dynamic")
    base = PhysicalSemantics(
        environment_paths=(static_path(),), gesture_paths=(dynamic_path(),)
    )
    combined = PhysicalSemantics(
        environment_paths=base.environment_paths,
        gesture_paths=base.gesture_paths + (extra,),
    )
    lone = PhysicalSemantics(environment_paths=(), gesture_paths=(extra,))
    total = synthesize_csi(combined, tiny_grid).samples
    split = (
        synthesize_csi(base, tiny_grid).samples
        + synthesize_csi(lone, tiny_grid).samples
    )
    assert _rel_err(total, split) < 1e-12


def test_noise_applied_before_phase_screen(tiny_grid, mixed_semantics):
    plain = synthesize_csi(
        mixed_semantics, tiny_grid, phase_error_model="none",
        noise_std=0.3, seed=5,
    )
    screened = synthesize_csi(
        mixed_semantics, tiny_grid, phase_error_model="iid-uniform",
        noise_std=0.3, seed=5,
    )
    # The screen is pure phase applied after the noisy sum, so switching
    # it on must leave every magnitude unchanged — which also proves the
    # noise stream does not depend on the phase model.
    assert np.allclose(
        np.abs(screened.samples), np.abs(plain.samples), rtol=0, atol=1e-12
    )
    assert not np.allclose(screened.samples, plain.samples)


def test_screen_is_common_to_all_antennas(tiny_grid, mixed_semantics):
    plain = synthesize_csi(mixed_semantics, tiny_grid, seed=2)
    screened = synthesize_csi(
        mixed_semantics, tiny_grid, phase_error_model="iid-uniform", seed=2
    )
    ratio = screened.samples / plain.samples
    assert np.allclose(ratio, ratio[:, :, :1], atol=1e-9)
    assert np.allclose(np.abs(ratio), 1.0, atol=1e-9)


def test_random_walk_screen_shared_across_subcarriers(tiny_grid, mixed_semantics):
    plain = synthesize_csi(mixed_semantics, tiny_grid, seed=3)
    screened = synthesize_csi(
        mixed_semantics, tiny_grid, phase_error_model="random-walk", seed=3
    )
    ratio = screened.samples / plain.samples
    assert np.allclose(ratio, ratio[:, :1, :], atol=1e-9)


def test_synthesis_is_deterministic(tiny_grid, mixed_semantics):
    kw = dict(phase_error_model="random-walk", noise_std=0.2, seed=11)
    one = synthesize_csi(mixed_semantics, tiny_grid, **kw)
    two = synthesize_csi(mixed_semantics, tiny_grid, **kw)
    assert np.array_equal(one.samples, two.samples)
    other = synthesize_csi(
        mixed_semantics, tiny_grid, phase_error_model="random-walk",
        noise_std=0.2, seed=12,
    )
    assert not np.array_equal(one.samples, other.samples)


def test_aliasing_warning_at_half_packet_rate(tiny_grid):
    fast = PhysicalSemantics(
        environment_paths=(),
        gesture_paths=(dynamic_path(dfs=0.5 * tiny_grid.packet_rate),),
    )
    with pytest.warns(AliasingWarning):
        synthesize_csi(fast, tiny_grid)


def test_no_warning_below_nyquist(tiny_grid, recwarn):
    slow = PhysicalSemantics(
        environment_paths=(),
        gesture_paths=(dynamic_path(dfs=0.4 * tiny_grid.packet_rate),),
    )
    synthesize_csi(slow, tiny_grid)
    assert not any(
        isinstance(w.message, AliasingWarning) for w in recwarn.list
    )


def test_energy_is_squared_norm(tiny_grid, mixed_semantics):
    csi = synthesize_csi(mixed_semantics, tiny_grid, noise_std=0.1, seed=1)
    assert math.isclose(
        csi.energy(), float(np.sum(np.abs(csi.samples) ** 2)), rel_tol=1e-12
    )


def test_default_antenna_spacing_is_half_wavelength():
    g = SamplingGrid(4, 4, 2, 1e-3, 3.125e6, 5.825e9)
    assert math.isclose(g.antenna_spacing, 1.0 / (2.0 * 5.825e9))
    assert g.shape == (4, 4, 2)
    assert g.num_samples == 32
    assert math.isclose(g.packet_rate, 1000.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(amplitude=-0.1, tof=1e-8, aoa=0.0),
        dict(amplitude=math.nan, tof=1e-8, aoa=0.0),
        dict(amplitude=1.0, tof=-1e-9, aoa=0.0),
        dict(amplitude=1.0, tof=1e-8, aoa=2.0),
        dict(amplitude=1.0, tof=1e-8, aoa=0.0, kind="wobbly"),
        dict(amplitude=1.0, tof=1e-8, aoa=0.0, kind="dynamic"),  # no dfs
        dict(amplitude=1.0, tof=1e-8, aoa=0.0, dfs=5.0),  # static with dfs
    ],
)
def test_path_validation_rejects(kwargs):
    with pytest.raises(InvalidScenario):
        PathComponent(**kwargs)


def test_semantics_kind_segregation():
    with pytest.raises(InvalidScenario):
        PhysicalSemantics(
            environment_paths=(dynamic_path(),), gesture_paths=()
        )
    with pytest.raises(InvalidScenario):
        PhysicalSemantics(
            environment_paths=(), gesture_paths=(static_path(),)
        )


def test_empty_semantics_rejected(tiny_grid):
    empty = PhysicalSemantics(environment_paths=(), gesture_paths=())
    with pytest.raises(InvalidScenario):
        synthesize_csi(empty, tiny_grid)


def test_unknown_phase_model_rejected(tiny_grid, mixed_semantics):
    with pytest.raises(InvalidScenario):
        synthesize_csi(mixed_semantics, tiny_grid, phase_error_model="fancy")


@pytest.mark.parametrize(
    "field_name,value",
    [
        ("num_packets", 0),
        ("num_antennas", 0),
        ("packet_interval", 0.0),
        ("subcarrier_spacing", -1.0),
        ("carrier_freq", 0.0),
    ],
)
def test_grid_validation_rejects(field_name, value):
    base = dict(
        num_packets=4,
        num_subcarriers=4,
        num_antennas=2,
        packet_interval=1e-3,
        subcarrier_spacing=3.125e6,
        carrier_freq=5.825e9,
    )
    base[field_name] = value
    with pytest.raises(InvalidScenario):
        SamplingGrid(**base)


def test_tensor_shape_and_finiteness_guards(tiny_grid):
    with pytest.raises(InvalidScenario):
        CsiTensor(np.zeros((2, 2, 2), dtype=complex), tiny_grid)
    bad = np.zeros(tiny_grid.shape, dtype=complex)
    bad[0, 0, 0] = complex(math.nan, 0.0)
    with pytest.raises(InvalidScenario):
        CsiTensor(bad, tiny_grid)
