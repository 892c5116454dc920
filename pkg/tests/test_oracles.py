import math
import warnings

import numpy as np
import pytest

from chainqfi.chain import ChainSpec
from chainqfi.errors import ConfigurationError
from chainqfi.oracles import (
    TwoSpinProtocol,
    build_three_step_pulse,
    simulate_three_step_qfi,
    three_step_qfi_closed_form,
    uncontrolled_asymptotic_qfi,
)
from chainqfi.propagator import ControlPulse, compose_pulse, evolve_state

PSI1 = np.array([0, 1, 0], dtype=complex)


def test_closed_form_values():
    assert three_step_qfi_closed_form(10.0) == pytest.approx(355.6395276, rel=1e-9)
    assert three_step_qfi_closed_form(math.pi / 2 - 1) == 0.0
    assert three_step_qfi_closed_form(100.0) / 4e4 == pytest.approx(0.988616, rel=1e-6)
    with pytest.raises(ConfigurationError):
        three_step_qfi_closed_form(0.5)


def test_closed_form_scales_with_coupling():
    assert three_step_qfi_closed_form(10.0, J=2.0) == pytest.approx(4 * (10 - (math.pi / 2 - 1) / 2) ** 2)


def test_asymptote_branches():
    assert uncontrolled_asymptotic_qfi(0.0, 10.0) == pytest.approx(100.0)
    assert uncontrolled_asymptotic_qfi(1.0, 10.0) == pytest.approx(100.0)
    assert uncontrolled_asymptotic_qfi(-0.3, 1.0) == uncontrolled_asymptotic_qfi(0.3, 1.0)


def test_asymptote_bounded_and_continuous_at_branch_point():
    xs = np.linspace(0, 5, 2001)
    vals = np.array([uncontrolled_asymptotic_qfi(x, 1.0) for x in xs])
    assert vals.max() <= 1.0 + 1e-12
    b = math.sqrt(0.5)
    assert uncontrolled_asymptotic_qfi(b - 1e-9, 1.0) == pytest.approx(uncontrolled_asymptotic_qfi(b + 1e-9, 1.0),
                                                                       abs=1e-7)


def test_protocol_validation():
    with pytest.raises(ConfigurationError):
        TwoSpinProtocol(1.0)
    with pytest.warns(UserWarning):
        TwoSpinProtocol(10.0, c_strong=20.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        TwoSpinProtocol(10.0)


def test_pulse_layout():
    proto = TwoSpinProtocol(10.0)
    built = build_three_step_pulse(proto, 0.1, m=10)
    p = built.pulse
    assert p.m == 12 and built.metadata["slots_per_segment"] == 3
    assert p.slot_durations.sum() == pytest.approx(10.0, rel=1e-14)
    assert built.metadata["rotation_slot_duration"] == pytest.approx(1e-3)
    assert p.amplitudes[0] == 0.1 and p.amplitudes[3] == 200.0 and p.amplitudes[-1] == 0.1
    assert abs(built.metadata["rotation_angle"]) <= math.pi


def _populations(pulse, lam):
    psi, _, _, _ = evolve_state(compose_pulse(pulse, ChainSpec(2), lam, with_gradient=False), PSI1)
    return np.abs(psi) ** 2


def test_prepare_step_splits_the_excitation():
    built = build_three_step_pulse(TwoSpinProtocol(10.0), 0.0)
    first = built.pulse.slot_durations[0]
    np.testing.assert_allclose(_populations(ControlPulse(first, [0.0]), 0.0), [0, 0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.25])
def test_full_protocol_ends_on_second_site(lam):
    built = build_three_step_pulse(TwoSpinProtocol(10.0), lam)
    assert _populations(built.pulse, lam)[2] > 0.99


@pytest.mark.parametrize("T", [5.0, 10.0])
def test_simulated_qfi_matches_closed_form(T):
    assert simulate_three_step_qfi(T) == pytest.approx(three_step_qfi_closed_form(T), rel=0.02)


def test_stronger_field_is_closer():
    ref = three_step_qfi_closed_form(10.0)
    err = [abs(simulate_three_step_qfi(10.0, c_strong=c) - ref) for c in (100.0, 400.0)]
    assert err[1] < err[0]
