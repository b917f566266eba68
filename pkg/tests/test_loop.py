import numpy as np
import pytest

from symctrl import (ClosedLoopTrace, UncontrolledStateError, Controller,
                     conformance_report, simulate_closed_loop,
                     synthesize_integrated)

from _systems import toy_pair


def toy_controller():
    plant, spec, params = toy_pair()
    ctrl, _ = synthesize_integrated(plant, spec, params)
    return plant, spec, params, ctrl


def test_zero_steps_trace():
    plant, spec, params, ctrl = toy_controller()
    x0 = np.array([-0.26])  # inside the init box, off-lattice
    trace = simulate_closed_loop(plant, spec, ctrl, x0, 0, params)
    assert trace.states.shape == (1, 1)
    assert trace.inputs.shape == (0, 1)
    assert trace.deviations[0] < params.eta


def test_lengths_consistent():
    plant, spec, params, ctrl = toy_controller()
    x0 = ctrl.state_lattice.point(int(ctrl.initials[0]))
    trace = simulate_closed_loop(plant, spec, ctrl, x0, 7, params)
    assert trace.states.shape[0] == 8
    assert trace.inputs.shape[0] == 7
    assert trace.spec_states.shape == trace.states.shape
    assert trace.deviations.shape == (8,)


def test_plant_equals_spec_deviation_bounded_by_quantization():
    # toy plant under the matching zero input equals the spec, so running
    # both flows directly (plant from x0, spec from the quantized x0) keeps
    # the deviation below the initial quantization error
    from symctrl import flow
    plant, spec, params, ctrl = toy_controller()
    x = np.array([-0.24])
    s = ctrl.state_lattice.quantize_point(x)
    for _ in range(20):
        assert abs(x[0] - s[0]) <= 2 * params.eta
        x = flow(plant, x, [0.0], params.tau)
        s = flow(spec, s, [], params.tau)


def test_closed_loop_off_lattice_start_conforms():
    plant, spec, params, ctrl = toy_controller()
    trace = simulate_closed_loop(plant, spec, ctrl, np.array([-0.24]), 20,
                                 params)
    assert trace.max_deviation <= params.epsilon


def test_conformance_pass_and_argmax():
    states = np.zeros((4, 1))
    spec_states = np.asarray([[0.0], [0.05], [0.3], [0.1]])
    trace = ClosedLoopTrace(states=states, inputs=np.zeros((3, 1)),
                            spec_states=spec_states,
                            deviations=np.abs(states - spec_states).max(axis=1))
    rep = conformance_report(trace, 0.2)
    assert not rep.passed
    assert rep.argmax_step == 2
    assert rep.max_deviation == 0.3
    assert conformance_report(trace, 0.5).passed


def test_identical_traces_pass_any_eps():
    states = np.linspace(0, 1, 5).reshape(-1, 1)
    trace = ClosedLoopTrace(states=states, inputs=np.zeros((4, 1)),
                            spec_states=states.copy(),
                            deviations=np.zeros(5))
    assert conformance_report(trace, 0.0).passed


def test_x0_outside_init_box_rejected():
    plant, spec, params, ctrl = toy_controller()
    with pytest.raises(ValueError):
        simulate_closed_loop(plant, spec, ctrl, [0.9], 5, params)


def test_x0_not_an_initial_cell_rejected():
    plant, spec, params, ctrl = toy_controller()
    bad = [i for i in range(ctrl.state_lattice.n_points)
           if i not in set(int(v) for v in ctrl.initials)]
    # a state-box point outside the initial set
    with pytest.raises(ValueError):
        simulate_closed_loop(plant, spec, ctrl, [0.4], 5, params)


def test_uncontrolled_state_detected():
    plant, spec, params, ctrl = toy_controller()
    # keep only the first initial state's transition: its successor has no
    # outgoing transition any more, so the loop starves after one step
    first = int(ctrl.initials[0])
    row = ctrl.transitions[ctrl.transitions[:, 0] == first]
    crippled = Controller(row, [first], [], ctrl.state_lattice,
                          ctrl.input_lattice)
    x0 = ctrl.state_lattice.point(first)
    if int(row[0, 2]) != first:  # successor differs, so step 2 must starve
        with pytest.raises(UncontrolledStateError):
            simulate_closed_loop(plant, spec, crippled, x0, 20, params)


def test_closed_loop_conformance_over_initial_cells():
    plant, spec, params, ctrl = toy_controller()
    initials = list(ctrl.initials)[:10]
    assert len(initials) >= 10
    for idx in initials:
        x0 = ctrl.state_lattice.point(int(idx))
        trace = simulate_closed_loop(plant, spec, ctrl, x0, 20, params)
        assert conformance_report(trace, params.epsilon).passed
