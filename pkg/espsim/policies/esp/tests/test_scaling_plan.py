"""Provide tests for prefill and decoding scaling plans."""

# Authors: The espsim developers
# License: AGPL

import pytest

from espsim.policies.esp import (
    BatchPlan,
    make_scaling_plan,
    plan_decode_step,
    plan_scale_down,
)
from espsim.testing import make_request, make_sib, make_state
from espsim.utils.exceptions import InfeasiblePlanError, NoCapacityError


def test_plan_scale_down() -> None:
    """Test keeping the instances with the most free slots."""
    plan = plan_scale_down({7: 6}, [0, 1, 2], {0: 2, 1: 4, 2: 3})
    assert plan.source == (0, 1, 2)
    assert plan.target == (1, 2)
    assert plan.placement == {7: {1: 4, 2: 2}}


def test_plan_scale_down_keeps_all() -> None:
    """Test a batch that needs every instance."""
    plan = plan_scale_down({1: 4, 2: 5}, [0, 1, 2], {0: 3, 1: 3, 2: 3})
    assert plan.target == (0, 1, 2)
    assert plan.per_instance() == {0: 3, 1: 3, 2: 3}


def test_plan_scale_down_infeasible() -> None:
    """Test a batch larger than its instances."""
    with pytest.raises(InfeasiblePlanError, match="exceeds"):
        plan_scale_down({1: 10}, [0, 1], {0: 4, 1: 5})


def _decoding_state(n_requests: int, **kwargs):
    requests = []
    for rid in range(n_requests):
        request = make_request(rid=rid, input_len=1, output_len=1)
        request.placement = {0: 1}
        requests.append(request)
    return make_state(
        free=[200, 200, 200],
        batches=[([0, 1, 2], requests, [0])],
        **kwargs,
    )


def test_plan_decode_step_compute_bound() -> None:
    """Test that a batch past the threshold gets several masters."""
    state = _decoding_state(
        65, sib=make_sib(max_dop=3, decode=(1.0, 1.0, 0.0, 64))
    )
    view = state.decoding_batches()[0]
    step = plan_decode_step(state, view, [], state.free())
    assert sorted(step.assignment.masters) == [1, 2]
    assert step.release == []
    assert step.scale_up == []
    assert step.duration == pytest.approx(1.0 + 65 / 2)


def test_plan_decode_step_releases_empty_members() -> None:
    """Test releasing members that hold no KV and are not masters."""
    request = make_request(rid=0, input_len=5, output_len=2)
    request.placement = {0: 5}
    state = make_state(
        free=[10, 10, 10], batches=[([0, 1, 2], [request], [0])]
    )
    view = state.decoding_batches()[0]
    step = plan_decode_step(state, view, [], state.free())
    assert step.masters == [1]
    assert step.release == [2]


def test_plan_decode_step_scale_up() -> None:
    """Test growing onto an idle instance when the members are full."""
    request = make_request(rid=0, input_len=10, output_len=2)
    request.placement = {0: 10}
    state = make_state(free=[10, 10], batches=[([0], [request], [0])])
    view = state.decoding_batches()[0]
    idle = state.idle()
    step = plan_decode_step(state, view, idle, state.free())
    assert step.scale_up == [1]
    assert step.masters == [1]
    assert idle == []


def test_plan_decode_step_no_capacity() -> None:
    """Test a full group that may not scale up."""
    request = make_request(rid=0, input_len=10, output_len=2)
    request.placement = {0: 10}
    state = make_state(
        free=[10, 10],
        batches=[([0], [request], [0])],
        enable_scale_up=False,
    )
    view = state.decoding_batches()[0]
    with pytest.raises(NoCapacityError, match="cannot place"):
        plan_decode_step(state, view, state.idle(), state.free())
    plan = make_scaling_plan(state, [], {}, state.idle())
    assert plan.stalled == [view.group_id]
    assert plan.decode == []


def test_make_scaling_plan() -> None:
    """Test combining prefill scale-downs with decoding steps."""
    request = make_request(rid=5, input_len=2, output_len=2)
    request.placement = {3: 2}
    pending = make_request(rid=0, input_len=6, output_len=1)
    state = make_state(
        free=[4, 4, 4, 10],
        pending=[pending],
        batches=[([3], [request], [3])],
    )
    batch = BatchPlan(request_ids=(0,), instances=(0, 1, 2), cost=1.0)
    plan = make_scaling_plan(
        state, [batch], {0: 4, 1: 4, 2: 4}, [], skip_groups=()
    )
    assert plan.prefill[0].target == (0, 1)
    assert plan.prefill[0].placement == {0: {0: 4, 1: 2}}
    assert [s.group_id for s in plan.decode] == [0]
    plan = make_scaling_plan(
        state, [batch], {0: 4, 1: 4, 2: 4}, [], skip_groups=[0]
    )
    assert plan.decode == []
