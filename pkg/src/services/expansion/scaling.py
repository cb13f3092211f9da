"""
Time scaling between the original system and the small-viscosity system
"""
from typing import Dict, List, Optional

import numpy as np

from ..base import Direction, check_positive
from ..geometry.fields import Field
from ..solver.state import FlowState, ForcingInputs, Trajectory


# u^eps(t, x) = eps^k u(eps t, x) for each quantity
SCALING_EXPONENTS: Dict[str, int] = {"u": 1, "p": 2, "theta": 2, "v": 2, "w": 3, "sigma": 1}


def scale_factor(quantity: str, epsilon: float, direction: Direction = Direction.FORWARD) -> float:
    epsilon = check_positive("epsilon", epsilon)
    power = SCALING_EXPONENTS[quantity]
    return epsilon ** power if direction == Direction.FORWARD else epsilon ** -power


def scaled_time(t: float, epsilon: float, direction: Direction = Direction.FORWARD) -> float:
    """Original time tau maps to tau / eps; scaled time t maps back to eps t"""
    return t / epsilon if direction == Direction.FORWARD else t * epsilon


def scale_state(state: FlowState, epsilon: float, direction: Direction = Direction.FORWARD) -> FlowState:
    t = scaled_time(state.t, epsilon, direction)
    u = (scale_factor("u", epsilon, direction) * state.u).with_time(t)
    theta = (scale_factor("theta", epsilon, direction) * state.theta).with_time(t)
    p: Optional[Field] = None
    if state.p is not None:
        p = (scale_factor("p", epsilon, direction) * state.p).with_time(t)
    return FlowState(t, u, theta, p)


def scale_trajectory(trajectory: Trajectory, epsilon: float, direction: Direction = Direction.FORWARD) -> Trajectory:
    """Every output state rescaled; the samples are kept, only their times move"""
    states: List[FlowState] = [scale_state(s, epsilon, direction) for s in trajectory.states]
    viscosity = trajectory.epsilon * epsilon if direction == Direction.FORWARD else trajectory.epsilon / epsilon
    return Trajectory(states, viscosity, [], trajectory.diagnostics)


def scale_forcing(forcing: ForcingInputs, epsilon: float, direction: Direction = Direction.FORWARD) -> ForcingInputs:
    """Controls of the rescaled system: v^eps(t) = eps^2 v(eps t), w^eps = eps^3 w, sigma^eps = eps sigma"""
    epsilon = check_positive("epsilon", epsilon)
    inner = epsilon if direction == Direction.FORWARD else 1.0 / epsilon
    kv = scale_factor("v", epsilon, direction)
    kw = scale_factor("w", epsilon, direction)
    ks = scale_factor("sigma", epsilon, direction)

    v = None
    if forcing.v is not None:
        def v(t: float, _v=forcing.v):
            a, b = _v(inner * t)
            return kv * np.asarray(a), kv * np.asarray(b)
    w = None if forcing.w is None else (lambda t, _w=forcing.w: kw * np.asarray(_w(inner * t)))
    sigma = None if forcing.sigma is None else (lambda t, _s=forcing.sigma: ks * np.asarray(_s(inner * t)))
    return ForcingInputs(v=v, w=w, sigma=sigma, check_support=forcing.check_support)
