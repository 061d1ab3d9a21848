"""Two-link Acrobot swing-up, integrated with one RK4 step per action."""

import math

import numpy as np

from .base import Env

DT = 0.2
LINK_LENGTH_1 = 1.0
LINK_MASS_1 = 1.0
LINK_MASS_2 = 1.0
LINK_COM_1 = 0.5
LINK_COM_2 = 0.5
LINK_MOI = 1.0
GRAVITY = 9.8
MAX_VEL_1 = 4 * math.pi
MAX_VEL_2 = 9 * math.pi
TORQUES = (-1.0, 0.0, 1.0)

OBS_NAMES = ("cos_theta1", "sin_theta1", "cos_theta2", "sin_theta2", "theta1_dot", "theta2_dot")


def _dsdt(s, torque):
    m1, m2 = LINK_MASS_1, LINK_MASS_2
    l1, lc1, lc2 = LINK_LENGTH_1, LINK_COM_1, LINK_COM_2
    i1 = i2 = LINK_MOI
    g = GRAVITY
    theta1, theta2, dtheta1, dtheta2 = s
    cos2 = math.cos(theta2)
    sin2 = math.sin(theta2)
    d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * cos2) + i1 + i2
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * cos2) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * sin2
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * sin2
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2.0)
            + phi2)
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * sin2 - phi2) / (
        m2 * lc2 ** 2 + i2 - d2 ** 2 / d1
    )
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return (dtheta1, dtheta2, ddtheta1, ddtheta2)


def rk4(s, torque, dt=DT):
    k1 = _dsdt(s, torque)
    k2 = _dsdt(tuple(a + dt / 2 * b for a, b in zip(s, k1)), torque)
    k3 = _dsdt(tuple(a + dt / 2 * b for a, b in zip(s, k2)), torque)
    k4 = _dsdt(tuple(a + dt * b for a, b in zip(s, k3)), torque)
    return tuple(a + dt / 6.0 * (p + 2 * q + 2 * r + w) for a, p, q, r, w in zip(s, k1, k2, k3, k4))


def wrap(x, lo=-math.pi, hi=math.pi):
    span = hi - lo
    while x > hi:
        x -= span
    while x < lo:
        x += span
    return x


def mechanical_energy(s):
    """Kinetic plus potential energy of the two links."""
    m1, m2 = LINK_MASS_1, LINK_MASS_2
    l1, lc1, lc2 = LINK_LENGTH_1, LINK_COM_1, LINK_COM_2
    i1 = i2 = LINK_MOI
    theta1, theta2, w1, w2 = s
    cos2 = math.cos(theta2)
    d11 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * cos2) + i1 + i2
    d12 = m2 * (lc2 ** 2 + l1 * lc2 * cos2) + i2
    d22 = m2 * lc2 ** 2 + i2
    kinetic = 0.5 * d11 * w1 * w1 + d12 * w1 * w2 + 0.5 * d22 * w2 * w2
    potential = -GRAVITY * ((m1 * lc1 + m2 * l1) * math.cos(theta1) + m2 * lc2 * math.cos(theta1 + theta2))
    return kinetic + potential


class Acrobot(Env):
    env_id = "acrobot"
    obs_dim = 6
    n_actions = 3
    max_steps = 500

    def __init__(self):
        super().__init__()
        self.state = (0.0, 0.0, 0.0, 0.0)

    def _reset(self, rng):
        self.state = tuple(float(v) for v in rng.uniform(-0.1, 0.1, size=4))

    def _step(self, action):
        ns = rk4(self.state, TORQUES[action])
        theta1 = wrap(ns[0])
        theta2 = wrap(ns[1])
        w1 = min(max(ns[2], -MAX_VEL_1), MAX_VEL_1)
        w2 = min(max(ns[3], -MAX_VEL_2), MAX_VEL_2)
        self.state = (theta1, theta2, w1, w2)
        terminal = -math.cos(theta1) - math.cos(theta2 + theta1) > 1.0
        return (0.0 if terminal else -1.0), terminal

    def observe(self):
        t1, t2, w1, w2 = self.state
        return np.array([math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2), w1, w2])

    def get_state(self):
        return (self.state, self.t, self.done)

    def set_state(self, state):
        self.state, self.t, self.done = state
