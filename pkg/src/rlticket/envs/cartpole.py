"""Cart-Pole balancing with the classic Euler-integrated dynamics."""

import math

import numpy as np

from .base import Env

GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
TOTAL_MASS = MASS_CART + MASS_POLE
HALF_LENGTH = 0.5
POLE_MASS_LENGTH = MASS_POLE * HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02
THETA_LIMIT = 12 * 2 * math.pi / 360
X_LIMIT = 2.4

# observation order: cart position, cart velocity, pole angle, pole angular velocity
OBS_NAMES = ("cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity")


class CartPole(Env):
    env_id = "cartpole"
    obs_dim = 4
    n_actions = 2
    max_steps = 200

    def __init__(self):
        super().__init__()
        self.state = (0.0, 0.0, 0.0, 0.0)

    def _reset(self, rng):
        self.state = tuple(float(v) for v in rng.uniform(-0.05, 0.05, size=4))

    def _step(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = FORCE_MAG if action == 1 else -FORCE_MAG
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_t) / TOTAL_MASS
        theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
            HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS)
        )
        x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS
        x = x + TAU * x_dot
        x_dot = x_dot + TAU * x_acc
        theta = theta + TAU * theta_dot
        theta_dot = theta_dot + TAU * theta_acc
        self.state = (x, x_dot, theta, theta_dot)
        failed = x < -X_LIMIT or x > X_LIMIT or theta < -THETA_LIMIT or theta > THETA_LIMIT
        return 1.0, failed

    def observe(self):
        return np.array(self.state)

    def get_state(self):
        return (self.state, self.t, self.done)

    def set_state(self, state):
        self.state, self.t, self.done = state
