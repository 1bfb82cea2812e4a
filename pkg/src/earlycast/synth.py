"""Synthetic one-handed catching trials.

Each trial is a 2-D scene in pixel-like units (nominal frame width 1000,
y up, 100 Hz). The ball flies a ballistic arc from a thrower window on the
left toward an interception point in front of the catcher's shoulder. The
catcher's hand rests low until a sampled reaction delay, then executes a
minimum-jerk reach toward the interception point, arriving at the contact
frame; shoulder, elbow and wrist follow from a two-link arm chain, and the
five fingertips fan out from the hand base. Marker flicker noise mimics
pose-estimation jitter.

Outcomes:

* ``catch``    - the hand meets the ball; the ball locks to the hand.
* ``jump_off`` - contact happens exactly like a catch, then the ball
  rebounds with sampled restitution and leaves. Until contact the trial is
  constructed identically to a catch, so the outcome is only observable in
  the final frames.
* ``miss``     - the reach target is offset beyond the capture radius; the
  ball flies past untouched.

Raw trials carry 61..90 frames; the first contact lands at processed step
40 +- 2 after the preprocessing truncation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KinematicsError
from .pipeline import RawTrial
from .rng import derive_seed, make_rng

FPS = 100.0


@dataclass
class SynthConfig:
    n_trials: int = 1975
    catch_fraction: float = 1082 / 1975
    jump_off_fraction: float = 0.6
    left_fraction: float = 1010 / 1975
    frame_width: float = 1000.0
    gravity: float = 1500.0
    throw_origin_x: tuple[float, float] = (40.0, 160.0)
    throw_origin_y: tuple[float, float] = (380.0, 620.0)
    intercept_dx: tuple[float, float] = (110.0, 180.0)
    intercept_y: tuple[float, float] = (430.0, 570.0)
    shoulder: tuple[float, float] = (810.0, 500.0)
    upper_arm: float = 120.0
    forearm: float = 115.0
    hand_offset: float = 28.0
    rest_offset: tuple[float, float] = (-60.0, -140.0)
    reaction_delay: tuple[int, int] = (6, 18)
    capture_radius: float = 25.0
    grip_radius: float = 8.0
    reach_noise: float = 6.0
    miss_offset: tuple[float, float] = (1.8, 3.2)  # in capture radii
    restitution: tuple[float, float] = (0.25, 0.55)
    rebound_kick: tuple[float, float] = (80.0, 200.0)
    length_window: tuple[int, int] = (61, 90)
    contact_step: int = 40
    contact_jitter: int = 2
    marker_noise: float = 1.2
    ball_noise: float = 0.5
    sway_amp: float = 3.0
    finger_radii: tuple[float, ...] = (34.0, 36.0, 38.0, 36.0, 33.0)
    finger_angles: tuple[float, ...] = (-0.9, -0.45, 0.0, 0.45, 0.9)  # radians

    def __post_init__(self):
        if not 0.0 < self.catch_fraction < 1.0 or not 0.0 < self.jump_off_fraction < 1.0:
            raise ValueError("fractions must be in (0, 1)")
        if self.length_window[0] < 61 or self.length_window[0] > self.length_window[1]:
            raise ValueError("length window must be within [61, inf) and nonempty")
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")


def _min_jerk(p0: np.ndarray, p1: np.ndarray, n_steps: int) -> np.ndarray:
    """Positions along a minimum-jerk profile, inclusive of both endpoints."""
    tau = np.linspace(0.0, 1.0, n_steps + 1)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    return p0[None, :] + s[:, None] * (p1 - p0)[None, :]


def _elbow(shoulder: np.ndarray, wrist: np.ndarray, l1: float, l2: float) -> np.ndarray:
    d_vec = wrist - shoulder
    d = float(np.hypot(*d_vec))
    d = min(max(d, abs(l1 - l2) + 1e-9), l1 + l2 - 1e-9)
    a = (l1 * l1 - l2 * l2 + d * d) / (2 * d)
    h = np.sqrt(max(l1 * l1 - a * a, 0.0))
    u = d_vec / max(float(np.hypot(*d_vec)), 1e-12)
    n = np.array([-u[1], u[0]])
    return shoulder + a * u + h * n


def _sway(rng: np.random.Generator, n_frames: int, amp: float) -> np.ndarray:
    freqs = rng.uniform(0.3, 0.8, size=2)
    phases = rng.uniform(0.0, 2 * np.pi, size=2)
    t = np.arange(n_frames) / FPS
    return amp * np.stack([np.sin(2 * np.pi * freqs[0] * t + phases[0]),
                           np.sin(2 * np.pi * freqs[1] * t + phases[1])], axis=1)


def _rot(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def generate_trial(config: SynthConfig, rng: np.random.Generator, label: int,
                   drop_kind: str, hand_side: str = "right",
                   trial_id: str = "trial") -> RawTrial:
    """One raw trial of the requested class; resamples geometry on conflicts."""
    if drop_kind not in ("catch", "jump_off", "miss"):
        raise ValueError(f"unknown drop_kind {drop_kind!r}")
    if (drop_kind == "catch") != (label == 1):
        raise ValueError("label 1 requires drop_kind catch and vice versa")
    for _ in range(100):
        trial = _attempt_trial(config, rng, label, drop_kind, hand_side, trial_id)
        if trial is not None:
            return trial
    raise KinematicsError(
        f"trial {trial_id}: could not satisfy the {drop_kind} separation "
        f"constraint in 100 attempts")


def _attempt_trial(config, rng, label, drop_kind, hand_side, trial_id):
    length = int(rng.integers(config.length_window[0], config.length_window[1] + 1))
    jitter = int(rng.integers(-config.contact_jitter, config.contact_jitter + 1))
    contact = length - 60 + config.contact_step + jitter
    t_contact = contact / FPS

    shoulder0 = np.array(config.shoulder) + rng.uniform(-8.0, 8.0, size=2)
    shoulder = shoulder0[None, :] + _sway(rng, length, config.sway_amp)

    origin = np.array([rng.uniform(*config.throw_origin_x),
                       rng.uniform(*config.throw_origin_y)])
    intercept = np.array([shoulder0[0] - rng.uniform(*config.intercept_dx),
                          rng.uniform(*config.intercept_y)])
    vx = (intercept[0] - origin[0]) / t_contact
    vy = (intercept[1] - origin[1] + 0.5 * config.gravity * t_contact**2) / t_contact
    t = np.arange(length) / FPS
    ball = np.stack([origin[0] + vx * t,
                     origin[1] + vy * t - 0.5 * config.gravity * t * t], axis=1)

    # hand-base trajectory: rest, minimum-jerk reach, settle, hold
    grip = config.grip_radius * _rot(np.array([1.0, 0.0]), rng.uniform(0, 2 * np.pi))
    if drop_kind == "miss":
        mag = config.capture_radius * rng.uniform(*config.miss_offset)
        for _ in range(20):
            direction = _rot(np.array([1.0, 0.0]), rng.uniform(0, 2 * np.pi))
            target = ball[contact] + mag * direction
            if np.hypot(*(target - shoulder0)) <= config.upper_arm + config.forearm - 12.0:
                break
        else:
            return None
    else:
        target = ball[contact] - grip
    target = target + rng.uniform(-config.reach_noise, config.reach_noise, size=2)
    if np.hypot(*(target - shoulder0)) > config.upper_arm + config.forearm - 10.0:
        return None

    react = int(rng.integers(*config.reaction_delay))
    rest = shoulder0 + np.array(config.rest_offset)
    hand = np.empty((length, 2))
    idle = _sway(rng, length, 2.5)
    hand[:react + 1] = rest[None, :] + idle[:react + 1]
    reach = _min_jerk(rest + idle[react], target, contact - react)
    hand[react:contact + 1] = reach
    n_settle = min(16, length - 1 - contact)
    hold = target + np.array([25.0, -20.0])
    if n_settle > 0:
        hand[contact:contact + n_settle + 1] = _min_jerk(target, hold, n_settle)
        hand[contact + n_settle:] = hold[None, :]
    if contact + n_settle < length:
        hand[contact + n_settle:] += idle[contact + n_settle:] * 0.4

    # ball outcome
    if drop_kind == "catch":
        lock = ball[contact] - hand[contact]
        ball[contact:] = hand[contact:] + lock[None, :]
    elif drop_kind == "jump_off":
        v_in = np.array([vx, vy - config.gravity * t_contact])
        e = rng.uniform(*config.restitution)
        kick = rng.uniform(*config.rebound_kick)
        v_out = np.array([e * v_in[0] * rng.uniform(0.6, 1.2),
                          -e * v_in[1] * rng.uniform(0.6, 1.2) + kick])
        speed = float(np.hypot(*v_out))
        if speed < 300.0:
            v_out *= 300.0 / max(speed, 1e-9)
        td = (np.arange(length - contact)) / FPS
        ball[contact:, 0] = ball[contact, 0] + v_out[0] * td
        ball[contact:, 1] = ball[contact, 1] + v_out[1] * td - 0.5 * config.gravity * td * td

    # separation / capture checks on the clean geometry
    dist = np.hypot(ball[:, 0] - hand[:, 0], ball[:, 1] - hand[:, 1])
    if drop_kind == "catch":
        if dist[contact:].max() >= config.capture_radius - 6.0:
            return None
    elif drop_kind == "miss":
        if dist.min() <= config.capture_radius * 1.4:
            return None
    else:
        if dist[contact] >= config.capture_radius - 6.0:
            return None
        if dist[-1] <= config.capture_radius * 1.5:
            return None

    # assemble markers: shoulder, elbow, wrist, hand base, fingertips
    frames = np.empty((length, 20))
    tip_jit = rng.uniform(-2.0, 2.0, size=(5, 2))
    for i in range(length):
        arm_dir = hand[i] - shoulder[i]
        arm_dir /= max(float(np.hypot(*arm_dir)), 1e-9)
        wrist = hand[i] - config.hand_offset * arm_dir
        elbow = _elbow(shoulder[i], wrist, config.upper_arm, config.forearm)
        frames[i, 0:2] = shoulder[i]
        frames[i, 2:4] = elbow
        frames[i, 4:6] = wrist
        frames[i, 6:8] = hand[i]
        point = hand[i] - wrist
        point /= max(float(np.hypot(*point)), 1e-9)
        for j, (r, ang) in enumerate(zip(config.finger_radii, config.finger_angles)):
            frames[i, 8 + 2 * j:10 + 2 * j] = hand[i] + r * _rot(point, ang) + tip_jit[j]
    frames[:, 18:20] = ball

    frames[:, :18] += rng.normal(0.0, config.marker_noise, size=(length, 18))
    frames[:, 18:20] += rng.normal(0.0, config.ball_noise, size=(length, 2))

    if hand_side == "left":
        frames[:, 0::2] = config.frame_width - frames[:, 0::2]

    return RawTrial(trial_id=trial_id, frames=frames, label=label,
                    hand_side=hand_side, contact_frame=contact, drop_kind=drop_kind)


def plan_dataset(config: SynthConfig, rng: np.random.Generator):
    """Deterministic class/kind/side assignment for every trial index."""
    n = config.n_trials
    n_catch = int(round(n * config.catch_fraction))
    n_drop = n - n_catch
    n_jump = int(round(n_drop * config.jump_off_fraction))
    n_miss = n_drop - n_jump
    kinds = ([(1, "catch")] * n_catch + [(0, "jump_off")] * n_jump
             + [(0, "miss")] * n_miss)
    rng.shuffle(kinds)
    n_left = int(round(n * config.left_fraction))
    sides = ["left"] * n_left + ["right"] * (n - n_left)
    rng.shuffle(sides)
    return kinds, sides


def generate_dataset(config: SynthConfig, seed: int) -> list[RawTrial]:
    """Deterministic dataset: per-trial RNG streams derived from the seed.

    A trial's stream depends only on (seed, trial index), so generation
    order (or parallel generation) cannot change the output.
    """
    master = make_rng(derive_seed("synth-plan", seed))
    kinds, sides = plan_dataset(config, master)
    trials = []
    width = len(str(config.n_trials - 1))
    for i, ((label, kind), side) in enumerate(zip(kinds, sides)):
        trial_rng = make_rng(derive_seed("synth-trial", seed, i))
        trials.append(generate_trial(config, trial_rng, label, kind, side,
                                     trial_id=f"t{i:0{width}d}"))
    return trials
