"""
Articulated Figure
13-joint planar skeleton, motion programs and joint reflectivities

The figure lies in the radar's lateral/depth plane. Body-frame coordinates are
(u, v): u lateral (+u towards +x), v along the body from the nose towards the
feet (+v towards +y, away from the radar).
"""

import logging
from typing import Callable, Dict, List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

JOINT_NAMES: List[str] = [
    'nose',
    'left_shoulder', 'left_elbow', 'left_wrist',
    'right_shoulder', 'right_elbow', 'right_wrist',
    'left_hip', 'right_hip',
    'left_knee', 'right_knee',
    'left_ankle', 'right_ankle',
]
JOINT_INDEX: Dict[str, int] = {name: i for i, name in enumerate(JOINT_NAMES)}
N_JOINTS = len(JOINT_NAMES)

NOSE, L_SHO, L_ELB, L_WRI, R_SHO, R_ELB, R_WRI, L_HIP, R_HIP, L_KNE, R_KNE, L_ANK, R_ANK = range(N_JOINTS)

# Neutral pose in metres, (u, v)
TEMPLATE = np.array([
    [0.00, 0.00],
    [-0.18, 0.25], [-0.22, 0.52], [-0.26, 0.78],
    [0.18, 0.25], [0.22, 0.52], [0.26, 0.78],
    [-0.12, 0.88], [0.12, 0.88],
    [-0.12, 1.32], [0.12, 1.32],
    [-0.12, 1.75], [0.12, 1.75],
], dtype=np.float64)

TORSO_JOINTS = (NOSE, L_SHO, R_SHO, L_HIP, R_HIP)
TORSO_REFLECTIVITY = 3.0
LIMB_REFLECTIVITY = 1.0


def joint_reflectivity() -> np.ndarray:
    amplitude = np.full(N_JOINTS, LIMB_REFLECTIVITY)
    amplitude[list(TORSO_JOINTS)] = TORSO_REFLECTIVITY
    return amplitude


def _rotate(points: np.ndarray, pivot: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Rotate points [T, n, 2] about pivot [T, 2] by angle [T] (radians)"""
    cos, sin = np.cos(angle)[:, None], np.sin(angle)[:, None]
    rel = points - pivot[:, None, :]
    u = rel[..., 0] * cos - rel[..., 1] * sin
    v = rel[..., 0] * sin + rel[..., 1] * cos
    return np.stack([u, v], axis=-1) + pivot[:, None, :]


def _rotate_chain(pose: np.ndarray, pivot: int, chain: Tuple[int, ...], angle: np.ndarray):
    pose[:, list(chain)] = _rotate(pose[:, list(chain)], pose[:, pivot], angle)


# Motion programs map a phase signal s(t) in [-1, 1] (and the raw phase) onto
# the pose in place. Peak joint speeds stay under ~1 m/s at the default tempo.

def _shoulder_roll(pose, s, phase, amp):
    offset = 0.05 * amp * np.stack([np.cos(phase), np.sin(phase)], axis=-1)
    pose[:, [L_SHO, L_ELB, L_WRI]] += offset[:, None, :]
    pose[:, [R_SHO, R_ELB, R_WRI]] += offset[:, None, :] * np.array([-1.0, 1.0])


def _sleeve_adjust(pose, s, phase, amp):
    reach = 0.5 * (1 - np.cos(phase)) * amp
    target = pose[:, L_ELB] - pose[:, R_WRI]
    pose[:, R_WRI] += 0.6 * reach[:, None] * target
    pose[:, R_ELB] += 0.3 * reach[:, None] * (pose[:, L_SHO] - pose[:, R_ELB])


def _stepping(pose, s, phase, amp):
    pose[:, [L_KNE, L_ANK], 1] += 0.10 * amp * s[:, None]
    pose[:, [R_KNE, R_ANK], 1] -= 0.10 * amp * s[:, None]


def _arm_raise(pose, s, phase, amp):
    angle = np.deg2rad(55) * amp * 0.5 * (1 - np.cos(phase))
    _rotate_chain(pose, L_SHO, (L_ELB, L_WRI), angle)
    _rotate_chain(pose, R_SHO, (R_ELB, R_WRI), -angle)


def _torso_twist(pose, s, phase, amp):
    pivot = pose[:, [L_HIP, R_HIP]].mean(axis=1)
    upper = (NOSE, L_SHO, L_ELB, L_WRI, R_SHO, R_ELB, R_WRI)
    pose[:, list(upper)] = _rotate(pose[:, list(upper)], pivot, np.deg2rad(12) * amp * s)


def _chest_expand(pose, s, phase, amp):
    spread = 0.06 * amp * 0.5 * (1 - np.cos(phase))
    pose[:, [L_SHO, L_ELB, L_WRI], 0] -= spread[:, None]
    pose[:, [R_SHO, R_ELB, R_WRI], 0] += spread[:, None]


def _arm_flap(pose, s, phase, amp):
    angle = np.deg2rad(30) * amp * s
    _rotate_chain(pose, L_SHO, (L_ELB, L_WRI), angle)
    _rotate_chain(pose, R_SHO, (R_ELB, R_WRI), -angle)


def _head_turn(pose, s, phase, amp):
    pose[:, NOSE, 0] += 0.06 * amp * s


def _hand_slide(pose, s, phase, amp):
    pose[:, R_WRI, 1] -= 0.15 * amp * 0.5 * (1 - np.cos(phase))
    pose[:, R_WRI, 0] -= 0.10 * amp * 0.5 * (1 - np.cos(phase))


def _arm_swing(pose, s, phase, amp):
    angle = np.deg2rad(25) * amp * s
    _rotate_chain(pose, L_SHO, (L_ELB, L_WRI), angle)
    _rotate_chain(pose, R_SHO, (R_ELB, R_WRI), angle)


def _forearm_lift(pose, s, phase, amp):
    angle = np.deg2rad(70) * amp * 0.5 * (1 - np.cos(phase))
    _rotate_chain(pose, L_ELB, (L_WRI,), -angle)
    _rotate_chain(pose, R_ELB, (R_WRI,), angle)


def _knee_march(pose, s, phase, amp):
    lift_left = 0.15 * amp * np.clip(s, 0, None)
    lift_right = 0.15 * amp * np.clip(-s, 0, None)
    pose[:, [L_KNE, L_ANK], 1] -= lift_left[:, None]
    pose[:, [R_KNE, R_ANK], 1] -= lift_right[:, None]


MOTION_PROGRAMS: Dict[str, Callable] = {
    'shoulder_roll': _shoulder_roll,
    'sleeve_adjust': _sleeve_adjust,
    'stepping': _stepping,
    'arm_raise': _arm_raise,
    'torso_twist': _torso_twist,
    'chest_expand': _chest_expand,
    'arm_flap': _arm_flap,
    'head_turn': _head_turn,
    'hand_slide': _hand_slide,
    'arm_swing': _arm_swing,
    'forearm_lift': _forearm_lift,
    'knee_march': _knee_march,
}
PROGRAM_NAMES: List[str] = list(MOTION_PROGRAMS)

# Action ids past the vocabulary reuse a program at a faster tempo
TEMPO_STEP = 0.25


def program_for_action(action_id: int) -> Tuple[str, float]:
    """Return (program name, tempo multiplier) for an action id"""
    if action_id < 0:
        raise ValueError(f"action_id must be non-negative, got {action_id}")
    cycle, index = divmod(action_id, len(PROGRAM_NAMES))
    return PROGRAM_NAMES[index], 1.0 + TEMPO_STEP * cycle


def animate(program: str, times: np.ndarray, body_scale: float, cycle_hz: float,
            phase_offset: float, amplitude: float = 1.0) -> np.ndarray:
    """
    Body-frame joint trajectories [T, 13, 2] for one motion program.

    Args:
        program: key of MOTION_PROGRAMS
        times: sample times in seconds
        body_scale: uniform scale applied to the neutral template
        cycle_hz: motion cycles per second
        phase_offset: radians added to the motion phase
        amplitude: multiplier on the program's motion extent
    """
    if program not in MOTION_PROGRAMS:
        raise KeyError(f"Unknown motion program: {program}")
    pose = np.repeat((TEMPLATE * body_scale)[None], len(times), axis=0)
    phase = 2 * np.pi * cycle_hz * times + phase_offset
    # programs that start from rest use (1 - cos) ramps of the same phase
    MOTION_PROGRAMS[program](pose, np.sin(phase), phase, amplitude)
    return pose
