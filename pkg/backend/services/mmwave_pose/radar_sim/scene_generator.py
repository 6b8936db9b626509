"""
Scene Generator
Synthetic articulated-figure scenes and their simulated radar returns
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from radar_sim.radar_config import RadarConfig
from radar_sim.skeleton import animate, joint_reflectivity, program_for_action
from radar_sim.synthesizer import Scatterer, synthesize_frame
from seeding import derive_rng, derive_seed

logger = logging.getLogger(__name__)


@dataclass
class SceneConfig:
    """Room geometry, clip length and figure/bystander variability"""
    room_x: Tuple[float, float] = (-1.5, 1.5)
    room_y: Tuple[float, float] = (1.0, 5.0)
    n_frames: int = 20
    cycle_hz: float = 0.5
    tempo_jitter: float = 0.1
    body_scale_range: Tuple[float, float] = (0.85, 1.15)
    style_amplitude_range: Tuple[float, float] = (0.8, 1.2)
    lateral_range: Tuple[float, float] = (-0.5, 0.5)
    standoff_range: Tuple[float, float] = (1.4, 2.2)
    position_jitter: float = 0.1
    bystander_scatterers: int = 5
    bystander_radius: float = 0.2
    bystander_max_speed: float = 0.5
    bystander_amplitude: float = 2.0

    @property
    def metres_per_unit(self) -> Tuple[float, float]:
        return (self.room_x[1] - self.room_x[0], self.room_y[1] - self.room_y[0])

    def validate(self) -> List[str]:
        problems = []
        width, depth = self.metres_per_unit
        if width <= 0 or depth <= 0:
            problems.append("room extents must be positive")
        if self.room_y[0] <= 0:
            problems.append("room must lie in front of the radar (room_y min > 0)")
        if self.n_frames < 2:
            problems.append("n_frames must be >= 2")
        if self.bystander_scatterers < 1:
            problems.append("bystander_scatterers must be >= 1")
        return problems


@dataclass
class FigureScene:
    """Joint and bystander trajectories of one clip, in room metres"""
    person_id: int
    action_id: int
    clip_index: int
    program: str
    tempo: float
    joints: np.ndarray
    reflectivity: np.ndarray
    frame_rate: float
    room_x: Tuple[float, float]
    room_y: Tuple[float, float]
    bystander: Optional[np.ndarray] = None
    bystander_amplitude: float = 2.0

    @property
    def n_frames(self) -> int:
        return self.joints.shape[0]

    @property
    def interference(self) -> bool:
        return self.bystander is not None

    @property
    def metres_per_unit(self) -> Tuple[float, float]:
        return (self.room_x[1] - self.room_x[0], self.room_y[1] - self.room_y[0])

    def labels(self) -> np.ndarray:
        """Joint coordinates normalized to the room, [T, 13, 2] as (x, y) in [0, 1]"""
        origin = np.array([self.room_x[0], self.room_y[0]])
        return ((self.joints - origin) / np.array(self.metres_per_unit)).astype(np.float32)

    def _points(self) -> Tuple[np.ndarray, np.ndarray]:
        points, amplitudes = [self.joints], [self.reflectivity]
        if self.bystander is not None:
            points.append(self.bystander)
            amplitudes.append(np.full(self.bystander.shape[1], self.bystander_amplitude))
        return np.concatenate(points, axis=1), np.concatenate(amplitudes)

    def scatterers(self) -> List[List[Scatterer]]:
        """Per-frame scatterer lists; radial velocity is -d(range)/dt by finite differences"""
        points, amplitudes = self._points()
        ranges = np.hypot(points[..., 0], points[..., 1])
        azimuths = np.arctan2(points[..., 0], points[..., 1])
        velocities = -np.gradient(ranges, 1.0 / self.frame_rate, axis=0)

        frames = []
        for t in range(self.n_frames):
            frames.append([
                Scatterer(range=float(ranges[t, p]), radial_velocity=float(velocities[t, p]),
                          azimuth=float(azimuths[t, p]), amplitude=float(amplitudes[p]))
                for p in range(points.shape[1])
            ])
        return frames


def _bystander_walk(rng: np.random.Generator, cfg: SceneConfig, frame_rate: float) -> np.ndarray:
    """Cluster of scatterers on a reflecting random walk, [T, n_scatterers, 2]"""
    dt = 1.0 / frame_rate
    margin = cfg.bystander_radius
    lo = np.array([cfg.room_x[0] + margin, cfg.room_y[0] + margin])
    hi = np.array([cfg.room_x[1] - margin, cfg.room_y[1] - margin])

    centre = rng.uniform(lo, hi)
    heading = rng.uniform(0, 2 * np.pi)
    offsets = rng.uniform(-1, 1, size=(cfg.bystander_scatterers, 2)) * cfg.bystander_radius / np.sqrt(2)

    track = np.zeros((cfg.n_frames, 2))
    for t in range(cfg.n_frames):
        track[t] = centre
        heading += rng.normal(0.0, 0.5)
        speed = rng.uniform(0.3, 1.0) * cfg.bystander_max_speed
        centre = centre + speed * dt * np.array([np.cos(heading), np.sin(heading)])
        for axis in range(2):
            if centre[axis] < lo[axis]:
                centre[axis] = 2 * lo[axis] - centre[axis]
                heading = np.pi - heading if axis == 0 else -heading
            elif centre[axis] > hi[axis]:
                centre[axis] = 2 * hi[axis] - centre[axis]
                heading = np.pi - heading if axis == 0 else -heading
    return track[:, None, :] + offsets[None, :, :]


def build_scene(person_id: int, action_id: int, clip_index: int, interference: bool, seed: int,
                scene_cfg: SceneConfig, frame_rate: float) -> FigureScene:
    person_rng = derive_rng(seed, 'person', person_id)
    body_scale = person_rng.uniform(*scene_cfg.body_scale_range)
    style = person_rng.uniform(*scene_cfg.style_amplitude_range)
    person_phase = person_rng.uniform(0, 2 * np.pi)
    lateral = person_rng.uniform(*scene_cfg.lateral_range)
    standoff = person_rng.uniform(*scene_cfg.standoff_range)

    clip_rng = derive_rng(seed, 'clip', person_id, action_id, clip_index)
    phase = person_phase + clip_rng.normal(0.0, 0.5)
    tempo_jitter = 1.0 + clip_rng.uniform(-scene_cfg.tempo_jitter, scene_cfg.tempo_jitter)
    offset = clip_rng.uniform(-scene_cfg.position_jitter, scene_cfg.position_jitter, size=2)

    program, tempo = program_for_action(action_id)
    times = np.arange(scene_cfg.n_frames) / frame_rate
    body = animate(program, times, body_scale, scene_cfg.cycle_hz * tempo * tempo_jitter, phase, style)
    joints = body + np.array([lateral + offset[0], standoff + offset[1]])

    lo = np.array([scene_cfg.room_x[0], scene_cfg.room_y[0]])
    hi = np.array([scene_cfg.room_x[1], scene_cfg.room_y[1]])
    if np.any(joints < lo) or np.any(joints > hi):
        logger.warning(f"Scene p{person_id} a{action_id} c{clip_index} left the room; clamping joints")
        joints = np.clip(joints, lo, hi)

    bystander = None
    if interference:
        bystander_rng = derive_rng(seed, 'bystander', person_id, action_id, clip_index)
        bystander = _bystander_walk(bystander_rng, scene_cfg, frame_rate)

    return FigureScene(
        person_id=person_id,
        action_id=action_id,
        clip_index=clip_index,
        program=program,
        tempo=tempo,
        joints=joints,
        reflectivity=joint_reflectivity(),
        frame_rate=frame_rate,
        room_x=tuple(scene_cfg.room_x),
        room_y=tuple(scene_cfg.room_y),
        bystander=bystander,
        bystander_amplitude=scene_cfg.bystander_amplitude,
    )


def synthesize_clip(scene: FigureScene, radar_cfg: RadarConfig, seed: int) -> np.ndarray:
    """IQ cubes of every frame, [T, n_chirps, n_adc, n_virtual_antennas]"""
    frames = []
    for t, scatterers in enumerate(scene.scatterers()):
        noise_seed = derive_seed(seed, 'noise', scene.person_id, scene.action_id, scene.clip_index, t)
        frames.append(synthesize_frame(scatterers, radar_cfg, noise_seed))
    return np.stack(frames)


def iter_dataset(persons: int, actions: int, clips_per_pair: int, interference: bool, seed: int,
                 radar_cfg: Optional[RadarConfig] = None,
                 scene_cfg: Optional[SceneConfig] = None,
                 person_ids: Optional[List[int]] = None) -> Iterator[Tuple[FigureScene, np.ndarray]]:
    """Yield (scene, IQ clip) pairs in (person, action, clip) order"""
    if min(persons, actions, clips_per_pair) < 1:
        raise ValueError("persons, actions and clips_per_pair must all be >= 1")
    radar_cfg = radar_cfg or RadarConfig()
    scene_cfg = scene_cfg or SceneConfig()

    for person_id in (person_ids if person_ids is not None else range(persons)):
        for action_id in range(actions):
            for clip_index in range(clips_per_pair):
                scene = build_scene(person_id, action_id, clip_index, interference, seed,
                                    scene_cfg, radar_cfg.frame_rate)
                yield scene, synthesize_clip(scene, radar_cfg, seed)


def generate_dataset(persons: int, actions: int, clips_per_pair: int, interference: bool, seed: int,
                     radar_cfg: Optional[RadarConfig] = None,
                     scene_cfg: Optional[SceneConfig] = None) -> List[Tuple[FigureScene, np.ndarray]]:
    logger.info(f"Generating {persons * actions * clips_per_pair} clips "
                f"(persons={persons}, actions={actions}, clips_per_pair={clips_per_pair}, "
                f"interference={interference})")
    return list(iter_dataset(persons, actions, clips_per_pair, interference, seed, radar_cfg, scene_cfg))


def scene_labels_only(persons: int, actions: int, clips_per_pair: int, seed: int,
                      scene_cfg: Optional[SceneConfig] = None, frame_rate: float = 10.0) -> List[FigureScene]:
    """Scenes without radar synthesis, for label-level checks and manifests"""
    scene_cfg = scene_cfg or SceneConfig()
    return [
        build_scene(p, a, c, False, seed, scene_cfg, frame_rate)
        for p in range(persons) for a in range(actions) for c in range(clips_per_pair)
    ]

