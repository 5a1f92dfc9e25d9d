"""Deterministic synthetic traverse pairs for desk-scale testing.

The scene is a 1-D route of seeded edge generators: the route is divided
into ``scene_grid`` cells and each cell owns a random pixel pattern drawn
from a per-cell seed. A simulated vehicle drives the route with a seeded
speed profile (optionally with full stops); structural events fire on a
fixed distance grid, so their count is proportional to distance travelled
and their rate in time is proportional to instantaneous speed. Uniform
spurious noise events are added on top. GPS samples follow the motion at
10 Hz along a small arc on the equator, where meters per degree is uniform.

All randomness flows through numpy's PCG64 keyed by SeedSequence entropy
lists, so identical parameters reproduce streams and tracks bit-exactly
(the generator algorithm is fixed: PCG64 as shipped by numpy).

Repeat traverses with changed conditions come from ``perturb_traverse``:
the scene skeleton is kept (keyed by the base seed) while a chosen
fraction of cells is re-drawn from the new seed, and the speed profile
and noise are re-sampled independently.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .evaluate import EARTH_RADIUS_M, GeoTrack
from .events import EventStream

METERS_PER_DEGREE = np.pi / 180.0 * EARTH_RADIUS_M

GPS_RATE_HZ = 10.0
_SIM_DT = 1.0 / GPS_RATE_HZ
_PATTERN_PIXELS = 20
_GPS_TAIL_S = 2.0

# SeedSequence stream tags, so the per-purpose generators never collide.
_STREAM_SCENE = 1
_STREAM_SCENE_REDRAWN = 2
_STREAM_MOTION = 3
_STREAM_NOISE = 4
_STREAM_CHOICE = 5
_STREAM_REDRAW_PICK = 6


@dataclass
class SynthParams:
    """Synthetic traverse settings; all randomness derives from the seeds.

    ``seed`` drives this traverse's motion, noise, and event choices.
    ``scene_seed`` keys the shared scene skeleton (defaults to ``seed``);
    ``appearance_shift`` re-draws that fraction of scene cells using
    ``seed``, modelling appearance change between repeat traverses.
    """

    seed: int = 0
    route_length: float = 400.0
    mean_speed: float = 10.0
    speed_variation: float = 0.2
    stop_count: int = 0
    event_rate_per_meter: float = 200.0
    scene_grid: int = 40
    noise_rate: float = 0.0
    appearance_shift: float = 0.0
    scene_seed: int | None = None
    sensor_width: int = 64
    sensor_height: int = 48

    def validate(self) -> None:
        if self.route_length <= 0 or self.mean_speed <= 0:
            raise ValueError("route_length and mean_speed must be > 0")
        if not (0.0 <= self.speed_variation <= 1.0):
            raise ValueError("speed_variation must be in [0, 1]")
        if not (0.0 <= self.noise_rate):
            raise ValueError("noise_rate must be >= 0")
        if not (0.0 <= self.appearance_shift <= 1.0):
            raise ValueError("appearance_shift must be in [0, 1]")
        if self.stop_count < 0 or self.scene_grid < 1:
            raise ValueError("stop_count >= 0 and scene_grid >= 1 required")
        if self.event_rate_per_meter < 0:
            raise ValueError("event_rate_per_meter must be >= 0")


def _rng(*entropy) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


def _cell_pattern(scene_seed: int, cell: int, redrawn_seed: int | None,
                  width: int, height: int):
    """Pixel pattern (x, y, p arrays) of one scene cell."""
    if redrawn_seed is None:
        rng = _rng(_STREAM_SCENE, scene_seed, cell)
    else:
        rng = _rng(_STREAM_SCENE_REDRAWN, redrawn_seed, cell)
    x = rng.integers(0, width, _PATTERN_PIXELS)
    y = rng.integers(0, height, _PATTERN_PIXELS)
    p = rng.choice(np.array([-1, 1], np.int8), _PATTERN_PIXELS)
    return x, y, p


def _speed_profile(params: SynthParams, rng: np.random.Generator):
    """Simulate motion; returns (times, progress) sampled at the GPS rate.

    Speed varies smoothly via control points every ~5 s; stops pin the
    speed to zero for a seeded duration once progress crosses seeded
    route positions.
    """
    control = rng.uniform(-1.0, 1.0, 256)  # ample control points, fixed draw
    stop_at = np.sort(rng.uniform(0.1, 0.9, params.stop_count)) * params.route_length
    stop_for = rng.uniform(3.0, 8.0, params.stop_count)

    times = [0.0]
    progress = [0.0]
    s = 0.0
    t = 0.0
    next_stop = 0
    stop_until = -1.0
    max_t = 20.0 * params.route_length / params.mean_speed + 120.0  # runaway guard
    while s < params.route_length and t < max_t:
        if next_stop < len(stop_at) and s >= stop_at[next_stop] and stop_until < t:
            stop_until = t + stop_for[next_stop]
            next_stop += 1
        if t < stop_until:
            v = 0.0
        else:
            c = int(t / 5.0)
            frac = (t / 5.0) - c
            w = control[c % len(control)] * (1 - frac) + control[(c + 1) % len(control)] * frac
            v = params.mean_speed * max(0.0, 1.0 + params.speed_variation * w)
        t += _SIM_DT
        s = min(s + v * _SIM_DT, params.route_length)
        times.append(t)
        progress.append(s)
    # Short stationary tail so frame timestamps at window ends stay
    # inside the GPS span.
    for _ in range(int(_GPS_TAIL_S / _SIM_DT)):
        t += _SIM_DT
        times.append(t)
        progress.append(s)
    return np.array(times), np.array(progress)


def _event_times_at(distances: np.ndarray, times: np.ndarray,
                    progress: np.ndarray) -> np.ndarray:
    """Timestamp at which progress first crosses each distance."""
    idx = np.searchsorted(progress, distances, side="left")
    idx = np.clip(idx, 1, len(progress) - 1)
    s0 = progress[idx - 1]
    s1 = progress[idx]
    t0 = times[idx - 1]
    t1 = times[idx]
    frac = np.where(s1 > s0, (distances - s0) / np.where(s1 > s0, s1 - s0, 1.0), 1.0)
    return t0 + frac * (t1 - t0)


def generate_traverse(params: SynthParams) -> tuple[EventStream, GeoTrack]:
    """Generate one traverse: a sorted event stream plus its GPS track."""
    params.validate()
    scene_seed = params.seed if params.scene_seed is None else params.scene_seed
    motion_rng = _rng(_STREAM_MOTION, params.seed)
    times, progress = _speed_profile(params, motion_rng)

    # GPS: eastbound along the equator from lon 0.
    track = GeoTrack(
        t=times,
        lat=np.zeros_like(times),
        lon=progress / METERS_PER_DEGREE,
    )

    # Which cells show a re-drawn appearance in this traverse.
    grid = params.scene_grid
    n_redrawn = int(round(params.appearance_shift * grid))
    pick_rng = _rng(_STREAM_REDRAW_PICK, params.seed)
    redrawn = set(pick_rng.permutation(grid)[:n_redrawn].tolist()) if n_redrawn else set()

    n_structural = int(round(params.route_length * params.event_rate_per_meter))
    cell_len = params.route_length / grid
    choice_rng = _rng(_STREAM_CHOICE, params.seed)
    if n_structural:
        distances = (np.arange(n_structural) + 0.5) * (params.route_length / n_structural)
        ev_t = _event_times_at(distances, times, progress)
        cells = np.minimum((distances / cell_len).astype(np.int64), grid - 1)
        picks = choice_rng.integers(0, _PATTERN_PIXELS, n_structural)
        ev_x = np.empty(n_structural, np.uint16)
        ev_y = np.empty(n_structural, np.uint16)
        ev_p = np.empty(n_structural, np.int8)
        for c in np.unique(cells):
            px, py, pp = _cell_pattern(
                scene_seed, int(c),
                params.seed if int(c) in redrawn else None,
                params.sensor_width, params.sensor_height)
            mask = cells == c
            ev_x[mask] = px[picks[mask]]
            ev_y[mask] = py[picks[mask]]
            ev_p[mask] = pp[picks[mask]]
        t_last = float(ev_t.max())
    else:
        ev_t = np.empty(0)
        ev_x = np.empty(0, np.uint16)
        ev_y = np.empty(0, np.uint16)
        ev_p = np.empty(0, np.int8)
        t_last = float(times[-1])

    noise_rng = _rng(_STREAM_NOISE, params.seed)
    n_noise = int(round(params.noise_rate * n_structural))
    nz_t = noise_rng.uniform(0.0, t_last, n_noise)
    nz_x = noise_rng.integers(0, params.sensor_width, n_noise).astype(np.uint16)
    nz_y = noise_rng.integers(0, params.sensor_height, n_noise).astype(np.uint16)
    nz_p = noise_rng.choice(np.array([-1, 1], np.int8), n_noise)

    all_t = np.concatenate([ev_t, nz_t])
    all_x = np.concatenate([ev_x, nz_x])
    all_y = np.concatenate([ev_y, nz_y])
    all_p = np.concatenate([ev_p, nz_p])
    order = np.argsort(all_t, kind="stable")
    stream = EventStream(
        all_x[order].astype(np.uint16), all_y[order].astype(np.uint16),
        all_t[order], all_p[order].astype(np.int8),
        params.sensor_width, params.sensor_height,
    )
    stream.validate()
    return stream, track


def perturb_traverse(base: SynthParams, appearance_shift: float,
                     seed: int) -> tuple[EventStream, GeoTrack]:
    """Repeat traverse: same route and scene skeleton, new conditions.

    The scene stays keyed by the base traverse's scene seed; a fraction
    ``appearance_shift`` of cells is re-drawn from ``seed``, and the speed
    profile and noise are re-sampled from ``seed``.
    """
    scene_seed = base.seed if base.scene_seed is None else base.scene_seed
    return generate_traverse(replace(
        base, seed=seed, scene_seed=scene_seed, appearance_shift=appearance_shift))
