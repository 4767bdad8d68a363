"""Seeded generator of periodic, subject-distinct gait sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from logging import Logger, getLogger

import numpy as np
from numpy.typing import NDArray

from gait_koopman.config import PopulationConfig
from gait_koopman.lds.koopman import KoopmanOperator
from gait_koopman.pose.types import NUM_JOINTS, SHAPE_DIM, LabeledSequence, PoseSequence, ShapeVector
from gait_koopman.utils import run_parallel

logger: Logger = getLogger(__name__)

MIN_FREQUENCY_GAP = 0.02
SHAPE_JITTER = 0.01
AMPLITUDE_RANGE = (0.1, 0.5)
SECOND_HARMONIC_RANGE = (0.0, 0.3)

Seed = int | np.random.SeedSequence


@dataclass(frozen=True)
class SubjectSpec:
    """Gait parameters of one synthetic identity.

    Args:
        label: Identity label
        frequency: Base angular frequency in radians per frame
        amplitudes: (24, 3) per-joint amplitude triples
        phases: (24,) per-joint phase offsets
        harmonics: Weights (h1, h2) of the fundamental and the 2nd harmonic
        shape: Subject shape vector
        noise: Standard deviation of the Gaussian angle noise
    """

    label: str
    frequency: float
    amplitudes: NDArray[np.float64]
    phases: NDArray[np.float64]
    harmonics: tuple[float, float]
    shape: ShapeVector
    noise: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.frequency < math.pi:
            raise ValueError(f"Frequency must lie in (0, pi), got {self.frequency}")
        if self.noise < 0:
            raise ValueError(f"Noise level must be non-negative, got {self.noise}")
        amplitudes = np.asarray(self.amplitudes, dtype=np.float64)
        phases = np.asarray(self.phases, dtype=np.float64)
        if amplitudes.shape != (NUM_JOINTS, 3):
            raise ValueError(f"Amplitudes need shape ({NUM_JOINTS}, 3), got {amplitudes.shape}")
        if phases.shape != (NUM_JOINTS,):
            raise ValueError(f"Phases need shape ({NUM_JOINTS},), got {phases.shape}")
        # Largest angle magnitude the noise-free signal can reach
        peak = np.linalg.norm(amplitudes, axis=1).max() * (abs(self.harmonics[0]) + abs(self.harmonics[1]))
        if peak >= math.pi:
            raise ValueError(f"Amplitudes allow joint angles up to {peak:.3f} >= pi")
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def random(cls, label: str, frequency: float, seed: Seed, noise: float = 0.0) -> "SubjectSpec":
        """Draw amplitudes, phases, 2nd-harmonic weight and shape for a subject."""
        rng = np.random.default_rng(seed)
        return cls(
            label=label,
            frequency=frequency,
            amplitudes=rng.uniform(*AMPLITUDE_RANGE, size=(NUM_JOINTS, 3)),
            phases=rng.uniform(0.0, 2.0 * math.pi, size=NUM_JOINTS),
            harmonics=(1.0, float(rng.uniform(*SECOND_HARMONIC_RANGE))),
            shape=ShapeVector(rng.normal(0.0, 1.0, size=SHAPE_DIM)),
            noise=noise,
        )


def clean_angles(spec: SubjectSpec, n_frames: int) -> NDArray[np.float64]:
    """Noise-free (N, 24, 3) joint angles of a subject."""
    t = np.arange(n_frames, dtype=np.float64)[:, None]
    h1, h2 = spec.harmonics
    wave = h1 * np.sin(spec.frequency * t + spec.phases) + h2 * np.sin(2.0 * spec.frequency * t + spec.phases)
    return spec.amplitudes[None, :, :] * wave[:, :, None]


def generate_sequence(
    spec: SubjectSpec, n_frames: int, seed: Seed = 0, frame_rate: float = 30.0
) -> tuple[PoseSequence, ShapeVector]:
    """Sample one noisy sequence of a subject and its jittered shape.

    Args:
        spec: Subject parameters
        n_frames: Sequence length N (at least 2)
        seed: Seed for the noise and shape jitter
        frame_rate: Frame rate stored with the sequence

    Returns:
        Tuple of (pose sequence, per-sequence shape)
    """
    if n_frames < 2:
        raise ValueError(f"Sequences need at least 2 frames, got {n_frames}")
    rng = np.random.default_rng(seed)
    angles = clean_angles(spec, n_frames)
    if spec.noise > 0:
        angles = angles + rng.normal(0.0, spec.noise, size=angles.shape)
    shape = ShapeVector(spec.shape.coefficients + rng.normal(0.0, SHAPE_JITTER, size=SHAPE_DIM))
    return PoseSequence(angles, frame_rate), shape


def analytic_latents(spec: SubjectSpec, n_frames: int) -> NDArray[np.float64]:
    """Exact unit-modulus embedding of a noise-free subject.

    Channel 0 rotates at the base frequency, channel 1 at twice it; the
    result is (N, 4) with real parts first.
    """
    t = np.arange(n_frames, dtype=np.float64)[:, None]
    angle = t * np.array([spec.frequency, 2.0 * spec.frequency])
    return np.concatenate([np.cos(angle), np.sin(angle)], axis=1)


def analytic_operator(spec: SubjectSpec) -> KoopmanOperator:
    """Diagonal operator advancing `analytic_latents` by one frame."""
    return KoopmanOperator(np.array([spec.frequency, 2.0 * spec.frequency]))


def subject_frequencies(subjects: int, base: float, step: float) -> NDArray[np.float64]:
    """Evenly spaced frequencies base, base + step, ...

    Raises:
        ValueError: If the spacing is below the minimum gap or a frequency reaches pi
    """
    if step < MIN_FREQUENCY_GAP:
        raise ValueError(f"Frequency step {step} below the minimum gap {MIN_FREQUENCY_GAP}")
    frequencies = base + step * np.arange(subjects)
    if frequencies[0] <= 0 or frequencies[-1] >= math.pi:
        raise ValueError(f"Frequencies {frequencies[0]:.3f}..{frequencies[-1]:.3f} leave (0, pi)")
    return frequencies


@dataclass
class Population:
    """Subjects and their labeled sequences, grouped by identity in order."""

    subjects: list[SubjectSpec]
    items: list[LabeledSequence]

    def labels(self) -> list[str]:
        return [s.label for s in self.subjects]


def generate_population(
    subjects: int,
    sequences_per_subject: int,
    n_frames: int,
    seed: int = 0,
    noise: float = 0.01,
    base_frequency: float = 0.12,
    frequency_step: float = 0.025,
    frame_rate: float = 30.0,
    max_workers: int = 4,
    progress: bool = True,
) -> Population:
    """Generate G subjects with S sequences each.

    Every subject and sequence draws from its own spawned seed, so the result
    does not depend on thread scheduling.

    Args:
        subjects: Number of identities G (at least 2)
        sequences_per_subject: Sequences S per identity (at least 2)
        n_frames: Frames N per sequence
        seed: Root seed
        noise: Angle noise sigma
        base_frequency: Frequency of the first subject
        frequency_step: Spacing between consecutive subject frequencies
        frame_rate: Frame rate stored with each sequence
        max_workers: Threads used to sample sequences
        progress: Whether to display a progress bar

    Returns:
        Population with sequences ordered by subject, then sequence index
    """
    if subjects < 2:
        raise ValueError(f"Population needs at least 2 subjects, got {subjects}")
    if sequences_per_subject < 2:
        raise ValueError(f"Population needs at least 2 sequences per subject, got {sequences_per_subject}")
    if noise < 0:
        raise ValueError(f"Noise level must be non-negative, got {noise}")

    frequencies = subject_frequencies(subjects, base_frequency, frequency_step)
    subject_seeds = np.random.SeedSequence(seed).spawn(subjects)
    specs: list[SubjectSpec] = []
    tasks: list[tuple[SubjectSpec, int, np.random.SeedSequence]] = []
    for i, (frequency, subject_seed) in enumerate(zip(frequencies, subject_seeds)):
        spec_seed, *sequence_seeds = subject_seed.spawn(sequences_per_subject + 1)
        spec = SubjectSpec.random(f"subject_{i:03d}", float(frequency), spec_seed, noise=noise)
        specs.append(spec)
        tasks.extend((spec, j, s) for j, s in enumerate(sequence_seeds))

    def sample(task: tuple[SubjectSpec, int, np.random.SeedSequence]) -> LabeledSequence:
        spec, index, sequence_seed = task
        sequence, shape = generate_sequence(spec, n_frames, sequence_seed, frame_rate)
        return LabeledSequence(spec.label, sequence, shape, sequence_id=f"{spec.label}_seq{index:02d}")

    items = run_parallel(sample, tasks, max_workers=max_workers, desc="Generating sequences", progress=progress)
    logger.info(f"Generated {len(items)} sequences for {subjects} subjects")
    return Population(subjects=specs, items=items)


def population_from_config(
    config: PopulationConfig, seed: int = 0, max_workers: int = 4, progress: bool = True
) -> Population:
    return generate_population(
        config.subjects,
        config.sequences_per_subject,
        config.frames,
        seed=seed,
        noise=config.noise,
        base_frequency=config.base_frequency,
        frequency_step=config.frequency_step,
        frame_rate=config.frame_rate,
        max_workers=max_workers,
        progress=progress,
    )
