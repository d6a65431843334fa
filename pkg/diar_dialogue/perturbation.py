import hashlib
from dataclasses import dataclass

import numpy as np

from .timeline import TimeInterval
from .token_codec import (
    CodecConfig,
    SegmentCondition,
    discretize_time,
    undiscretize_time
)


@dataclass(frozen=True)
class PerturbationConfig:
    """
    Label perturbation settings.

    Each of speaker, start and end is perturbed independently with
    probability ``p``; boundaries move by up to ``time_jitter_max`` seconds.
    """

    p: float = 0.1
    time_jitter_max: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.p <= 1:
            raise ValueError(f"'p' must lie in [0, 1]. Got {self.p}.")
        if self.time_jitter_max < 0:
            raise ValueError(
                f"'time_jitter_max' must be non-negative. "
                f"Got {self.time_jitter_max}."
            )


@dataclass(frozen=True)
class PerturbationRecord:
    """Which fields of a prompt condition were corrupted, and how."""

    speaker_perturbed: bool
    start_perturbed: bool
    end_perturbed: bool
    original: SegmentCondition
    perturbed: SegmentCondition

    def __post_init__(self) -> None:
        flagged = (self.speaker_perturbed or self.start_perturbed
                   or self.end_perturbed)
        if flagged != (self.perturbed != self.original):
            raise ValueError(
                "Perturbation flags disagree with the perturbed condition."
            )

    @classmethod
    def unperturbed(cls, cond: SegmentCondition) -> "PerturbationRecord":
        return cls(False, False, False, cond, cond)

    def to_dict(self) -> dict:
        return {
            "speaker_perturbed": self.speaker_perturbed,
            "start_perturbed": self.start_perturbed,
            "end_perturbed": self.end_perturbed,
            "original": self.original.to_dict(),
            "perturbed": self.perturbed.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PerturbationRecord":
        flags = []
        for key in ("speaker_perturbed", "start_perturbed", "end_perturbed"):
            if not isinstance(data[key], bool):
                raise ValueError(f"'{key}' must be a boolean.")
            flags.append(data[key])
        return cls(
            *flags,
            original=SegmentCondition.from_dict(data["original"]),
            perturbed=SegmentCondition.from_dict(data["perturbed"])
        )


# Exported function definitions ------------------------------------------------


def derive_rng_stream(
        seed: int,
        recording_id: str,
        chunk_index: int,
        turn_index: int
) -> np.random.Generator:
    """
    Deterministic random stream for one dialogue turn.

    The stream depends only on its arguments, never on iteration order or
    worker count, so parallel builds reproduce serial ones byte for byte.
    """
    key = f"{seed}\x1f{recording_id}\x1f{chunk_index}\x1f{turn_index}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    entropy = [int.from_bytes(digest[i:i + 8], "little") for i in (0, 8, 16, 24)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def perturb_condition(
        cond: SegmentCondition,
        chunk_speakers: int,
        cfg: PerturbationConfig,
        rng_stream: np.random.Generator,
        codec_cfg: CodecConfig | None = None,
        interval: TimeInterval | None = None
) -> PerturbationRecord:
    """
    Corrupt the prompt-side speaker and boundaries of a condition.

    Every call draws the same number of values from ``rng_stream``:
    three Bernoulli trials, one speaker draw and two jitters.

    Parameters
    ----------
    cond : SegmentCondition
        Clean condition.

    chunk_speakers : int
        Number of speakers in the chunk. With one speaker the speaker is
        never perturbed.

    cfg : PerturbationConfig
        Probability and jitter size.

    rng_stream : numpy.random.Generator
        Stream from :func:`derive_rng_stream`.

    codec_cfg : CodecConfig, optional
        Grid used to re-discretize jittered boundaries.

    interval : TimeInterval, optional
        Continuous chunk-relative segment the condition came from. Jitter is
        applied to these times; by default the grid times of ``cond`` are
        used.

    Returns
    -------
    PerturbationRecord
        Flags are set only for fields that actually changed. A jitter that
        rounds back to the clean index is pushed one grid step further.
    """
    if chunk_speakers < 1:
        raise ValueError(
            f"'chunk_speakers' must be at least 1. Got {chunk_speakers}."
        )
    codec_cfg = codec_cfg or CodecConfig()

    draws = rng_stream.random(3)
    speaker_offset = int(rng_stream.integers(1, max(chunk_speakers, 2)))
    jitters = rng_stream.uniform(-cfg.time_jitter_max, cfg.time_jitter_max,
                                 size=2)

    speaker = cond.local_speaker
    if draws[0] < cfg.p and chunk_speakers > 1:
        speaker = (cond.local_speaker + speaker_offset) % chunk_speakers

    if interval is not None:
        start_s, end_s = interval.start, interval.end
    else:
        start_s = undiscretize_time(cond.start_idx, codec_cfg)
        end_s = undiscretize_time(cond.end_idx, codec_cfg)

    start_idx, end_idx = cond.start_idx, cond.end_idx
    if draws[1] < cfg.p and cfg.time_jitter_max > 0:
        start_idx = _jitter_index(start_s, jitters[0], cond.start_idx,
                                  codec_cfg)
    if draws[2] < cfg.p and cfg.time_jitter_max > 0:
        end_idx = _jitter_index(end_s, jitters[1], cond.end_idx, codec_cfg)

    if start_idx > end_idx:
        if end_idx != cond.end_idx:
            end_idx = start_idx
        else:
            start_idx = end_idx

    perturbed = SegmentCondition(speaker, start_idx, end_idx)
    return PerturbationRecord(
        speaker_perturbed=speaker != cond.local_speaker,
        start_perturbed=start_idx != cond.start_idx,
        end_perturbed=end_idx != cond.end_idx,
        original=cond,
        perturbed=perturbed
    )


# Level 1 function definitions -------------------------------------------------


def _jitter_index(
        seconds: float,
        jitter: float,
        clean_index: int,
        codec_cfg: CodecConfig
) -> int:
    """Re-discretize a jittered time, forcing at least one grid step."""
    moved = min(max(seconds + jitter, 0.0),
                (codec_cfg.max_time_index + 0.5) * codec_cfg.delta_t)
    index = discretize_time(moved, codec_cfg)
    if index != clean_index:
        return index
    step = -1 if jitter < 0 else 1
    for candidate in (clean_index + step, clean_index - step):
        if 0 <= candidate <= codec_cfg.max_time_index:
            return candidate
    return clean_index
