import json
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, TextIO

from .exceptions import ParseError
from .ingest_io import WordTiming
from .perturbation import (
    PerturbationConfig,
    PerturbationRecord,
    derive_rng_stream,
    perturb_condition
)
from .timeline import Chunk, DiarSegment, TimeInterval
from .token_codec import (
    END_OF_AUDIO,
    MODES,
    START_OF_AUDIO,
    WITH_TIMESTAMPS,
    CodecConfig,
    SegmentCondition,
    SpeakerMap,
    build_condition,
    build_speaker_map,
    encode_target,
    render_prompt
)

logger = logging.getLogger(__name__)

AUDIO_PLACEHOLDER = START_OF_AUDIO + END_OF_AUDIO
DIALOGUE_KEYS = ("chunk_id", "recording_id", "chunk_index", "window", "mode",
                 "speaker_map", "turns")
TURN_KEYS = ("turn_index", "prompt", "target", "condition", "segment",
             "perturbation", "has_audio")


@dataclass(frozen=True)
class Turn:
    """
    One (prompt, target) pair of a dialogue.

    ``segment`` is the clean chunk-relative diarized segment the turn
    conditions on; ``condition`` is what the prompt shows (possibly
    perturbed).
    """

    turn_index: int
    condition: SegmentCondition
    segment: DiarSegment
    perturbation: PerturbationRecord
    prompt_text: str
    target_text: str
    has_audio: bool


@dataclass(frozen=True)
class Dialogue:
    """All turns of one chunk, in (segment start, local speaker) order."""

    chunk_id: str
    recording_id: str
    chunk_index: int
    window: TimeInterval
    speaker_map: SpeakerMap
    turns: tuple[Turn, ...]
    mode: str


@dataclass(frozen=True)
class LossMaskSpan:
    """Character offsets ``[begin_char, end_char)`` of one target region."""

    begin_char: int
    end_char: int


# Exported function definitions ------------------------------------------------


def build_dialogue(
        chunk: Chunk,
        transcripts: Sequence[Sequence[WordTiming] | Sequence[str]],
        mode: str,
        pert_cfg: PerturbationConfig | None = None,
        codec_cfg: CodecConfig | None = None
) -> Dialogue:
    """
    Build the multi-turn dialogue of one chunk.

    Parameters
    ----------
    chunk : Chunk
        Chunk with window-relative segments.

    transcripts : sequence
        One word list per chunk segment, aligned with ``chunk.segments``.
        Items are chunk-relative :class:`WordTiming` objects (required in
        timestamp mode) or plain words. Empty lists give empty targets.

    mode : str
        ``"plain"`` or ``"with_timestamps"``.

    pert_cfg : PerturbationConfig, optional
        Prompt-side label perturbation. Default: none (p = 0).

    codec_cfg : CodecConfig, optional
        Grid and vocabulary bounds.

    Returns
    -------
    Dialogue
        One turn per segment. Prompts carry the (possibly perturbed)
        conditions, targets the clean speaker and words.

    Raises
    ------
    ValueError
        If transcripts and segments disagree in number, the chunk has no
        segments, or the mode is unknown.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown dialogue mode {mode!r}; expected {MODES}.")
    codec_cfg = codec_cfg or CodecConfig()
    pert_cfg = pert_cfg or PerturbationConfig(p=0.0)

    if len(transcripts) != len(chunk.segments):
        missing = [
            f"{seg.speaker}@{seg.interval.start:.2f}"
            for seg in chunk.segments[len(transcripts):]
        ]
        raise ValueError(
            f"Chunk '{chunk.chunk_id}' has {len(chunk.segments)} segments but "
            f"{len(transcripts)} transcripts. Missing: {missing}"
        )
    if not chunk.segments:
        raise ValueError(f"Chunk '{chunk.chunk_id}' has no segments.")

    speaker_map = build_speaker_map(chunk, codec_cfg)
    order = sorted(
        range(len(chunk.segments)),
        key=lambda i: (chunk.segments[i].interval.start_cs,
                       speaker_map.forward[chunk.segments[i].speaker],
                       chunk.segments[i].interval.end_cs)
    )

    turns = []
    for turn_index, seg_index in enumerate(order):
        seg = chunk.segments[seg_index]
        local = speaker_map.forward[seg.speaker]
        clean = build_condition(local, seg.interval, codec_cfg)
        record = perturb_condition(
            clean,
            chunk_speakers=len(speaker_map),
            cfg=pert_cfg,
            rng_stream=derive_rng_stream(pert_cfg.seed, chunk.recording_id,
                                         chunk.chunk_index, turn_index),
            codec_cfg=codec_cfg,
            interval=seg.interval
        )
        prompt = render_prompt(record.perturbed,
                               with_timestamps=mode == WITH_TIMESTAMPS)
        if turn_index == 0:
            prompt = AUDIO_PLACEHOLDER + prompt
        target = encode_target(local, list(transcripts[seg_index]), mode,
                               codec_cfg)
        turns.append(Turn(
            turn_index=turn_index,
            condition=record.perturbed,
            segment=seg,
            perturbation=record,
            prompt_text=prompt,
            target_text=target,
            has_audio=turn_index == 0
        ))

    return Dialogue(
        chunk_id=chunk.chunk_id,
        recording_id=chunk.recording_id,
        chunk_index=chunk.chunk_index,
        window=chunk.window,
        speaker_map=speaker_map,
        turns=tuple(turns),
        mode=mode
    )


def concat_training_sequence(d: Dialogue) -> tuple[str, list[LossMaskSpan]]:
    """
    Concatenate prompts and targets into one teacher-forcing sequence.

    Returns
    -------
    tuple of (str, list of LossMaskSpan)
        The text and one span per turn marking its target, in turn order.
        Empty targets keep a zero-length span at their offset.
    """
    parts = []
    spans = []
    offset = 0
    for turn in d.turns:
        parts.append(turn.prompt_text)
        offset += len(turn.prompt_text)
        parts.append(turn.target_text)
        spans.append(LossMaskSpan(offset, offset + len(turn.target_text)))
        offset += len(turn.target_text)
    return "".join(parts), spans


def dialogue_to_dict(d: Dialogue) -> dict:
    return {
        "chunk_id": d.chunk_id,
        "recording_id": d.recording_id,
        "chunk_index": d.chunk_index,
        "window": {"start": d.window.start, "end": d.window.end},
        "mode": d.mode,
        "speaker_map": {
            d.speaker_map.reverse[i]: i for i in range(len(d.speaker_map))
        },
        "turns": [
            {
                "turn_index": turn.turn_index,
                "prompt": turn.prompt_text,
                "target": turn.target_text,
                "condition": turn.condition.to_dict(),
                "segment": {
                    "speaker": turn.segment.speaker,
                    "start": turn.segment.interval.start,
                    "end": turn.segment.interval.end,
                },
                "perturbation": turn.perturbation.to_dict(),
                "has_audio": turn.has_audio,
            }
            for turn in d.turns
        ],
    }


def write_dialogues(dialogues: Iterable[Dialogue], stream: TextIO) -> int:
    """
    Write dialogues as JSONL, one object per line, in the given order.

    Returns
    -------
    int
        Number of lines written.

    Raises
    ------
    ValueError
        If a dialogue has no turns.
    """
    count = 0
    for d in dialogues:
        if not d.turns:
            raise ValueError(
                f"Dialogue '{d.chunk_id}' has no turns; at least one is "
                f"required."
            )
        stream.write(json.dumps(dialogue_to_dict(d), ensure_ascii=False))
        stream.write("\n")
        count += 1
    return count


def read_dialogues(
        stream: TextIO | str,
        codec_cfg: CodecConfig | None = None,
        source_name: str | None = None
) -> list[Dialogue]:
    """
    Read and validate dialogue JSONL.

    Raises
    ------
    ParseError
        With the line number, on invalid JSON, missing keys or any violated
        dialogue/turn invariant.
    """
    codec_cfg = codec_cfg or CodecConfig()
    lines = stream.splitlines() if isinstance(stream, str) else stream
    dialogues = []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            dialogues.append(dialogue_from_dict(data, codec_cfg))
        except json.JSONDecodeError as e:
            raise ParseError(f"Invalid JSON: {e.msg}", line=line_number,
                             source=source_name) from None
        except (KeyError, TypeError, ValueError) as e:
            message = (f"missing key {e}" if isinstance(e, KeyError)
                       else str(e))
            raise ParseError(message, line=line_number,
                             source=source_name) from None
    return dialogues


def dialogue_from_dict(data: Mapping, codec_cfg: CodecConfig) -> Dialogue:
    if not isinstance(data, Mapping):
        raise ValueError("Dialogue line is not a JSON object.")
    for key in DIALOGUE_KEYS:
        if key not in data:
            raise KeyError(key)
    mode = data["mode"]
    if mode not in MODES:
        raise ValueError(f"Unknown mode {mode!r}.")

    raw_map = data["speaker_map"]
    if not isinstance(raw_map, Mapping) or not raw_map:
        raise ValueError("'speaker_map' must be a non-empty object.")
    labels = sorted(raw_map, key=lambda label: raw_map[label])
    speaker_map = SpeakerMap(
        forward={label: raw_map[label] for label in labels},
        reverse={raw_map[label]: label for label in labels}
    )

    window = TimeInterval.from_seconds(data["window"]["start"],
                                       data["window"]["end"])
    raw_turns = data["turns"]
    if not isinstance(raw_turns, list) or not raw_turns:
        raise ValueError("A dialogue needs at least one turn.")

    turns = []
    for position, raw in enumerate(raw_turns):
        for key in TURN_KEYS:
            if key not in raw:
                raise KeyError(f"turns[{position}].{key}")
        turns.append(_turn_from_dict(raw, position, speaker_map, window,
                                     codec_cfg))

    return Dialogue(
        chunk_id=str(data["chunk_id"]),
        recording_id=str(data["recording_id"]),
        chunk_index=int(data["chunk_index"]),
        window=window,
        speaker_map=speaker_map,
        turns=tuple(turns),
        mode=mode
    )


# Level 1 function definitions -------------------------------------------------


def _turn_from_dict(
        raw: Mapping,
        position: int,
        speaker_map: SpeakerMap,
        window: TimeInterval,
        codec_cfg: CodecConfig
) -> Turn:
    if raw["turn_index"] != position:
        raise ValueError(
            f"turns[{position}] has turn_index {raw['turn_index']}."
        )
    condition = SegmentCondition.from_dict(raw["condition"])
    condition.validate(codec_cfg)
    if condition.local_speaker >= len(speaker_map):
        raise ValueError(
            f"turns[{position}] conditions on speaker "
            f"{condition.local_speaker}, outside the speaker map."
        )
    perturbation = PerturbationRecord.from_dict(raw["perturbation"])
    if perturbation.perturbed != condition:
        raise ValueError(
            f"turns[{position}] condition differs from its perturbed record."
        )

    seg_raw = raw["segment"]
    segment = DiarSegment(
        speaker=str(seg_raw["speaker"]),
        interval=TimeInterval.from_seconds(seg_raw["start"], seg_raw["end"])
    )
    if segment.speaker not in speaker_map.forward:
        raise ValueError(
            f"turns[{position}] segment speaker '{segment.speaker}' is not "
            f"in the speaker map."
        )
    if segment.interval.end_cs > window.duration_cs:
        raise ValueError(f"turns[{position}] segment ends after the window.")

    has_audio = raw["has_audio"]
    if has_audio is not (position == 0):
        raise ValueError(
            f"turns[{position}] has_audio must be {position == 0}."
        )
    prompt = str(raw["prompt"])
    if position == 0 and not prompt.startswith(AUDIO_PLACEHOLDER):
        raise ValueError("Turn 0 prompt must open with the audio markers.")
    if position > 0 and (START_OF_AUDIO in prompt or END_OF_AUDIO in prompt):
        raise ValueError(
            f"turns[{position}] prompt must not carry audio markers."
        )

    return Turn(
        turn_index=position,
        condition=condition,
        segment=segment,
        perturbation=perturbation,
        prompt_text=prompt,
        target_text=str(raw["target"]),
        has_audio=has_audio
    )
