import logging
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from typing import Sequence

from .ingest_io import WordTiming
from .timeline import Chunk, TimeInterval, to_centiseconds
from .words import join_words, split_words

logger = logging.getLogger(__name__)

PLAIN = "plain"
WITH_TIMESTAMPS = "with_timestamps"
MODES = (PLAIN, WITH_TIMESTAMPS)

CONTROL_TOKENS = (
    "start_of_audio",
    "end_of_audio",
    "start_of_spk",
    "end_of_spk",
    "start_of_time",
    "end_of_time",
    "with_timestamps",
)

START_OF_AUDIO = "<|start_of_audio|>"
END_OF_AUDIO = "<|end_of_audio|>"
START_OF_SPK = "<|start_of_spk|>"
END_OF_SPK = "<|end_of_spk|>"
START_OF_TIME = "<|start_of_time|>"
END_OF_TIME = "<|end_of_time|>"
WITH_TIMESTAMPS_TOKEN = "<|with_timestamps|>"

PROMPT_TEMPLATE = (
    "Please transcribe the speech content of speaker "
    "{start_of_spk}{speaker}{end_of_spk} "
    "within the time segment "
    "{start_of_time}{start}{end}{end_of_time} "
    "into text."
)

SPECIAL_TOKEN_PATTERN = re.compile(r"<\|([a-z_]+?)(?:_(\d+))?\|>")
SPEAKER_PREFIX_PATTERN = re.compile(
    r"^\s*(?:<\|start_of_spk\|>)?\s*<\|spk_idx_(\d+)\|>\s*(?:<\|end_of_spk\|>)?"
)


@dataclass(frozen=True)
class CodecConfig:
    """
    Timestamp grid and vocabulary bounds.

    ``max_time_index`` defaults to ``ceil(25 / delta_t)`` for the 25 s
    maximum chunk.
    """

    delta_t: float = 0.1
    max_time_index: int = 250
    max_speakers: int = 16

    def __post_init__(self) -> None:
        if self.delta_t <= 0:
            raise ValueError(f"'delta_t' must be positive. Got {self.delta_t}.")
        if self.max_time_index < 1:
            raise ValueError(
                f"'max_time_index' must be at least 1. "
                f"Got {self.max_time_index}."
            )
        if self.max_speakers < 1:
            raise ValueError(
                f"'max_speakers' must be at least 1. Got {self.max_speakers}."
            )

    @classmethod
    def for_max_chunk(
            cls,
            max_chunk: float,
            delta_t: float = 0.1,
            max_speakers: int = 16
    ) -> "CodecConfig":
        if delta_t <= 0:
            raise ValueError(f"'delta_t' must be positive. Got {delta_t}.")
        steps = Decimal(repr(float(max_chunk))) / Decimal(repr(float(delta_t)))
        return cls(
            delta_t=delta_t,
            max_time_index=max(1, math.ceil(steps)),
            max_speakers=max_speakers
        )


@dataclass(frozen=True)
class SpecialToken:
    """
    One vocabulary token: ``kind`` is ``"speaker_index"``, ``"time_index"``
    or ``"control"``; ``value`` is the index or the control name.
    """

    kind: str
    value: int | str

    def __post_init__(self) -> None:
        if self.kind == "control":
            if self.value not in CONTROL_TOKENS:
                raise ValueError(f"Unknown control token {self.value!r}.")
        elif self.kind in ("speaker_index", "time_index"):
            if isinstance(self.value, bool) or not isinstance(
                    self.value, int) or self.value < 0:
                raise ValueError(
                    f"{self.kind} token needs a non-negative int. "
                    f"Got {self.value!r}."
                )
        else:
            raise ValueError(f"Unknown special token kind {self.kind!r}.")

    @property
    def surface(self) -> str:
        if self.kind == "speaker_index":
            return speaker_token(self.value)
        if self.kind == "time_index":
            return time_token(self.value)
        return f"<|{self.value}|>"

    @classmethod
    def parse(cls, surface: str) -> "SpecialToken":
        match = SPECIAL_TOKEN_PATTERN.fullmatch(surface)
        if match is None:
            raise ValueError(f"Not a special token: {surface!r}.")
        name, number = match.group(1), match.group(2)
        if name == "spk_idx" and number is not None:
            return cls("speaker_index", int(number))
        if name == "time_idx" and number is not None:
            return cls("time_index", int(number))
        return cls("control", name if number is None else surface[2:-2])

    def validate(self, cfg: CodecConfig) -> None:
        if self.kind == "speaker_index" and self.value >= cfg.max_speakers:
            raise ValueError(
                f"Speaker token {self.surface} exceeds max_speakers="
                f"{cfg.max_speakers}."
            )
        if self.kind == "time_index" and self.value > cfg.max_time_index:
            raise ValueError(
                f"Time token {self.surface} exceeds max_time_index="
                f"{cfg.max_time_index}."
            )


@dataclass(frozen=True)
class SpeakerMap:
    """Bijection between global speaker labels and chunk-local indices."""

    forward: dict[str, int]
    reverse: dict[int, str]

    def __post_init__(self) -> None:
        if sorted(self.reverse) != list(range(len(self.reverse))):
            raise ValueError(
                f"Local speaker indices must be 0..n-1. "
                f"Got {sorted(self.reverse)}."
            )
        if len(self.forward) != len(self.reverse) or any(
                self.reverse.get(index) != label
                for label, index in self.forward.items()):
            raise ValueError("Speaker map forward/reverse are not inverse.")

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "SpeakerMap":
        """Build the map from labels listed in local index order."""
        return cls(
            forward={label: index for index, label in enumerate(labels)},
            reverse=dict(enumerate(labels))
        )

    def __len__(self) -> int:
        return len(self.forward)


@dataclass(frozen=True)
class SegmentCondition:
    """The structured cue of one prompt: local speaker and time indices."""

    local_speaker: int
    start_idx: int
    end_idx: int

    def validate(self, cfg: CodecConfig) -> None:
        if not 0 <= self.local_speaker < cfg.max_speakers:
            raise ValueError(
                f"Speaker index {self.local_speaker} outside "
                f"[0, {cfg.max_speakers})."
            )
        if not 0 <= self.start_idx <= self.end_idx <= cfg.max_time_index:
            raise ValueError(
                f"Time indices must satisfy 0 <= start <= end <= "
                f"{cfg.max_time_index}. Got {self.start_idx}, {self.end_idx}."
            )

    def to_dict(self) -> dict:
        return {"spk": self.local_speaker, "start_idx": self.start_idx,
                "end_idx": self.end_idx}

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentCondition":
        return cls(
            local_speaker=_as_int(data["spk"], "spk"),
            start_idx=_as_int(data["start_idx"], "start_idx"),
            end_idx=_as_int(data["end_idx"], "end_idx")
        )


@dataclass(frozen=True)
class ParseQuality:
    dropped_tokens: int = 0
    speaker_fallback: bool = False
    split_words: int = 0


@dataclass(frozen=True)
class DecodedResponse:
    """
    A model response parsed back into speaker, words and optional times.

    ``word_timings`` and ``revised_times`` are chunk-relative and only set
    for timestamped responses with at least one complete word.
    """

    speaker: int
    words: tuple[str, ...]
    word_timings: tuple[WordTiming, ...] | None = None
    revised_times: TimeInterval | None = None
    quality: ParseQuality = field(default_factory=ParseQuality)


# Exported function definitions ------------------------------------------------


def speaker_token(index: int) -> str:
    return f"<|spk_idx_{index}|>"


def time_token(index: int) -> str:
    return f"<|time_idx_{index}|>"


def discretize_time(t: float, cfg: CodecConfig) -> int:
    """
    Map seconds onto the timestamp grid: ``round(t / delta_t)``.

    Ties round half away from zero and the result is clamped to
    ``[0, max_time_index]``. The input is first snapped to microseconds so
    that binary float noise cannot flip a tie.

    Raises
    ------
    ValueError
        If ``t`` is negative.
    """
    if t < 0:
        raise ValueError(f"Cannot discretize negative time {t}.")
    seconds = Decimal(repr(float(t))).quantize(Decimal("0.000001"),
                                               rounding=ROUND_HALF_UP)
    steps = seconds / Decimal(repr(float(cfg.delta_t)))
    index = int(steps.quantize(Decimal(1), rounding=ROUND_HALF_UP))
    return min(index, cfg.max_time_index)


def undiscretize_time(u: int, cfg: CodecConfig) -> float:
    """Seconds at grid index ``u``; raises ValueError outside the grid."""
    if not 0 <= u <= cfg.max_time_index:
        raise ValueError(
            f"Time index {u} outside [0, {cfg.max_time_index}]."
        )
    return float(Decimal(u) * Decimal(repr(float(cfg.delta_t))))


def build_speaker_map(chunk: Chunk, cfg: CodecConfig | None = None) -> SpeakerMap:
    """
    Number the speakers of a chunk by order of first appearance.

    Speakers whose first segments start at the same instant are ordered by
    label.

    Raises
    ------
    ValueError
        If the chunk has more speakers than ``cfg.max_speakers``.
    """
    cfg = cfg or CodecConfig()
    first_start = {}
    for seg in chunk.segments:
        start = seg.interval.start_cs
        if seg.speaker not in first_start or start < first_start[seg.speaker]:
            first_start[seg.speaker] = start
    labels = sorted(first_start, key=lambda label: (first_start[label], label))
    if len(labels) > cfg.max_speakers:
        raise ValueError(
            f"Chunk '{chunk.chunk_id}' has {len(labels)} speakers, more than "
            f"max_speakers={cfg.max_speakers}."
        )
    return SpeakerMap.from_labels(labels)


def build_condition(
        local_speaker: int,
        interval: TimeInterval,
        cfg: CodecConfig
) -> SegmentCondition:
    """Discretize a chunk-relative segment into a prompt condition."""
    return SegmentCondition(
        local_speaker=local_speaker,
        start_idx=discretize_time(interval.start, cfg),
        end_idx=discretize_time(interval.end, cfg)
    )


def render_prompt(cond: SegmentCondition, with_timestamps: bool = False) -> str:
    """
    Render the transcription prompt for one segment condition.

    Examples
    --------
    .. code-block:: python

        render_prompt(SegmentCondition(0, 12, 48))
        # 'Please transcribe the speech content of speaker
        #  <|start_of_spk|><|spk_idx_0|><|end_of_spk|> within the time segment
        #  <|start_of_time|><|time_idx_12|><|time_idx_48|><|end_of_time|>
        #  into text.'
    """
    prompt = PROMPT_TEMPLATE.format(
        start_of_spk=START_OF_SPK,
        speaker=speaker_token(cond.local_speaker),
        end_of_spk=END_OF_SPK,
        start_of_time=START_OF_TIME,
        start=time_token(cond.start_idx),
        end=time_token(cond.end_idx),
        end_of_time=END_OF_TIME
    )
    if with_timestamps:
        prompt += WITH_TIMESTAMPS_TOKEN
    return prompt


def encode_target(
        leading_speaker: int,
        words: Sequence[WordTiming] | Sequence[str],
        mode: str,
        cfg: CodecConfig
) -> str:
    """
    Encode a response target with its leading speaker token.

    In plain mode the words follow the speaker prefix, joined by
    :func:`join_words`. In timestamp mode the words interleave with
    ``n + 1`` time tokens: the start of every word, then the end of the last
    word. An empty word list yields the speaker prefix alone.

    Parameters
    ----------
    leading_speaker : int
        Local speaker index.

    words : sequence of WordTiming or str
        Chunk-relative word timings; plain strings are accepted in plain
        mode.

    mode : str
        ``"plain"`` or ``"with_timestamps"``.

    cfg : CodecConfig
        Grid configuration.

    Returns
    -------
    str
        The target token text.

    Raises
    ------
    ValueError
        If the mode is unknown, timestamp mode lacks timings, or word starts
        are not in temporal order.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown target mode {mode!r}; expected {MODES}.")
    prefix = START_OF_SPK + speaker_token(leading_speaker) + END_OF_SPK
    if mode == PLAIN:
        texts = [w.word if isinstance(w, WordTiming) else w for w in words]
        return prefix + join_words(texts)

    if not words:
        return prefix
    if not all(isinstance(w, WordTiming) for w in words):
        raise ValueError("Timestamp mode needs WordTiming items for all words.")
    for prev, cur in zip(words, words[1:]):
        if cur.interval.start_cs < prev.interval.start_cs:
            raise ValueError(
                f"Word '{cur.word}' starts before the preceding word "
                f"'{prev.word}'."
            )
    indices = [discretize_time(w.interval.start, cfg) for w in words]
    indices.append(max(indices[-1],
                       discretize_time(words[-1].interval.end, cfg)))
    parts = [prefix]
    for index, w in zip(indices, words):
        parts.append(time_token(index))
        parts.append(w.word)
    parts.append(time_token(indices[-1]))
    return "".join(parts)


def decode_response(
        text: str,
        expected: SegmentCondition,
        cfg: CodecConfig,
        mode: str | None = None
) -> DecodedResponse:
    """
    Parse a model response back into speaker, words and times.

    A leading speaker token wins over the prompt cue; without one the
    expected speaker is used and flagged. In timestamp mode word ``j`` spans
    ``[tau_j, tau_(j+1)]``. Stray special tokens, words without a closing
    time token and time tokens off the grid are dropped and counted in the
    returned quality record. Nothing here raises on bad model output.

    Parameters
    ----------
    text : str
        Raw response text.

    expected : SegmentCondition
        Condition of the prompt that produced the response.

    cfg : CodecConfig
        Grid configuration.

    mode : str, optional
        Force ``"plain"`` or ``"with_timestamps"``. By default the mode is
        timestamped when the body holds any time token.
    """
    match = SPEAKER_PREFIX_PATTERN.match(text)
    if match:
        speaker = int(match.group(1))
        body = text[match.end():]
        speaker_fallback = False
    else:
        speaker = expected.local_speaker
        body = text
        speaker_fallback = True

    pieces = _split_special_tokens(body)
    if mode is None:
        mode = WITH_TIMESTAMPS if any(
            kind == "time_idx" for kind, _ in pieces) else PLAIN

    if mode == PLAIN:
        dropped = sum(1 for kind, _ in pieces if kind is not None)
        words = split_words(" ".join(
            value for kind, value in pieces if kind is None))
        quality = ParseQuality(dropped_tokens=dropped,
                               speaker_fallback=speaker_fallback)
        return DecodedResponse(speaker=speaker, words=tuple(words),
                               quality=quality)

    timings, dropped, split = _decode_timed(pieces, cfg)
    quality = ParseQuality(dropped_tokens=dropped,
                           speaker_fallback=speaker_fallback,
                           split_words=split)
    if dropped:
        logger.debug(f"Dropped {dropped} malformed tokens from a response.")
    revised = None
    if timings:
        revised = TimeInterval(timings[0].interval.start_cs,
                               timings[-1].interval.end_cs)
    return DecodedResponse(
        speaker=speaker,
        words=tuple(w.word for w in timings),
        word_timings=tuple(timings) if timings else None,
        revised_times=revised,
        quality=quality
    )


# Level 1 function definitions -------------------------------------------------


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"'{name}' must be an integer. Got {value!r}.")
    return value


def _split_special_tokens(body: str) -> list[tuple[str | None, str]]:
    """
    Split text into ``(kind, value)`` pieces: special tokens as
    ``("time_idx", "12")`` / ``("spk_idx", "1")`` / ``(name, "")`` and plain
    text as ``(None, text)``.
    """
    pieces = []
    position = 0
    for match in SPECIAL_TOKEN_PATTERN.finditer(body):
        if match.start() > position:
            pieces.append((None, body[position:match.start()]))
        name, number = match.group(1), match.group(2)
        pieces.append((name, number or ""))
        position = match.end()
    if position < len(body):
        pieces.append((None, body[position:]))
    return [(kind, value) for kind, value in pieces
            if kind is not None or value.strip()]


def _decode_timed(
        pieces: list[tuple[str | None, str]],
        cfg: CodecConfig
) -> tuple[list[WordTiming], int, int]:
    timings = []
    dropped = 0
    split = 0
    boundary = None
    pending = None
    for kind, value in pieces:
        if kind == "time_idx":
            index = int(value)
            if index > cfg.max_time_index:
                dropped += 1
                continue
            if boundary is not None and index < boundary:
                index = boundary
            if pending is not None:
                words = split_words(pending)
                start_cs = to_centiseconds(undiscretize_time(boundary, cfg))
                end_cs = to_centiseconds(undiscretize_time(index, cfg))
                timings.extend(_subdivide(words, start_cs, end_cs))
                if len(words) > 1:
                    split += 1
                pending = None
            elif boundary is not None:
                # two time tokens in a row: the later one opens the next word
                dropped += 1
            boundary = index
        elif kind is None:
            if boundary is None or pending is not None:
                dropped += 1
                continue
            pending = value.strip()
        else:
            dropped += 1
    if pending is not None:
        dropped += 1
    return timings, dropped, split


def _subdivide(words: list[str], start_cs: int, end_cs: int) -> list[WordTiming]:
    if len(words) == 1:
        return [WordTiming(words[0], TimeInterval(start_cs, end_cs))]
    step = (end_cs - start_cs) / len(words)
    bounds = [start_cs + round(step * i) for i in range(len(words))] + [end_cs]
    return [
        WordTiming(word, TimeInterval(bounds[i], bounds[i + 1]))
        for i, word in enumerate(words)
    ]
