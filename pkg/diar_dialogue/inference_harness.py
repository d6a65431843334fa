import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .dialogue_builder import Dialogue
from .exceptions import BackendError
from .ingest_io import SegLstEntry, WordTiming
from .perturbation import derive_rng_stream
from .timeline import TimeInterval, to_centiseconds
from .token_codec import (
    PLAIN,
    WITH_TIMESTAMPS,
    CodecConfig,
    SegmentCondition,
    decode_response,
    discretize_time,
    encode_target,
    undiscretize_time
)
from .words import is_cjk, join_words

logger = logging.getLogger(__name__)

DIARIZATION = "diarization"
MODEL = "model"
SOURCE_ALIASES = {"dia": DIARIZATION, "llm": MODEL}

OK = "ok"
FAILED = "failed"


@dataclass(frozen=True)
class BackendCapabilities:
    supports_context_reuse: bool = True
    supports_timestamps: bool = True


class BackendSession(Protocol):
    """
    One decoding session: exactly one :meth:`open_audio`, then any number of
    :meth:`turn` calls, then :meth:`close`.
    """

    capabilities: BackendCapabilities

    def open_audio(self, chunk_id: str, audio_ref: dict) -> None:
        ...

    def turn(self, prompt: str) -> str:
        """Return the raw response; raise BackendError on transport failure."""
        ...

    def close(self) -> None:
        ...


class RecognizerBackend(Protocol):
    def new_session(self) -> BackendSession:
        ...


@dataclass(frozen=True)
class EvalSetup:
    """Where final speakers and times come from: the diarization or the model."""

    speaker_source: str
    time_source: str

    def __post_init__(self) -> None:
        for name, value in (("speaker_source", self.speaker_source),
                            ("time_source", self.time_source)):
            if value not in (DIARIZATION, MODEL):
                raise ValueError(
                    f"'{name}' must be '{DIARIZATION}' or '{MODEL}'. "
                    f"Got {value!r}."
                )

    @classmethod
    def parse(cls, text: str) -> "EvalSetup":
        """Parse ``"dia-spk,llm-time"`` style setup names."""
        parts = [part.strip() for part in text.split(",")]
        sources = {}
        for part in parts:
            prefix, _, field_name = part.partition("-")
            if prefix not in SOURCE_ALIASES or field_name not in (
                    "spk", "time") or field_name in sources:
                raise ValueError(
                    f"Invalid setup {text!r}; expected e.g. 'dia-spk,llm-time'."
                )
            sources[field_name] = SOURCE_ALIASES[prefix]
        if set(sources) != {"spk", "time"}:
            raise ValueError(
                f"Invalid setup {text!r}; name both a speaker and a time source."
            )
        return cls(speaker_source=sources["spk"], time_source=sources["time"])

    @property
    def name(self) -> str:
        spk = "dia" if self.speaker_source == DIARIZATION else "llm"
        time = "dia" if self.time_source == DIARIZATION else "llm"
        return f"{spk}-spk,{time}-time"


ALL_SETUPS = tuple(
    EvalSetup(speaker, time)
    for speaker in (DIARIZATION, MODEL)
    for time in (DIARIZATION, MODEL)
)


@dataclass(frozen=True)
class MockOracleConfig:
    """Corruption rates of the mock oracle backend."""

    word_sub_rate: float = 0.0
    word_del_rate: float = 0.0
    word_ins_rate: float = 0.0
    speaker_flip_rate: float = 0.0
    time_jitter_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("word_sub_rate", "word_del_rate", "word_ins_rate",
                     "speaker_flip_rate"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"'{name}' must lie in [0, 1]. Got {value}.")
        if self.time_jitter_sd < 0:
            raise ValueError(
                f"'time_jitter_sd' must be non-negative. "
                f"Got {self.time_jitter_sd}."
            )

    @property
    def is_noiseless(self) -> bool:
        return not any((self.word_sub_rate, self.word_del_rate,
                        self.word_ins_rate, self.speaker_flip_rate,
                        self.time_jitter_sd))


@dataclass(frozen=True)
class TurnResponse:
    turn_index: int
    text: str
    status: str = OK
    diagnostic: str | None = None


@dataclass(frozen=True)
class TurnDiagnostic:
    chunk_id: str
    turn_index: int
    status: str
    speaker_fallback: bool
    time_fallback: bool
    dropped_tokens: int
    diagnostic: str | None = None


@dataclass(frozen=True)
class ComposedHypothesis:
    entries: list[SegLstEntry]
    diagnostics: list[TurnDiagnostic]


# Exported function definitions ------------------------------------------------


def run_dialogue(d: Dialogue, backend: RecognizerBackend) -> list[TurnResponse]:
    """
    Decode one dialogue turn by turn on a fresh backend session.

    Turn 0 follows the audio reference; later turns send only their prompt.
    Backends without context reuse receive the transcript so far as a prefix.
    A failing turn yields an empty response marked ``"failed"`` and the
    dialogue continues.

    Parameters
    ----------
    d : Dialogue
        The dialogue to decode.

    backend : RecognizerBackend
        Backend providing sessions.

    Returns
    -------
    list of TurnResponse
        One response per turn, in turn order.
    """
    audio_ref = {
        "recording_id": d.recording_id,
        "start_s": d.window.start,
        "end_s": d.window.end,
    }
    session = backend.new_session()
    try:
        session.open_audio(d.chunk_id, audio_ref)
    except BackendError as e:
        logger.warning(f"Could not open audio for '{d.chunk_id}': {e}")
        _close_quietly(session, d.chunk_id)
        return [
            TurnResponse(turn.turn_index, "", FAILED, f"open_audio: {e}")
            for turn in d.turns
        ]

    reuse = session.capabilities.supports_context_reuse
    history = ""
    responses = []
    for turn in d.turns:
        prompt = turn.prompt_text if reuse else history + turn.prompt_text
        try:
            text = session.turn(prompt)
            responses.append(TurnResponse(turn.turn_index, text))
        except BackendError as e:
            logger.warning(
                f"Turn {turn.turn_index} of '{d.chunk_id}' failed: {e}"
            )
            text = ""
            responses.append(TurnResponse(turn.turn_index, "", FAILED, str(e)))
        history += turn.prompt_text + text
    _close_quietly(session, d.chunk_id)
    return responses


def compose_hypothesis(
        d: Dialogue,
        responses: Sequence[TurnResponse],
        setup: EvalSetup,
        codec_cfg: CodecConfig | None = None
) -> ComposedHypothesis:
    """
    Turn decoded responses into absolute-time SegLST entries.

    Speakers come from the diarized segment or from the response's leading
    speaker token; times from the diarized segment or from the first/last
    time token of the response, keeping per-word timings. Text always comes
    from the response. A model-side value that cannot be parsed falls back
    to the diarization value and is flagged in the diagnostics.

    Parameters
    ----------
    d : Dialogue
        Dialogue the responses belong to.

    responses : sequence of TurnResponse
        One response per turn.

    setup : EvalSetup
        Speaker and time sources.

    codec_cfg : CodecConfig, optional
        Grid configuration.

    Returns
    -------
    ComposedHypothesis
        Entries in turn order and one diagnostic per turn.

    Raises
    ------
    ValueError
        If the number of responses differs from the number of turns.
    """
    codec_cfg = codec_cfg or CodecConfig()
    if len(responses) != len(d.turns):
        raise ValueError(
            f"Dialogue '{d.chunk_id}' has {len(d.turns)} turns but "
            f"{len(responses)} responses."
        )

    offset = d.window.start_cs
    entries = []
    diagnostics = []
    for turn, response in zip(d.turns, responses):
        decoded = decode_response(response.text, turn.condition, codec_cfg,
                                  mode=d.mode)

        speaker = turn.segment.speaker
        speaker_fallback = False
        if setup.speaker_source == MODEL:
            label = d.speaker_map.reverse.get(decoded.speaker)
            if decoded.quality.speaker_fallback or label is None:
                speaker_fallback = True
            else:
                speaker = label

        interval = turn.segment.interval.shift(offset)
        word_timings = None
        time_fallback = False
        if setup.time_source == MODEL:
            if decoded.revised_times is None:
                time_fallback = True
            else:
                interval = decoded.revised_times.shift(offset)
                word_timings = tuple(
                    WordTiming(w.word, w.interval.shift(offset))
                    for w in decoded.word_timings
                )

        if speaker_fallback or time_fallback:
            logger.debug(
                f"Fallback in '{d.chunk_id}' turn {turn.turn_index}: "
                f"speaker={speaker_fallback} time={time_fallback}"
            )
        entries.append(SegLstEntry(
            session_id=d.recording_id,
            speaker=speaker,
            interval=interval,
            words=join_words(decoded.words),
            word_timings=word_timings
        ))
        diagnostics.append(TurnDiagnostic(
            chunk_id=d.chunk_id,
            turn_index=turn.turn_index,
            status=response.status,
            speaker_fallback=speaker_fallback,
            time_fallback=time_fallback,
            dropped_tokens=decoded.quality.dropped_tokens,
            diagnostic=response.diagnostic
        ))
    return ComposedHypothesis(entries=entries, diagnostics=diagnostics)


def references_from_dialogues(
        dialogues: Iterable[Dialogue]
) -> tuple[dict[tuple[str, int], str], dict[str, int]]:
    """
    Clean targets keyed by (chunk_id, turn_index), plus speakers per chunk.
    """
    references = {}
    speakers = {}
    for d in dialogues:
        speakers[d.chunk_id] = len(d.speaker_map)
        for turn in d.turns:
            references[(d.chunk_id, turn.turn_index)] = turn.target_text
    return references, speakers


def mock_oracle_backend(
        references: Mapping[tuple[str, int], str],
        cfg: MockOracleConfig | None = None,
        chunk_speakers: Mapping[str, int] | None = None,
        codec_cfg: CodecConfig | None = None,
        supports_context_reuse: bool = True
) -> "MockOracleBackend":
    """
    Backend that answers every turn with its clean target, corrupted.

    Words are independently deleted, substituted or followed by an inserted
    filler; the leading speaker token flips to another in-chunk speaker; and
    time tokens receive Gaussian jitter re-discretized to the grid. All
    randomness derives from ``cfg.seed``, the chunk id and the turn index.

    Parameters
    ----------
    references : Mapping[tuple[str, int], str]
        Clean target text per (chunk_id, turn_index).

    cfg : MockOracleConfig, optional
        Corruption rates. Default: noiseless.

    chunk_speakers : Mapping[str, int], optional
        Speakers per chunk, the pool for speaker flips.

    codec_cfg : CodecConfig, optional
        Grid configuration.

    supports_context_reuse : bool, optional
        Capability reported by the sessions. Default True.

    Examples
    --------
    .. code-block:: python

        references, speakers = references_from_dialogues(dialogues)
        backend = mock_oracle_backend(
            references,
            MockOracleConfig(word_sub_rate=0.1, seed=3),
            chunk_speakers=speakers
        )
        responses = run_dialogue(dialogues[0], backend)
    """
    return MockOracleBackend(
        references=dict(references),
        cfg=cfg or MockOracleConfig(),
        chunk_speakers=dict(chunk_speakers or {}),
        codec_cfg=codec_cfg or CodecConfig(),
        capabilities=BackendCapabilities(
            supports_context_reuse=supports_context_reuse
        )
    )


class MockOracleBackend:
    """Deterministic corruptible oracle; see :func:`mock_oracle_backend`."""

    def __init__(
            self,
            references: dict[tuple[str, int], str],
            cfg: MockOracleConfig,
            chunk_speakers: dict[str, int],
            codec_cfg: CodecConfig,
            capabilities: BackendCapabilities
    ) -> None:
        self.references = references
        self.cfg = cfg
        self.chunk_speakers = chunk_speakers
        self.codec_cfg = codec_cfg
        self.capabilities = capabilities

    def new_session(self) -> "_MockSession":
        return _MockSession(self)

    def respond(self, chunk_id: str, turn_index: int) -> str:
        key = (chunk_id, turn_index)
        if key not in self.references:
            raise ValueError(
                f"Mock oracle has no reference for chunk '{chunk_id}' "
                f"turn {turn_index}."
            )
        target = self.references[key]
        if self.cfg.is_noiseless:
            return target
        rng = derive_rng_stream(self.cfg.seed, chunk_id, 0, turn_index)
        return corrupt_target(
            target,
            self.cfg,
            rng,
            self.chunk_speakers.get(chunk_id, 1),
            self.codec_cfg
        )


class _MockSession:
    def __init__(self, backend: MockOracleBackend) -> None:
        self.backend = backend
        self.capabilities = backend.capabilities
        self.chunk_id = None
        self.turns = 0
        self.closed = False

    def open_audio(self, chunk_id: str, audio_ref: dict) -> None:
        if self.chunk_id is not None:
            raise BackendError("open_audio called twice on one session.")
        self.chunk_id = chunk_id

    def turn(self, prompt: str) -> str:
        if self.chunk_id is None or self.closed:
            raise BackendError("turn called outside an open session.")
        text = self.backend.respond(self.chunk_id, self.turns)
        self.turns += 1
        return text

    def close(self) -> None:
        self.closed = True


def corrupt_target(
        target: str,
        cfg: MockOracleConfig,
        rng: np.random.Generator,
        chunk_speakers: int,
        codec_cfg: CodecConfig
) -> str:
    """Apply mock-oracle noise to one clean target text."""
    decoded = decode_response(target, SegmentCondition(0, 0, 0), codec_cfg)
    timed = decoded.word_timings is not None

    speaker = decoded.speaker
    flip_draw = rng.random()
    flip_offset = int(rng.integers(1, max(chunk_speakers, 2)))
    if chunk_speakers > 1 and flip_draw < cfg.speaker_flip_rate:
        speaker = (speaker + flip_offset) % chunk_speakers

    items = list(decoded.word_timings) if timed else list(decoded.words)
    corrupted = []
    for item in items:
        word = item.word if timed else item
        draws = rng.random(3)
        if draws[0] < cfg.word_del_rate:
            continue
        if draws[1] < cfg.word_sub_rate:
            word = _substitute(word)
        corrupted.append(WordTiming(word, item.interval) if timed else word)
        if draws[2] < cfg.word_ins_rate:
            filler = "嗯" if is_cjk(word[-1]) else "uh"
            if timed:
                end = item.interval.end_cs
                corrupted.append(WordTiming(filler, TimeInterval(end, end)))
            else:
                corrupted.append(filler)

    if not timed:
        return encode_target(speaker, corrupted, PLAIN, codec_cfg)
    if cfg.time_jitter_sd > 0 and corrupted:
        corrupted = _jitter_words(corrupted, cfg.time_jitter_sd, rng,
                                  codec_cfg)
    return encode_target(speaker, corrupted, WITH_TIMESTAMPS, codec_cfg)


# Level 1 function definitions -------------------------------------------------


def _close_quietly(session: BackendSession, chunk_id: str) -> None:
    try:
        session.close()
    except BackendError as e:
        logger.warning(f"Closing the session of '{chunk_id}' failed: {e}")


def _substitute(word: str) -> str:
    if all(is_cjk(char) for char in word):
        return "".join("杂" if char == "噪" else "噪" for char in word)
    return word + "x"


def _jitter_words(
        words: list[WordTiming],
        sd: float,
        rng: np.random.Generator,
        codec_cfg: CodecConfig
) -> list[WordTiming]:
    """Jitter the n + 1 boundaries and snap them back onto the grid."""
    bounds = [w.interval.start for w in words] + [words[-1].interval.end]
    noise = rng.normal(0.0, sd, size=len(bounds))
    limit = codec_cfg.max_time_index * codec_cfg.delta_t
    indices = [
        discretize_time(min(max(b + n, 0.0), limit), codec_cfg)
        for b, n in zip(bounds, noise)
    ]
    indices = list(np.maximum.accumulate(indices))
    cs = [to_centiseconds(undiscretize_time(int(i), codec_cfg))
          for i in indices]
    return [
        WordTiming(w.word, TimeInterval(cs[j], cs[j + 1]))
        for j, w in enumerate(words)
    ]
