import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, TextIO

from .exceptions import ParseError
from .timeline import (
    DiarSegment,
    Recording,
    TimeInterval,
    format_centiseconds,
    to_centiseconds
)
from .words import join_words

logger = logging.getLogger(__name__)

SEGLST_REQUIRED_KEYS = ("session_id", "speaker", "start_time", "end_time",
                        "words")


@dataclass(frozen=True)
class WordTiming:
    """A word with its temporal boundary."""

    word: str
    interval: TimeInterval

    def __post_init__(self) -> None:
        if not self.word or any(ch.isspace() for ch in self.word):
            raise ValueError(
                f"WordTiming word must be non-empty without whitespace. "
                f"Got {self.word!r}."
            )


@dataclass(frozen=True)
class SegLstEntry:
    """
    One segment of a SegLST hypothesis or reference.

    ``word_timings`` is optional; when present its words must join to the
    same text as ``words``.
    """

    session_id: str
    speaker: str
    interval: TimeInterval
    words: str
    word_timings: tuple[WordTiming, ...] | None = None

    def __post_init__(self) -> None:
        if not self.session_id:
            raise ValueError("SegLST entry needs a non-empty session_id.")
        if not self.speaker:
            raise ValueError("SegLST entry needs a non-empty speaker.")
        if self.word_timings is not None:
            timed = join_words([w.word for w in self.word_timings])
            if timed != join_words(self.words.split()):
                raise ValueError(
                    f"word_timings {timed!r} do not match words "
                    f"{self.words!r}."
                )

    @property
    def start_time(self) -> float:
        return self.interval.start

    @property
    def end_time(self) -> float:
        return self.interval.end


# Exported function definitions ------------------------------------------------


def read_rttm(
        source: str | TextIO,
        durations: Mapping[str, float] | None = None,
        source_name: str | None = None
) -> dict[str, Recording]:
    """
    Parse RTTM speaker segments into recordings.

    Only ``SPEAKER`` lines are used; blank lines, lines starting with ``;;``
    and other record types are skipped. The channel field is ignored.

    Parameters
    ----------
    source : str or TextIO
        RTTM text or an open text stream.

    durations : Mapping[str, float], optional
        Recording durations in seconds. By default a recording lasts until
        its latest segment end.

    source_name : str, optional
        Name used in error messages.

    Returns
    -------
    dict[str, Recording]
        Recordings keyed by recording id.

    Raises
    ------
    ParseError
        If a SPEAKER line has too few fields, a non-numeric or negative
        time, or an empty speaker name.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue.ingest_io import read_rttm

        recordings = read_rttm(
            "SPEAKER m1 1 3.20 1.80 <NA> <NA> spk7 <NA> <NA>\\n"
        )
        recordings["m1"].segments[0]  # spk7 over [3.20, 5.00]
    """
    segments = defaultdict(list)
    for line_number, line in enumerate(_iter_lines(source), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(";;"):
            continue
        fields = stripped.split()
        if fields[0] != "SPEAKER":
            continue
        if len(fields) < 8:
            raise ParseError(
                f"SPEAKER line needs at least 8 fields, got {len(fields)}",
                line=line_number,
                source=source_name
            )
        recording_id, tbeg, tdur, speaker = (fields[1], fields[3], fields[4],
                                             fields[7])
        start_cs = _parse_time(tbeg, "tbeg", line_number, source_name)
        dur_cs = _parse_time(tdur, "tdur", line_number, source_name)
        if start_cs < 0:
            raise ParseError(
                f"tbeg must be non-negative, got {tbeg}",
                line=line_number,
                source=source_name
            )
        if dur_cs < 0:
            raise ParseError(
                f"tdur must be non-negative, got {tdur}",
                line=line_number,
                source=source_name
            )
        segments[recording_id].append(DiarSegment(
            speaker=speaker,
            interval=TimeInterval(start_cs, start_cs + dur_cs)
        ))

    durations = durations or {}
    recordings = {}
    for recording_id, segs in segments.items():
        duration_cs = max(s.interval.end_cs for s in segs)
        if recording_id in durations:
            duration_cs = max(duration_cs,
                              to_centiseconds(durations[recording_id]))
        recordings[recording_id] = Recording(recording_id, duration_cs,
                                             tuple(segs))
    for recording_id, duration in durations.items():
        if recording_id not in recordings:
            recordings[recording_id] = Recording(recording_id,
                                                 to_centiseconds(duration))
    return dict(sorted(recordings.items()))


def write_rttm(recordings: Mapping[str, Recording]) -> str:
    """
    Serialize recordings as RTTM.

    Recordings are written by id and segments by (start, end, speaker), with
    times printed to exactly two decimals and channel ``1``.
    """
    lines = []
    for recording_id in sorted(recordings):
        for seg in recordings[recording_id].segments:
            lines.append(
                f"SPEAKER {recording_id} 1 "
                f"{format_centiseconds(seg.interval.start_cs)} "
                f"{format_centiseconds(seg.interval.duration_cs)} "
                f"<NA> <NA> {seg.speaker} <NA> <NA>"
            )
    return "".join(line + "\n" for line in lines)


def read_seglst(
        source: str | TextIO,
        source_name: str | None = None
) -> list[SegLstEntry]:
    """
    Parse a SegLST JSON array.

    Parameters
    ----------
    source : str or TextIO
        JSON text or an open text stream.

    source_name : str, optional
        Name used in error messages.

    Returns
    -------
    list of SegLstEntry
        Entries in file order.

    Raises
    ------
    ParseError
        If the JSON is invalid, a required key is missing, or an entry
        violates its invariants. ``line`` holds the 0-based entry index.
    """
    text = source if isinstance(source, str) else source.read()
    try:
        data = json.loads(text) if text.strip() else []
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", line=e.lineno,
                         source=source_name) from None
    if not isinstance(data, list):
        raise ParseError("SegLST must be a JSON array", source=source_name)

    entries = []
    for index, item in enumerate(data):
        if not isinstance(item, dict):
            raise ParseError(f"Entry {index} is not an object", line=index,
                             source=source_name)
        for key in SEGLST_REQUIRED_KEYS:
            if key not in item:
                raise ParseError(f"Entry {index} is missing key '{key}'",
                                 line=index, source=source_name)
        try:
            entries.append(SegLstEntry(
                session_id=str(item["session_id"]),
                speaker=str(item["speaker"]),
                interval=TimeInterval.from_seconds(item["start_time"],
                                                   item["end_time"]),
                words=str(item["words"]),
                word_timings=_parse_word_timings(item.get("word_timings"))
            ))
        except (ValueError, TypeError) as e:
            raise ParseError(f"Entry {index}: {e}", line=index,
                             source=source_name) from None
    return entries


def write_seglst(entries: Iterable[SegLstEntry]) -> str:
    """
    Serialize SegLST entries as a JSON array.

    Entries are sorted by (session_id, start_time, speaker) and keys are
    emitted in a fixed order; ``word_timings`` only when present.
    """
    ordered = sorted(
        entries,
        key=lambda e: (e.session_id, e.interval.start_cs, e.speaker,
                       e.interval.end_cs)
    )
    data = []
    for entry in ordered:
        item = {
            "session_id": entry.session_id,
            "speaker": entry.speaker,
            "start_time": entry.interval.start,
            "end_time": entry.interval.end,
            "words": entry.words,
        }
        if entry.word_timings is not None:
            item["word_timings"] = [
                [w.word, w.interval.start, w.interval.end]
                for w in entry.word_timings
            ]
        data.append(item)
    return json.dumps(data, ensure_ascii=False, indent=2) + "\n"


def read_word_transcript(
        source: str | TextIO,
        source_name: str | None = None
) -> dict[tuple[str, str], list[WordTiming]]:
    """
    Parse CTM word alignments into per-speaker word lists.

    Lines have the form ``<file> <chan> <tbeg> <tdur> <word> [conf]
    [speaker]``. Without a speaker column the channel label is used as the
    speaker. Words are sorted by (start, end) per speaker; overlapping words
    are kept and reported as a warning.

    Returns
    -------
    dict[tuple[str, str], list of WordTiming]
        Keyed by (recording_id, speaker).

    Raises
    ------
    ParseError
        On a line with fewer than 5 fields or a malformed time.
    """
    words = defaultdict(list)
    for line_number, line in enumerate(_iter_lines(source), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(";;"):
            continue
        fields = stripped.split()
        if len(fields) < 5:
            raise ParseError(
                f"CTM line needs at least 5 fields, got {len(fields)}",
                line=line_number,
                source=source_name
            )
        recording_id, channel, tbeg, tdur, word = fields[:5]
        speaker = fields[6] if len(fields) >= 7 else channel
        start_cs = _parse_time(tbeg, "tbeg", line_number, source_name)
        dur_cs = _parse_time(tdur, "tdur", line_number, source_name)
        if start_cs < 0 or dur_cs < 0:
            raise ParseError(
                "word times must be non-negative",
                line=line_number,
                source=source_name
            )
        words[(recording_id, speaker)].append(WordTiming(
            word=word,
            interval=TimeInterval(start_cs, start_cs + dur_cs)
        ))

    result = {}
    for key in sorted(words):
        ordered = sorted(words[key],
                         key=lambda w: (w.interval.start_cs, w.interval.end_cs))
        overlaps = sum(
            1 for prev, cur in zip(ordered, ordered[1:])
            if cur.interval.start_cs < prev.interval.end_cs
        )
        if overlaps:
            logger.warning(
                f"{overlaps} overlapping words for speaker '{key[1]}' in "
                f"recording '{key[0]}'; kept as-is."
            )
        result[key] = ordered
    return result


def write_word_transcript(
        words: Mapping[tuple[str, str], list[WordTiming]]
) -> str:
    """Serialize per-speaker words as CTM, ordered by recording, start, speaker."""
    rows = []
    for (recording_id, speaker), timings in words.items():
        for w in timings:
            rows.append((recording_id, w.interval.start_cs, w.interval.end_cs,
                         speaker, w.word))
    rows.sort()
    return "".join(
        f"{recording_id} 1 {format_centiseconds(start)} "
        f"{format_centiseconds(end - start)} {word} 1.00 {speaker}\n"
        for recording_id, start, end, speaker, word in rows
    )


# Level 1 function definitions -------------------------------------------------


def _iter_lines(source: str | TextIO) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def _parse_time(
        value: str,
        name: str,
        line_number: int,
        source_name: str | None
) -> int:
    try:
        return to_centiseconds(value)
    except ValueError:
        raise ParseError(
            f"malformed {name} field {value!r}",
            line=line_number,
            source=source_name
        ) from None


def _parse_word_timings(raw) -> tuple[WordTiming, ...] | None:
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise ValueError("word_timings must be an array of [word, start, end]")
    timings = []
    for item in raw:
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise ValueError(
                f"word_timings item {item!r} is not [word, start, end]"
            )
        word, start, end = item
        timings.append(WordTiming(
            word=str(word),
            interval=TimeInterval.from_seconds(start, end)
        ))
    return tuple(timings)
