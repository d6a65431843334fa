import logging
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP, InvalidOperation

logger = logging.getLogger(__name__)

CENTIS_PER_SECOND = 100
DEFAULT_MIN_CLIP_DURATION = 0.05


def to_centiseconds(value: float | str | Decimal) -> int:
    """
    Convert seconds to integer hundredths of a second, rounding half up.

    Parameters
    ----------
    value : float, str or Decimal
        Time in seconds. Strings are parsed as decimals, so ``"3.20"`` is
        exact.

    Returns
    -------
    int
        The time in centiseconds.

    Raises
    ------
    ValueError
        If the value is not a finite number.
    """
    try:
        if isinstance(value, Decimal):
            seconds = value
        elif isinstance(value, str):
            seconds = Decimal(value.strip())
        else:
            seconds = Decimal(repr(float(value)))
        centis = (seconds * CENTIS_PER_SECOND).quantize(
            Decimal(1),
            rounding=ROUND_HALF_UP
        )
    except (InvalidOperation, ValueError, TypeError):
        raise ValueError(f"Not a valid time in seconds: {value!r}") from None
    if not centis.is_finite():
        raise ValueError(f"Not a finite time in seconds: {value!r}")
    return int(centis)


def format_centiseconds(centis: int) -> str:
    """Render centiseconds as seconds with exactly two decimals."""
    sign = "-" if centis < 0 else ""
    centis = abs(centis)
    return f"{sign}{centis // CENTIS_PER_SECOND}.{centis % CENTIS_PER_SECOND:02d}"


@dataclass(frozen=True, order=True)
class TimeInterval:
    """
    A closed time interval stored as integer centiseconds.

    Use :meth:`from_seconds` to build one from seconds; ``start`` and ``end``
    read back as float seconds.
    """

    start_cs: int
    end_cs: int

    def __post_init__(self) -> None:
        if not isinstance(self.start_cs, int) or not isinstance(
                self.end_cs, int):
            raise TypeError(
                f"TimeInterval bounds must be int centiseconds. "
                f"Got {type(self.start_cs).__name__}, "
                f"{type(self.end_cs).__name__}."
            )
        if self.start_cs < 0:
            raise ValueError(
                f"TimeInterval start must be non-negative. "
                f"Got {format_centiseconds(self.start_cs)} s."
            )
        if self.start_cs > self.end_cs:
            raise ValueError(
                f"TimeInterval start {format_centiseconds(self.start_cs)} s "
                f"is after end {format_centiseconds(self.end_cs)} s."
            )

    @classmethod
    def from_seconds(
            cls,
            start: float | str,
            end: float | str
    ) -> "TimeInterval":
        return cls(to_centiseconds(start), to_centiseconds(end))

    @property
    def start(self) -> float:
        return self.start_cs / CENTIS_PER_SECOND

    @property
    def end(self) -> float:
        return self.end_cs / CENTIS_PER_SECOND

    @property
    def duration_cs(self) -> int:
        return self.end_cs - self.start_cs

    @property
    def duration(self) -> float:
        return self.duration_cs / CENTIS_PER_SECOND

    def shift(self, offset_cs: int) -> "TimeInterval":
        return TimeInterval(self.start_cs + offset_cs, self.end_cs + offset_cs)


@dataclass(frozen=True)
class DiarSegment:
    """One diarization label: a speaker active over an interval."""

    speaker: str
    interval: TimeInterval

    def __post_init__(self) -> None:
        if not isinstance(self.speaker, str) or not self.speaker:
            raise ValueError(
                f"DiarSegment speaker must be a non-empty string. "
                f"Got {self.speaker!r}."
            )

    @property
    def sort_key(self) -> tuple[int, int, str]:
        return self.interval.start_cs, self.interval.end_cs, self.speaker


@dataclass(frozen=True)
class Recording:
    """
    A recording timeline with its diarization segments.

    Segments are sorted by (start, end, speaker) on construction and must lie
    within ``[0, duration]``.
    """

    recording_id: str
    duration_cs: int
    segments: tuple[DiarSegment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.recording_id:
            raise ValueError("Recording id must be a non-empty string.")
        if self.duration_cs < 0:
            raise ValueError(
                f"Recording '{self.recording_id}' has a negative duration."
            )
        ordered = tuple(sorted(self.segments, key=lambda s: s.sort_key))
        for segment in ordered:
            if segment.interval.end_cs > self.duration_cs:
                raise ValueError(
                    f"Segment {segment.speaker} "
                    f"[{segment.interval.start}, {segment.interval.end}] "
                    f"exceeds duration of recording '{self.recording_id}' "
                    f"({format_centiseconds(self.duration_cs)} s)."
                )
        object.__setattr__(self, "segments", ordered)

    @property
    def duration(self) -> float:
        return self.duration_cs / CENTIS_PER_SECOND

    @property
    def speakers(self) -> list[str]:
        return sorted({segment.speaker for segment in self.segments})


@dataclass(frozen=True)
class Chunk:
    """
    A window of a recording with its segments re-based to window time.

    ``window`` is absolute; every entry of ``segments`` is relative to
    ``window.start_cs``.
    """

    chunk_id: str
    recording_id: str
    chunk_index: int
    window: TimeInterval
    segments: tuple[DiarSegment, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.window.duration_cs <= 0:
            raise ValueError(f"Chunk '{self.chunk_id}' has an empty window.")
        ordered = tuple(sorted(self.segments, key=lambda s: s.sort_key))
        for segment in ordered:
            if segment.interval.end_cs > self.window.duration_cs:
                raise ValueError(
                    f"Segment {segment.speaker} ends after the window of "
                    f"chunk '{self.chunk_id}'."
                )
        object.__setattr__(self, "segments", ordered)

    @property
    def speakers(self) -> list[str]:
        return sorted({segment.speaker for segment in self.segments})


# Exported function definitions ------------------------------------------------


def overlap_duration(a: TimeInterval, b: TimeInterval) -> float:
    """
    Length of the intersection of two intervals in seconds (0 if disjoint).

    Examples
    --------
    .. code-block:: python

        overlap_duration(
            TimeInterval.from_seconds(0, 5),
            TimeInterval.from_seconds(3, 8)
        )  # 2.0
    """
    return overlap_centiseconds(a, b) / CENTIS_PER_SECOND


def overlap_centiseconds(a: TimeInterval, b: TimeInterval) -> int:
    return max(0, min(a.end_cs, b.end_cs) - max(a.start_cs, b.start_cs))


def clip_segment(
        seg: DiarSegment,
        window: TimeInterval,
        min_clip_duration: float = DEFAULT_MIN_CLIP_DURATION
) -> DiarSegment | None:
    """
    Intersect a segment with a window and re-base it to window time.

    Parameters
    ----------
    seg : DiarSegment
        Segment on the absolute recording timeline.

    window : TimeInterval
        Absolute window to clip against.

    min_clip_duration : float, optional
        Intersections shorter than this (seconds) are dropped. Default 0.05.

    Returns
    -------
    DiarSegment or None
        The clipped, window-relative segment, or None when the intersection
        is shorter than ``min_clip_duration``.
    """
    start = max(seg.interval.start_cs, window.start_cs)
    end = min(seg.interval.end_cs, window.end_cs)
    if end - start < to_centiseconds(min_clip_duration):
        return None
    return DiarSegment(
        speaker=seg.speaker,
        interval=TimeInterval(start - window.start_cs, end - window.start_cs)
    )


def chunk_recording(
        rec: Recording,
        min_dur: float,
        max_dur: float,
        min_clip_duration: float = DEFAULT_MIN_CLIP_DURATION
) -> list[Chunk]:
    """
    Split a recording into windows of at most ``max_dur`` seconds.

    Cut points are chosen greedily: from the current chunk start, the latest
    silence gap (an instant covered by no segment) that intersects
    ``[start + min_dur, start + max_dur]`` is cut at the midpoint of that
    intersection. Without such a gap the chunk is cut hard at
    ``start + max_dur``. Segments are clipped into every window they touch.

    Parameters
    ----------
    rec : Recording
        The recording to split.

    min_dur : float
        Minimum duration of every chunk except the last one, in seconds.

    max_dur : float
        Maximum chunk duration in seconds.

    min_clip_duration : float, optional
        Clipped segment pieces shorter than this are dropped. Default 0.05.

    Returns
    -------
    list of Chunk
        Chunks in timeline order, tiling ``[0, rec.duration]``.

    Raises
    ------
    ValueError
        If ``min_dur <= 0`` or ``min_dur > max_dur``.
    """
    if min_dur <= 0:
        raise ValueError(f"'min_dur' must be positive. Got {min_dur}.")
    if min_dur > max_dur:
        raise ValueError(
            f"'min_dur' ({min_dur}) must not exceed 'max_dur' ({max_dur})."
        )

    min_cs = to_centiseconds(min_dur)
    max_cs = to_centiseconds(max_dur)
    gaps = find_gaps(rec)

    windows = []
    cursor = 0
    while cursor < rec.duration_cs:
        if rec.duration_cs - cursor <= max_cs:
            windows.append(TimeInterval(cursor, rec.duration_cs))
            break
        cut = choose_cut_point(gaps, cursor + min_cs, cursor + max_cs)
        windows.append(TimeInterval(cursor, cut))
        cursor = cut

    chunks = []
    dropped = 0
    for chunk_index, window in enumerate(windows):
        clipped = []
        for seg in rec.segments:
            if seg.interval.end_cs < window.start_cs:
                continue
            if seg.interval.start_cs > window.end_cs:
                break
            if overlap_centiseconds(seg.interval, window) == 0:
                continue
            piece = clip_segment(seg, window, min_clip_duration)
            if piece is None:
                dropped += 1
            else:
                clipped.append(piece)
        chunks.append(Chunk(
            chunk_id=f"{rec.recording_id}_{chunk_index:04d}",
            recording_id=rec.recording_id,
            chunk_index=chunk_index,
            window=window,
            segments=tuple(clipped)
        ))

    if dropped:
        logger.warning(
            f"Dropped {dropped} segment slivers shorter than "
            f"{min_clip_duration} s while chunking '{rec.recording_id}'."
        )
    return chunks


# Level 1 function definitions -------------------------------------------------


def find_gaps(rec: Recording) -> list[TimeInterval]:
    """
    Return the maximal positive-length intervals of ``[0, duration]`` covered
    by no segment.
    """
    gaps = []
    covered_until = 0
    for seg in rec.segments:
        if seg.interval.start_cs > covered_until:
            gaps.append(TimeInterval(covered_until, seg.interval.start_cs))
        covered_until = max(covered_until, seg.interval.end_cs)
    if rec.duration_cs > covered_until:
        gaps.append(TimeInterval(covered_until, rec.duration_cs))
    return gaps


def choose_cut_point(
        gaps: list[TimeInterval],
        earliest_cs: int,
        latest_cs: int
) -> int:
    """Midpoint of the latest gap inside the cut range, else ``latest_cs``."""
    for gap in reversed(gaps):
        lo = max(gap.start_cs, earliest_cs)
        hi = min(gap.end_cs, latest_cs)
        if lo <= hi and gap.end_cs > earliest_cs and gap.start_cs < latest_cs:
            return (lo + hi) // 2
    return latest_cs
