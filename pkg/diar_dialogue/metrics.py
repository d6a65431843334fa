import logging
import math
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .assignment import optimal_assignment
from .ingest_io import SegLstEntry
from .timeline import CENTIS_PER_SECOND, DiarSegment

logger = logging.getLogger(__name__)

WORD = "word"
CHAR = "char"
AGGREGATE_LABEL = "ALL"
INF_MARKER = "inf"


@dataclass(frozen=True)
class TokenizationMode:
    """
    How text is split into scoring tokens.

    Word mode defaults to lowercasing and punctuation stripping; char mode
    to neither.
    """

    mode: str = WORD
    lowercase: bool | None = None
    strip_punct: bool | None = None

    def __post_init__(self) -> None:
        if self.mode not in (WORD, CHAR):
            raise ValueError(
                f"Tokenization mode must be '{WORD}' or '{CHAR}'. "
                f"Got {self.mode!r}."
            )
        default = self.mode == WORD
        if self.lowercase is None:
            object.__setattr__(self, "lowercase", default)
        if self.strip_punct is None:
            object.__setattr__(self, "strip_punct", default)

    @property
    def error_rate_names(self) -> tuple[str, str]:
        return ("cpWER", "tcpWER") if self.mode == WORD else ("cpCER", "tcpCER")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "lowercase": self.lowercase,
                "strip_punct": self.strip_punct}


@dataclass(frozen=True)
class DerBreakdown:
    """Diarization error components in seconds."""

    missed: float
    false_alarm: float
    confusion: float
    scored: float

    @property
    def der(self) -> float:
        return _ratio(self.missed + self.false_alarm + self.confusion,
                      self.scored)

    def __add__(self, other: "DerBreakdown") -> "DerBreakdown":
        return DerBreakdown(self.missed + other.missed,
                            self.false_alarm + other.false_alarm,
                            self.confusion + other.confusion,
                            self.scored + other.scored)

    def to_dict(self) -> dict:
        return {
            "missed": self.missed,
            "false_alarm": self.false_alarm,
            "confusion": self.confusion,
            "scored": self.scored,
            "der": _rate_to_json(self.der),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DerBreakdown":
        return cls(float(data["missed"]), float(data["false_alarm"]),
                   float(data["confusion"]), float(data["scored"]))


@dataclass(frozen=True)
class WerBreakdown:
    """
    Word (or character) error counts of a permutation-minimized alignment.

    ``assignment`` maps hypothesis speakers to reference speakers; speakers
    left out of it were scored against nothing.
    """

    substitutions: int
    insertions: int
    deletions: int
    reference_length: int
    assignment: dict[str, str] = field(default_factory=dict)

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        return _ratio(self.errors, self.reference_length)

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.reference_length + other.reference_length
        )

    def to_dict(self) -> dict:
        return {
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "reference_length": self.reference_length,
            "rate": _rate_to_json(self.rate),
            "assignment": dict(sorted(self.assignment.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WerBreakdown":
        return cls(int(data["substitutions"]), int(data["insertions"]),
                   int(data["deletions"]), int(data["reference_length"]),
                   dict(data.get("assignment", {})))


@dataclass(frozen=True)
class SessionScores:
    """All metrics of one session; ``der`` is keyed by collar in seconds."""

    der: dict[float, DerBreakdown]
    cpwer: WerBreakdown
    tcpwer: WerBreakdown

    def to_dict(self) -> dict:
        return {
            "der": {_collar_key(c): b.to_dict()
                    for c, b in sorted(self.der.items())},
            "cpwer": self.cpwer.to_dict(),
            "tcpwer": self.tcpwer.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SessionScores":
        return cls(
            der={float(c): DerBreakdown.from_dict(b)
                 for c, b in data["der"].items()},
            cpwer=WerBreakdown.from_dict(data["cpwer"]),
            tcpwer=WerBreakdown.from_dict(data["tcpwer"])
        )


@dataclass(frozen=True)
class ScoreReport:
    per_session: dict[str, SessionScores]
    aggregate: SessionScores
    tokenization: TokenizationMode = field(default_factory=TokenizationMode)
    tcp_collar: float = 5.0

    def to_dict(self) -> dict:
        return {
            "tokenization": self.tokenization.to_dict(),
            "tcp_collar": self.tcp_collar,
            "aggregate": self.aggregate.to_dict(),
            "per_session": {s: scores.to_dict()
                            for s, scores in sorted(self.per_session.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ScoreReport":
        return cls(
            per_session={s: SessionScores.from_dict(v)
                         for s, v in data["per_session"].items()},
            aggregate=SessionScores.from_dict(data["aggregate"]),
            tokenization=TokenizationMode(**data["tokenization"]),
            tcp_collar=float(data["tcp_collar"])
        )


# Exported function definitions ------------------------------------------------


def tokenize(text: str, tok: TokenizationMode | None = None) -> list[str]:
    """
    Split text into scoring tokens.

    Examples
    --------
    .. code-block:: python

        tokenize("Hello, world")                     # ["hello", "world"]
        tokenize("好的", TokenizationMode(mode="char"))  # ["好", "的"]
    """
    tok = tok or TokenizationMode()
    if tok.lowercase:
        text = text.lower()
    if tok.strip_punct:
        text = "".join(ch for ch in text
                       if not unicodedata.category(ch).startswith("P"))
    if tok.mode == CHAR:
        return [ch for ch in text if not ch.isspace()]
    return text.split()


def compute_der(
        ref: Sequence[DiarSegment],
        hyp: Sequence[DiarSegment],
        collar: float = 0.0
) -> DerBreakdown:
    """
    Diarization error rate components.

    Hypothesis speakers are mapped one-to-one onto reference speakers so that
    the total overlap is maximal. The union timeline is then swept region by
    region, counting overlapped speech with multiplicity: with ``Nr``
    reference and ``Nh`` hypothesis speakers active, a region contributes
    ``max(0, Nr - Nh)`` missed, ``max(0, Nh - Nr)`` false-alarm and
    ``min(Nr, Nh) - correct`` confusion speaker-seconds.

    Parameters
    ----------
    ref, hyp : sequence of DiarSegment
        Reference and hypothesis segments of one session.

    collar : float, optional
        Seconds excluded from error counting on each side of every
        reference segment boundary. Default is 0. The denominator stays the
        total reference speaker time, so the ratio never grows with the
        collar.

    Returns
    -------
    DerBreakdown
    """
    if collar < 0:
        raise ValueError(f"'collar' must be non-negative. Got {collar}.")
    ref_tracks = _speaker_tracks(ref)
    hyp_tracks = _speaker_tracks(hyp)
    collar_cs = round(collar * CENTIS_PER_SECOND)
    excluded = _merge([
        (max(0, b - collar_cs), b + collar_cs)
        for seg in ref
        for b in (seg.interval.start_cs, seg.interval.end_cs)
    ]) if collar_cs > 0 else []

    points = {0}
    for tracks in (ref_tracks, hyp_tracks):
        for spans in tracks.values():
            for start, end in spans:
                points.update((start, end))
    for start, end in excluded:
        points.update((start, end))
    points = np.array(sorted(points), dtype=np.int64)
    if len(points) < 2:
        return DerBreakdown(0.0, 0.0, 0.0, 0.0)
    durations = np.diff(points)
    scored_mask = ~_activity(excluded, points)

    ref_names = sorted(ref_tracks)
    hyp_names = sorted(hyp_tracks)
    ref_active = _activity_matrix(ref_tracks, ref_names, points)
    hyp_active = _activity_matrix(hyp_tracks, hyp_names, points)

    overlap = (hyp_active[:, None, :] & ref_active[None, :, :]) @ durations
    mapping, _ = optimal_assignment(
        overlap.max(initial=0) - overlap if overlap.size else overlap
    )
    correct = np.zeros(len(durations), dtype=np.int64)
    for h, r in mapping.items():
        correct += hyp_active[h] & ref_active[r]

    n_ref = ref_active.sum(axis=0)
    n_hyp = hyp_active.sum(axis=0)
    weights = durations * scored_mask
    missed = np.maximum(n_ref - n_hyp, 0) @ weights
    false_alarm = np.maximum(n_hyp - n_ref, 0) @ weights
    confusion = (np.minimum(n_ref, n_hyp) - correct) @ weights
    scored = n_ref @ durations
    return DerBreakdown(
        missed=int(missed) / CENTIS_PER_SECOND,
        false_alarm=int(false_alarm) / CENTIS_PER_SECOND,
        confusion=int(confusion) / CENTIS_PER_SECOND,
        scored=int(scored) / CENTIS_PER_SECOND
    )


def compute_cpwer(
        ref: Sequence[SegLstEntry],
        hyp: Sequence[SegLstEntry],
        tok: TokenizationMode | None = None
) -> WerBreakdown:
    """
    Concatenated minimum-permutation word error rate of one session.

    Each speaker's segments are concatenated in start-time order; the
    speaker pairing minimizing the summed edit distance is chosen, and
    unpaired streams count as full insertions or deletions.

    Examples
    --------
    .. code-block:: python

        ref = [SegLstEntry("s", "A", TimeInterval(0, 100), "hello world"),
               SegLstEntry("s", "B", TimeInterval(100, 200), "good morning")]
        hyp = [SegLstEntry("s", "1", TimeInterval(0, 100), "good morning"),
               SegLstEntry("s", "2", TimeInterval(100, 200), "hello word")]
        compute_cpwer(ref, hyp).rate  # 0.25
    """
    return _permutation_wer(ref, hyp, tok or TokenizationMode(), None)


def compute_tcpwer(
        ref: Sequence[SegLstEntry],
        hyp: Sequence[SegLstEntry],
        collar: float = 5.0,
        tok: TokenizationMode | None = None
) -> WerBreakdown:
    """
    Time-constrained variant of :func:`compute_cpwer`.

    A reference token over ``r`` and a hypothesis token over ``h`` may only
    be matched or substituted when ``h.start <= r.end + collar`` and
    ``h.end >= r.start - collar``. Tokens without word timings get equal
    shares of their segment's interval.
    """
    if collar < 0:
        raise ValueError(f"'collar' must be non-negative. Got {collar}.")
    return _permutation_wer(ref, hyp, tok or TokenizationMode(), collar)


def score_session(
        ref: Sequence[SegLstEntry],
        hyp: Sequence[SegLstEntry],
        der_collars: Sequence[float] = (0.0,),
        tcp_collar: float = 5.0,
        tok: TokenizationMode | None = None
) -> SessionScores:
    """Compute DER at every collar plus cpWER and tcpWER for one session."""
    ref_segments = [DiarSegment(e.speaker, e.interval) for e in ref]
    hyp_segments = [DiarSegment(e.speaker, e.interval) for e in hyp]
    return SessionScores(
        der={float(c): compute_der(ref_segments, hyp_segments, c)
             for c in der_collars},
        cpwer=compute_cpwer(ref, hyp, tok),
        tcpwer=compute_tcpwer(ref, hyp, tcp_collar, tok)
    )


def aggregate(
        sessions: Iterable[tuple[str, SessionScores]],
        tok: TokenizationMode | None = None,
        tcp_collar: float = 5.0
) -> ScoreReport:
    """
    Pool per-session scores into a report.

    Components are summed in session-id order and rates recomputed from
    the sums, so the pooled rate is not a mean of session rates.

    Raises
    ------
    ValueError
        If no session is given, a session id repeats, or sessions were
        scored at different DER collars.
    """
    per_session = {}
    for session_id, scores in sessions:
        if session_id in per_session:
            raise ValueError(f"Duplicate session id '{session_id}'.")
        per_session[session_id] = scores
    if not per_session:
        raise ValueError("Cannot aggregate an empty set of sessions.")

    ordered = [per_session[s] for s in sorted(per_session)]
    collars = set(ordered[0].der)
    if any(set(s.der) != collars for s in ordered):
        raise ValueError("Sessions were scored at different DER collars.")

    der = {}
    for collar in sorted(collars):
        total = ordered[0].der[collar]
        for scores in ordered[1:]:
            total = total + scores.der[collar]
        der[collar] = total
    cpwer = WerBreakdown(0, 0, 0, 0)
    tcpwer = WerBreakdown(0, 0, 0, 0)
    for scores in ordered:
        cpwer = cpwer + scores.cpwer
        tcpwer = tcpwer + scores.tcpwer
    return ScoreReport(
        per_session=dict(sorted(per_session.items())),
        aggregate=SessionScores(der=der, cpwer=cpwer, tcpwer=tcpwer),
        tokenization=tok or TokenizationMode(),
        tcp_collar=tcp_collar
    )


def report_summary(report: ScoreReport) -> pd.DataFrame:
    """
    Flat summary table: one row per (session, metric), aggregate last.

    Columns: session, metric, value, then the error components of the
    metric (missing components left empty).
    """
    cp_name, tcp_name = report.tokenization.error_rate_names
    rows = []
    sessions = list(report.per_session.items())
    sessions.append((AGGREGATE_LABEL, report.aggregate))
    for session_id, scores in sessions:
        for collar, der in sorted(scores.der.items()):
            rows.append({
                "session": session_id,
                "metric": f"DER@{_collar_key(collar)}",
                "value": der.der,
                "missed": der.missed,
                "false_alarm": der.false_alarm,
                "confusion": der.confusion,
                "scored": der.scored,
            })
        for name, wer in ((cp_name, scores.cpwer), (tcp_name, scores.tcpwer)):
            rows.append({
                "session": session_id,
                "metric": name,
                "value": wer.rate,
                "substitutions": wer.substitutions,
                "deletions": wer.deletions,
                "insertions": wer.insertions,
                "reference_length": wer.reference_length,
            })
    columns = ["session", "metric", "value", "missed", "false_alarm",
               "confusion", "scored", "substitutions", "deletions",
               "insertions", "reference_length"]
    return pd.DataFrame(rows, columns=columns)


def compare_reports(reports: Mapping[str, ScoreReport]) -> pd.DataFrame:
    """
    Side-by-side aggregate rates of several reports, in percent.

    Raises
    ------
    ValueError
        If no report is given or the reports mix tokenization modes.
    """
    if not reports:
        raise ValueError("Nothing to compare: no reports given.")
    modes = {r.tokenization.mode for r in reports.values()}
    if len(modes) > 1:
        raise ValueError(
            f"Reports mix tokenization modes {sorted(modes)}; compare "
            f"word-level and char-level scores separately."
        )
    first = next(iter(reports.values()))
    cp_name, tcp_name = first.tokenization.error_rate_names
    rows = []
    for name, report in reports.items():
        row = {"system": name}
        for collar, der in sorted(report.aggregate.der.items()):
            row[f"DER@{_collar_key(collar)} (%)"] = 100 * der.der
        row[f"{cp_name} (%)"] = 100 * report.aggregate.cpwer.rate
        row[f"{tcp_name} (%)"] = 100 * report.aggregate.tcpwer.rate
        rows.append(row)
    return pd.DataFrame(rows)


# Level 1 function definitions -------------------------------------------------


def _ratio(errors: float, total: float) -> float:
    if total > 0:
        return errors / total
    return 0.0 if errors == 0 else math.inf


def _rate_to_json(rate: float) -> float | str:
    return INF_MARKER if math.isinf(rate) else rate


def _collar_key(collar: float) -> str:
    return f"{collar:.2f}"


def _merge(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    merged = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _speaker_tracks(
        segments: Sequence[DiarSegment]
) -> dict[str, list[tuple[int, int]]]:
    """Per-speaker union of speech, as merged centisecond spans."""
    spans = {}
    for seg in segments:
        if seg.interval.duration_cs > 0:
            spans.setdefault(seg.speaker, []).append(
                (seg.interval.start_cs, seg.interval.end_cs))
    return {speaker: _merge(s) for speaker, s in spans.items()}


def _activity(spans: list[tuple[int, int]], points: np.ndarray) -> np.ndarray:
    """Boolean activity of each region ``[points[k], points[k + 1])``."""
    marks = np.zeros(len(points), dtype=np.int64)
    for start, end in spans:
        marks[np.searchsorted(points, start)] += 1
        marks[np.searchsorted(points, end)] -= 1
    return np.cumsum(marks)[:-1] > 0


def _activity_matrix(
        tracks: dict[str, list[tuple[int, int]]],
        names: list[str],
        points: np.ndarray
) -> np.ndarray:
    matrix = np.zeros((len(names), len(points) - 1), dtype=bool)
    for row, name in enumerate(names):
        matrix[row] = _activity(tracks[name], points)
    return matrix


def _token_stream(
        entries: Sequence[SegLstEntry],
        tok: TokenizationMode
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Tokens of one speaker in segment start order, with their times."""
    tokens = []
    starts = []
    ends = []
    ordered = sorted(entries, key=lambda e: (e.interval.start_cs,
                                             e.interval.end_cs))
    for entry in ordered:
        if entry.word_timings is not None:
            pieces = [(tokenize(w.word, tok), w.interval)
                      for w in entry.word_timings]
        else:
            pieces = [(tokenize(entry.words, tok), entry.interval)]
        for piece_tokens, interval in pieces:
            n = len(piece_tokens)
            for i, token in enumerate(piece_tokens):
                tokens.append(token)
                starts.append(interval.start
                              + interval.duration * i / n)
                ends.append(interval.start
                            + interval.duration * (i + 1) / n)
    return tokens, np.array(starts, dtype=float), np.array(ends, dtype=float)


def _permutation_wer(
        ref: Sequence[SegLstEntry],
        hyp: Sequence[SegLstEntry],
        tok: TokenizationMode,
        collar: float | None
) -> WerBreakdown:
    ref_streams = _streams(ref, tok)
    hyp_streams = _streams(hyp, tok)
    ref_names = sorted(ref_streams)
    hyp_names = sorted(hyp_streams)
    size = max(len(ref_names), len(hyp_names))
    reference_length = sum(len(s[0]) for s in ref_streams.values())
    if size == 0:
        return WerBreakdown(0, 0, 0, 0)

    vocabulary = {}
    encoded_ref = {s: _encode(ref_streams[s], vocabulary) for s in ref_names}
    encoded_hyp = {s: _encode(hyp_streams[s], vocabulary) for s in hyp_names}

    # rows: reference speakers, columns: hypothesis speakers; padded rows and
    # columns stand for "no speaker"
    cost = np.zeros((size, size))
    operations = {}
    for i, r in enumerate(ref_names):
        cost[i, len(hyp_names):] = len(encoded_ref[r][0])
        for j, h in enumerate(hyp_names):
            ops = _align(encoded_ref[r], encoded_hyp[h], collar)
            operations[(i, j)] = ops
            cost[i, j] = sum(ops)
    for j, h in enumerate(hyp_names):
        cost[len(ref_names):, j] = len(encoded_hyp[h][0])

    mapping, _ = optimal_assignment(cost)
    subs = dels = ins = 0
    assignment = {}
    for i, j in sorted(mapping.items()):
        if i < len(ref_names) and j < len(hyp_names):
            s, d, n = operations[(i, j)]
            subs, dels, ins = subs + s, dels + d, ins + n
            assignment[hyp_names[j]] = ref_names[i]
        elif i < len(ref_names):
            dels += len(encoded_ref[ref_names[i]][0])
        elif j < len(hyp_names):
            ins += len(encoded_hyp[hyp_names[j]][0])
    if reference_length == 0 and ins:
        logger.warning(
            f"Empty reference against {ins} hypothesis tokens; the error "
            f"rate is infinite."
        )
    return WerBreakdown(subs, ins, dels, reference_length, assignment)


def _streams(
        entries: Sequence[SegLstEntry],
        tok: TokenizationMode
) -> dict[str, tuple[list[str], np.ndarray, np.ndarray]]:
    by_speaker = {}
    for entry in entries:
        by_speaker.setdefault(entry.speaker, []).append(entry)
    return {speaker: _token_stream(group, tok)
            for speaker, group in by_speaker.items()}


def _encode(
        stream: tuple[list[str], np.ndarray, np.ndarray],
        vocabulary: dict[str, int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tokens, starts, ends = stream
    ids = np.array([vocabulary.setdefault(t, len(vocabulary)) for t in tokens],
                   dtype=np.int64)
    return ids, starts, ends


def _align(
        ref: tuple[np.ndarray, np.ndarray, np.ndarray],
        hyp: tuple[np.ndarray, np.ndarray, np.ndarray],
        collar: float | None
) -> tuple[int, int, int]:
    """
    Levenshtein alignment returning (substitutions, deletions, insertions).

    With a collar, pairs violating the time constraint cannot be aligned on
    the diagonal and fall back to a deletion plus an insertion.
    """
    ref_ids, ref_start, ref_end = ref
    hyp_ids, hyp_start, hyp_end = hyp
    n, m = len(ref_ids), len(hyp_ids)
    if n == 0 or m == 0:
        return 0, n, m

    steps = np.arange(m + 1, dtype=float)
    table = np.empty((n + 1, m + 1))
    table[0] = steps
    diagonal = np.empty((n, m))
    for i in range(1, n + 1):
        cost = (hyp_ids != ref_ids[i - 1]).astype(float)
        if collar is not None:
            allowed = ((hyp_start <= ref_end[i - 1] + collar)
                       & (hyp_end >= ref_start[i - 1] - collar))
            cost[~allowed] = np.inf
        diagonal[i - 1] = cost
        previous = table[i - 1]
        candidate = np.empty(m + 1)
        candidate[0] = i
        candidate[1:] = np.minimum(previous[:-1] + cost, previous[1:] + 1)
        # left-to-right insertions: cur[j] = min_k (cand[k] + j - k)
        table[i] = np.minimum.accumulate(candidate - steps) + steps

    subs = dels = ins = 0
    i, j = n, m
    while i > 0 and j > 0:
        value = table[i, j]
        if value == table[i - 1, j - 1] + diagonal[i - 1, j - 1]:
            subs += int(diagonal[i - 1, j - 1])
            i, j = i - 1, j - 1
        elif value == table[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return subs, dels + i, ins + j
