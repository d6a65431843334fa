import logging
from typing import Mapping, Sequence

import numpy as np

from .assignment import optimal_assignment
from .ingest_io import WordTiming
from .timeline import DiarSegment, TimeInterval, overlap_centiseconds

logger = logging.getLogger(__name__)


def align_speaker_labels(
        segments: Sequence[DiarSegment],
        words: Mapping[str, Sequence[WordTiming]]
) -> dict[str, str]:
    """
    Map diarization speaker labels onto transcript speakers.

    When every diarization label is also a transcript speaker the mapping is
    the identity. Otherwise labels are paired one-to-one with transcript
    speakers so that the total time overlap of segments and words is
    maximal; labels without any overlap with their partner stay unmapped.

    Parameters
    ----------
    segments : sequence of DiarSegment
        Diarization segments of one recording.

    words : Mapping[str, sequence of WordTiming]
        Transcript words of the same recording keyed by speaker.

    Returns
    -------
    dict[str, str]
        Diarization label to transcript speaker.
    """
    labels = sorted({seg.speaker for seg in segments})
    speakers = sorted(words)
    if set(labels) <= set(speakers):
        return {label: label for label in labels}
    if not labels or not speakers:
        return {}

    overlap = np.zeros((len(labels), len(speakers)), dtype=np.int64)
    row = {label: i for i, label in enumerate(labels)}
    for seg in segments:
        for j, speaker in enumerate(speakers):
            overlap[row[seg.speaker], j] += sum(
                overlap_centiseconds(seg.interval, w.interval)
                for w in words[speaker]
            )
    pairs, _ = optimal_assignment(overlap.max() - overlap)
    mapping = {
        labels[i]: speakers[j]
        for i, j in pairs.items()
        if overlap[i, j] > 0
    }
    logger.info(f"Aligned diarization labels to transcript speakers: {mapping}")
    return mapping


def assign_words_to_segments(
        segments: Sequence[DiarSegment],
        words: Mapping[str, Sequence[WordTiming]],
        label_map: Mapping[str, str] | None = None
) -> list[tuple[WordTiming, ...]]:
    """
    Attach each transcript word to the diarized segment that carries it.

    A word belongs to the first segment (in the given order) whose speaker
    maps to the word's speaker and whose interval contains the word's
    midpoint. Each word is used at most once.

    Parameters
    ----------
    segments : sequence of DiarSegment
        Segments on the same timeline as ``words``.

    words : Mapping[str, sequence of WordTiming]
        Words keyed by transcript speaker.

    label_map : Mapping[str, str], optional
        Diarization label to transcript speaker. Default: identity.

    Returns
    -------
    list of tuple of WordTiming
        Words per segment, aligned with ``segments`` and sorted by time.
    """
    if label_map is None:
        label_map = {seg.speaker: seg.speaker for seg in segments}

    by_speaker = {}
    for index, seg in enumerate(segments):
        speaker = label_map.get(seg.speaker)
        if speaker is not None:
            by_speaker.setdefault(speaker, []).append(index)

    assigned = [[] for _ in segments]
    unassigned = 0
    for speaker, timings in words.items():
        candidates = by_speaker.get(speaker, [])
        for word in timings:
            doubled_mid = word.interval.start_cs + word.interval.end_cs
            for index in candidates:
                interval = segments[index].interval
                if 2 * interval.start_cs <= doubled_mid <= 2 * interval.end_cs:
                    assigned[index].append(word)
                    break
            else:
                unassigned += 1
    if unassigned:
        logger.warning(
            f"{unassigned} transcript words fall outside every diarized "
            f"segment of their speaker and were left out."
        )
    return [
        tuple(sorted(group, key=lambda w: (w.interval.start_cs,
                                           w.interval.end_cs)))
        for group in assigned
    ]


def rebase_words(
        words: Sequence[WordTiming],
        window: TimeInterval
) -> tuple[WordTiming, ...]:
    """Shift words to window-relative time, clamping them into the window."""
    rebased = []
    for w in words:
        start = min(max(w.interval.start_cs - window.start_cs, 0),
                    window.duration_cs)
        end = min(max(w.interval.end_cs - window.start_cs, start),
                  window.duration_cs)
        rebased.append(WordTiming(w.word, TimeInterval(start, end)))
    return tuple(rebased)
