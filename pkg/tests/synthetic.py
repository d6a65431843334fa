"""
Scriptable synthetic meeting corpus.

Each recording is a run of conversation blocks separated by 1 s silences.
Inside a block three speakers take turns without pauses; every turn is a
run of contiguous 0.3 s words, so all times sit on the 0.1 s grid and every
segment spans exactly its words. A block lasts 16 to 19 s, which makes the
15-25 s chunker cut in the middle of each silence.
"""
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from diar_dialogue.ingest_io import (
    WordTiming,
    write_rttm,
    write_word_transcript
)
from diar_dialogue.timeline import DiarSegment, Recording, TimeInterval

SPEAKERS = ("spk_a", "spk_b", "spk_c")
VOCABULARY = (
    "about", "after", "again", "agenda", "budget", "call", "change", "check",
    "client", "data", "design", "done", "early", "friday", "good", "great",
    "idea", "item", "later", "meeting", "model", "monday", "need", "next",
    "note", "okay", "plan", "point", "ready", "really", "right", "run",
    "second", "sure", "team", "test", "think", "today", "update", "well",
)
WORD_CS = 30
SILENCE_CS = 100
MIN_BLOCK_CS = 1600


@dataclass(frozen=True)
class SyntheticCorpus:
    recordings: dict[str, Recording]
    words: dict[tuple[str, str], list[WordTiming]]

    @property
    def word_count(self) -> int:
        return sum(len(ws) for ws in self.words.values())

    def write(self, directory: str | os.PathLike) -> tuple[Path, Path]:
        """Write ``reference.rttm`` and ``words.ctm`` into ``directory``."""
        directory = Path(directory)
        os.makedirs(directory, exist_ok=True)
        rttm = directory / "reference.rttm"
        ctm = directory / "words.ctm"
        rttm.write_text(write_rttm(self.recordings), encoding="utf-8")
        ctm.write_text(write_word_transcript(self.words), encoding="utf-8")
        return rttm, ctm


def make_corpus(
        n_recordings: int = 3,
        blocks: int = 16,
        seed: int = 0
) -> SyntheticCorpus:
    """Generate ``n_recordings`` recordings of ``blocks`` blocks each."""
    rng = np.random.default_rng(seed)
    recordings = {}
    words = defaultdict(list)
    for r in range(n_recordings):
        recording_id = f"meet{r + 1:02d}"
        segments = []
        cursor = SILENCE_CS // 2
        previous = None
        for _ in range(blocks):
            block_start = cursor
            while cursor - block_start < MIN_BLOCK_CS:
                choices = [s for s in SPEAKERS if s != previous]
                speaker = choices[int(rng.integers(len(choices)))]
                seg_start = cursor
                for _ in range(int(rng.integers(3, 11))):
                    word = VOCABULARY[int(rng.integers(len(VOCABULARY)))]
                    words[(recording_id, speaker)].append(WordTiming(
                        word, TimeInterval(cursor, cursor + WORD_CS)))
                    cursor += WORD_CS
                segments.append(DiarSegment(speaker,
                                            TimeInterval(seg_start, cursor)))
                previous = speaker
            cursor += SILENCE_CS
        duration_cs = cursor - SILENCE_CS // 2
        recordings[recording_id] = Recording(recording_id, duration_cs,
                                             tuple(segments))
    return SyntheticCorpus(recordings, dict(sorted(words.items())))


def front_end_recordings(
        corpus: SyntheticCorpus,
        max_shift_cs: int = 15,
        seed: int = 1
) -> dict[str, Recording]:
    """
    Imitate a diarization front-end: every distinct boundary instant moves by
    up to ``max_shift_cs`` and speakers get foreign labels.

    Abutting segments share their boundary shift, so no pauses appear inside
    blocks.
    """
    rng = np.random.default_rng(seed)
    labels = {speaker: f"fe{i}" for i, speaker in enumerate(SPEAKERS)}
    result = {}
    for recording_id, rec in corpus.recordings.items():
        points = sorted({b for seg in rec.segments
                         for b in (seg.interval.start_cs, seg.interval.end_cs)})
        shifts = {
            p: int(rng.integers(-max_shift_cs, max_shift_cs + 1))
            for p in points
        }
        segments = tuple(
            DiarSegment(
                labels[seg.speaker],
                TimeInterval(seg.interval.start_cs + shifts[seg.interval.start_cs],
                             seg.interval.end_cs + shifts[seg.interval.end_cs])
            )
            for seg in rec.segments
        )
        result[recording_id] = Recording(recording_id, rec.duration_cs,
                                         segments)
    return result
