import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Mapping, Sequence

from .exceptions import ParseError
from .ingest_io import (
    SegLstEntry,
    WordTiming,
    read_rttm,
    read_seglst,
    read_word_transcript,
    write_rttm,
    write_seglst,
    write_word_transcript
)
from .logging_config import configure_logging
from .timeline import Recording, TimeInterval, to_centiseconds
from .transcript_alignment import align_speaker_labels, assign_words_to_segments
from .words import join_words, split_words

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
DIARIZATION_FILE = "diarization.rttm"
WORDS_FILE = "words.ctm"
REFERENCE_FILE = "reference.seglst.json"
ALIGNED = "aligned"
SYNTHESIZED = "synthesized"


# Exported function definition -------------------------------------------------


def ingest_corpus(
        rttm_files: Sequence[str | os.PathLike],
        transcript_files: Sequence[str | os.PathLike],
        output_dir: str | os.PathLike,
        durations: Mapping[str, float] | None = None,
        log_dir: str | os.PathLike | None = None
) -> dict:
    """
    Validate and normalize diarization and transcripts into a corpus
    directory.

    RTTM files provide the diarization segments. Transcripts are CTM word
    alignments or SegLST JSON files (``.json``); SegLST entries without word
    timings get equal-subdivision timings and the corpus is marked as
    having synthesized word times.

    Parameters
    ----------
    rttm_files : sequence of str or Path
        Diarization RTTM files. A recording may appear in only one file.

    transcript_files : sequence of str or Path
        Word transcripts (CTM) or SegLST JSON files.

    output_dir : str or Path
        Corpus directory to create. It receives ``diarization.rttm``,
        ``words.ctm``, ``reference.seglst.json`` and ``manifest.json``.

    durations : Mapping[str, float], optional
        Recording durations in seconds overriding the latest segment end.

    log_dir : str or Path, optional
        Directory where the log file is written. Default is the current
        working directory.

    Returns
    -------
    dict
        The manifest that was written.

    Raises
    ------
    FileNotFoundError
        If an input file does not exist.

    ParseError
        If an input cannot be parsed; the message names file and line.

    ValueError
        If no RTTM file is given or a recording is defined twice.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue import ingest_corpus

        manifest = ingest_corpus(
            rttm_files=["data/dev.rttm"],
            transcript_files=["data/dev_mfa.ctm"],
            output_dir="corpus/dev",
            log_dir="logs"
        )
        manifest["recordings"][0]["recording_id"]

        # corpus/dev/
        # ├── diarization.rttm
        # ├── words.ctm
        # ├── reference.seglst.json
        # └── manifest.json
    """
    configure_logging("ingest_corpus", log_dir)

    if not rttm_files:
        logger.error("No RTTM file given.")
        raise ValueError("At least one RTTM file is required.")
    for path in list(rttm_files) + list(transcript_files):
        if not isinstance(path, (str, os.PathLike)):
            raise TypeError(
                f"Input paths must be str or PathLike. "
                f"Got {type(path).__name__}."
            )
        if not os.path.isfile(path):
            logger.error(f"Input file '{path}' not found.")
            raise FileNotFoundError(f"Input file '{path}' not found.")

    try:
        recordings = _read_recordings(rttm_files, durations or {})
        words, timing_source = _read_transcripts(transcript_files)
    except ParseError as e:
        logger.error(f"Parse Error: {e}")
        raise

    # Words past the last segment extend the recording.
    for recording_id, rec in list(recordings.items()):
        word_end = max(
            (w.interval.end_cs for (rid, _), ws in words.items()
             if rid == recording_id for w in ws),
            default=0
        )
        if word_end > rec.duration_cs:
            recordings[recording_id] = Recording(recording_id, word_end,
                                                 rec.segments)

    orphans = sorted({rid for rid, _ in words} - set(recordings))
    if orphans:
        logger.warning(
            f"Transcripts of recordings without diarization are ignored: "
            f"{orphans}"
        )

    reference = []
    summaries = []
    for recording_id, rec in recordings.items():
        rec_words = {spk: ws for (rid, spk), ws in words.items()
                     if rid == recording_id}
        if not rec_words and rec.segments:
            logger.warning(f"Recording '{recording_id}' has no transcript.")
        label_map = align_speaker_labels(rec.segments, rec_words)
        assigned = assign_words_to_segments(rec.segments, rec_words, label_map)
        for seg, seg_words in zip(rec.segments, assigned):
            reference.append(SegLstEntry(
                session_id=recording_id,
                speaker=seg.speaker,
                interval=seg.interval,
                words=join_words([w.word for w in seg_words]),
                word_timings=tuple(seg_words)
            ))
        summaries.append({
            "recording_id": recording_id,
            "duration": rec.duration,
            "speakers": rec.speakers,
            "segments": len(rec.segments),
            "words": sum(len(ws) for ws in rec_words.values()),
        })

    os.makedirs(output_dir, exist_ok=True)
    outputs = {
        DIARIZATION_FILE: write_rttm(recordings),
        WORDS_FILE: write_word_transcript({
            key: ws for key, ws in words.items() if key[0] in recordings
        }),
        REFERENCE_FILE: write_seglst(reference),
    }
    checksums = {}
    for name, text in outputs.items():
        data = text.encode("utf-8")
        Path(output_dir, name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
        logger.info(f"Wrote {name} to {output_dir}")

    manifest = {
        "format_version": 1,
        "word_timing_source": timing_source,
        "recordings": summaries,
        "inputs": [
            {"path": os.fspath(path), "sha256": _file_sha256(path)}
            for path in list(rttm_files) + list(transcript_files)
        ],
        "files": checksums,
    }
    Path(output_dir, MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8"
    )
    logger.info(
        f"Ingested {len(recordings)} recordings into {output_dir}."
    )
    return manifest


def load_manifest(corpus_dir: str | os.PathLike) -> dict:
    """Read the manifest of an ingested corpus directory."""
    path = Path(corpus_dir, MANIFEST_FILE)
    if not path.is_file():
        raise FileNotFoundError(
            f"'{corpus_dir}' is not an ingested corpus: {MANIFEST_FILE} "
            f"is missing."
        )
    return json.loads(path.read_text(encoding="utf-8"))


# Level 1 function definitions -------------------------------------------------


def _read_recordings(
        rttm_files: Sequence[str | os.PathLike],
        durations: Mapping[str, float]
) -> dict[str, Recording]:
    recordings = {}
    for path in rttm_files:
        with open(path, "r", encoding="utf-8") as f:
            parsed = read_rttm(f, source_name=os.fspath(path))
        duplicates = sorted(set(parsed) & set(recordings))
        if duplicates:
            logger.error(f"Recordings defined twice: {duplicates}")
            raise ValueError(
                f"Recordings {duplicates} appear in more than one RTTM file."
            )
        recordings.update(parsed)
        logger.info(f"Read {len(parsed)} recordings from {path}")
    for recording_id, duration in durations.items():
        rec = recordings.get(recording_id)
        if rec is not None and to_centiseconds(duration) > rec.duration_cs:
            recordings[recording_id] = Recording(
                recording_id, to_centiseconds(duration), rec.segments)
    return dict(sorted(recordings.items()))


def _read_transcripts(
        transcript_files: Sequence[str | os.PathLike]
) -> tuple[dict[tuple[str, str], list[WordTiming]], str]:
    words = {}
    timing_source = ALIGNED
    for path in transcript_files:
        name = os.fspath(path)
        with open(path, "r", encoding="utf-8") as f:
            if name.endswith(".json"):
                parsed, synthesized = _words_from_seglst(
                    read_seglst(f, source_name=name))
                if synthesized:
                    timing_source = SYNTHESIZED
            else:
                parsed = read_word_transcript(f, source_name=name)
        for key, ws in parsed.items():
            if key in words:
                logger.error(f"Speaker {key} transcribed twice.")
                raise ParseError(
                    f"speaker '{key[1]}' of recording '{key[0]}' already "
                    f"has a transcript",
                    source=name
                )
            words[key] = ws
        logger.info(f"Read transcripts of {len(parsed)} speakers from {name}")
    return dict(sorted(words.items())), timing_source


def _words_from_seglst(
        entries: list[SegLstEntry]
) -> tuple[dict[tuple[str, str], list[WordTiming]], bool]:
    words = {}
    synthesized = False
    for entry in entries:
        if entry.word_timings is not None:
            timings = list(entry.word_timings)
        else:
            tokens = split_words(entry.words)
            synthesized = synthesized or bool(tokens)
            timings = _subdivide(tokens, entry)
        words.setdefault((entry.session_id, entry.speaker), []).extend(timings)
    for ws in words.values():
        ws.sort(key=lambda w: (w.interval.start_cs, w.interval.end_cs))
    return words, synthesized


def _subdivide(tokens: list[str], entry: SegLstEntry) -> list[WordTiming]:
    start, end = entry.interval.start_cs, entry.interval.end_cs
    n = len(tokens)
    bounds = [start + (end - start) * i // n for i in range(n)] + [end]
    return [
        WordTiming(token, TimeInterval(bounds[i], bounds[i + 1]))
        for i, token in enumerate(tokens)
    ]


def _file_sha256(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()
