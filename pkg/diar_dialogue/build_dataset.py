import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from tqdm import tqdm

from .dialogue_builder import Dialogue, build_dialogue, write_dialogues
from .ingest_corpus import (
    DIARIZATION_FILE,
    SYNTHESIZED,
    WORDS_FILE,
    load_manifest
)
from .ingest_io import WordTiming, read_rttm, read_word_transcript
from .logging_config import configure_logging
from .run_config import RunConfig
from .timeline import DiarSegment, Recording, chunk_recording
from .token_codec import WITH_TIMESTAMPS
from .transcript_alignment import (
    align_speaker_labels,
    assign_words_to_segments,
    rebase_words
)

logger = logging.getLogger(__name__)


# Exported function definition -------------------------------------------------


def build_dataset(
        corpus_dir: str | os.PathLike,
        output_file: str | os.PathLike,
        config: RunConfig | None = None,
        log_dir: str | os.PathLike | None = None
) -> int:
    """
    Turn an ingested corpus into dialogue JSONL.

    Every recording is chunked, every chunk with at least one segment becomes
    one dialogue, prompts are perturbed per ``config`` and targets carry the
    clean transcript. Recordings are processed in parallel with
    ``config.jobs`` workers; the output is ordered by (recording id, chunk
    index) and does not depend on the worker count.

    Parameters
    ----------
    corpus_dir : str or Path
        Directory written by :func:`ingest_corpus`.

    output_file : str or Path
        Destination ``.jsonl`` file.

    config : RunConfig, optional
        Chunking, grid, mode and perturbation settings. Default: RunConfig().

    log_dir : str or Path, optional
        Directory where the log file is written. Default is
        ``config.log_dir``, else the current working directory.

    Returns
    -------
    int
        Number of dialogues written.

    Raises
    ------
    ValueError
        If timestamp mode is requested on a corpus with synthesized word
        times, or recordings with segments lack transcripts.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue import RunConfig, build_dataset

        # Training data: perturbed prompts, word timestamps
        build_dataset(
            "corpus/train",
            "data/train.dialogues.jsonl",
            RunConfig(mode="with_timestamps", perturb_p=0.1, jobs=8)
        )

        # Evaluation data: clean prompts
        build_dataset(
            "corpus/eval",
            "data/eval.dialogues.jsonl",
            RunConfig(perturb_p=0.0)
        )
    """
    config = config or RunConfig()
    configure_logging("build_dataset", log_dir or config.log_dir)

    validate_inputs(corpus_dir=corpus_dir, output_file=output_file,
                    config=config)

    manifest = load_manifest(corpus_dir)
    if (config.mode == WITH_TIMESTAMPS
            and manifest.get("word_timing_source") == SYNTHESIZED):
        logger.error("Timestamp mode needs aligned word timings.")
        raise ValueError(
            "Mode 'with_timestamps' requires aligned word timings, but the "
            "corpus word times were synthesized from segment-level "
            "transcripts."
        )
    missing = [
        r["recording_id"] for r in manifest["recordings"]
        if r["segments"] > 0 and r["words"] == 0
    ]
    if missing:
        logger.error(f"Recordings without transcripts: {missing}")
        raise ValueError(f"Missing transcripts for recordings: {missing}")

    durations = {r["recording_id"]: r["duration"]
                 for r in manifest["recordings"]}
    corpus = Path(corpus_dir)
    with open(corpus / DIARIZATION_FILE, "r", encoding="utf-8") as f:
        recordings = read_rttm(f, durations,
                               source_name=str(corpus / DIARIZATION_FILE))
    with open(corpus / WORDS_FILE, "r", encoding="utf-8") as f:
        words = read_word_transcript(f, source_name=str(corpus / WORDS_FILE))

    tasks = [
        (rec, {spk: ws for (rid, spk), ws in words.items()
               if rid == recording_id}, config)
        for recording_id, rec in recordings.items()
    ]
    logger.info(
        f"Building {config.mode} dialogues for {len(tasks)} recordings "
        f"(perturb_p={config.perturb_p}, seed={config.seed}, "
        f"jobs={config.jobs})."
    )

    progress = tqdm(
        total=len(tasks),
        desc="Building dialogues",
        unit=" recording",
        unit_scale=True
    )
    dialogues = []
    start_time = time.time()
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for built in pool.map(build_recording_dialogues, tasks):
                dialogues.extend(built)
                progress.update(1)
    else:
        for task in tasks:
            dialogues.extend(build_recording_dialogues(task))
            progress.update(1)
    progress.close()

    os.makedirs(os.path.dirname(os.path.abspath(output_file)), exist_ok=True)
    with open(output_file, "w", encoding="utf-8", newline="\n") as f:
        count = write_dialogues(dialogues, f)
    turns = sum(len(d.turns) for d in dialogues)
    logger.info(
        f"Wrote {count} dialogues with {turns} turns to {output_file} in "
        f"{time.time() - start_time:.2f}s."
    )
    return count


def build_recording_dialogues(
        task: tuple[Recording, dict[str, list[WordTiming]], RunConfig]
) -> list[Dialogue]:
    """Chunk one recording and build the dialogue of every non-empty chunk."""
    rec, rec_words, config = task
    codec_cfg = config.codec_config()
    pert_cfg = config.perturbation_config()
    label_map = align_speaker_labels(rec.segments, rec_words)

    chunks = chunk_recording(rec, config.min_chunk, config.max_chunk,
                             config.min_clip_duration)
    dialogues = []
    for chunk in chunks:
        if not chunk.segments:
            logger.info(f"Chunk '{chunk.chunk_id}' has no speech; skipped.")
            continue
        window = chunk.window
        is_last = window.end_cs == rec.duration_cs
        window_words = {
            spk: [w for w in ws
                  if _midpoint_in_window(w, window.start_cs, window.end_cs,
                                         is_last)]
            for spk, ws in rec_words.items()
        }
        absolute = [
            DiarSegment(seg.speaker, seg.interval.shift(window.start_cs))
            for seg in chunk.segments
        ]
        assigned = assign_words_to_segments(absolute, window_words,
                                            label_map)
        transcripts = [rebase_words(ws, window) for ws in assigned]
        dialogues.append(build_dialogue(chunk, transcripts, config.mode,
                                        pert_cfg, codec_cfg))
    return dialogues


def validate_inputs(
        corpus_dir: str | os.PathLike,
        output_file: str | os.PathLike,
        config: RunConfig
) -> None:
    """
    Validate the inputs of :func:`build_dataset`.

    Raises
    ------
    TypeError
        If an argument has the wrong type.

    FileNotFoundError
        If ``corpus_dir`` is not an ingested corpus directory.
    """
    if not isinstance(corpus_dir, (str, os.PathLike)):
        raise TypeError(
            f"'corpus_dir' must be a directory path (str or PathLike). "
            f"Got {type(corpus_dir).__name__}."
        )
    if not os.path.isdir(corpus_dir):
        raise FileNotFoundError(
            f"'corpus_dir' must be an existing directory. Path provided: "
            f"{corpus_dir}"
        )
    for name in (DIARIZATION_FILE, WORDS_FILE):
        if not os.path.isfile(os.path.join(corpus_dir, name)):
            raise FileNotFoundError(
                f"Corpus '{corpus_dir}' lacks {name}; run ingest first."
            )
    if not isinstance(output_file, (str, os.PathLike)):
        raise TypeError(
            f"'output_file' must be a file path (str or PathLike). "
            f"Got {type(output_file).__name__}."
        )
    if not isinstance(config, RunConfig):
        raise TypeError(
            f"'config' must be a RunConfig. Got {type(config).__name__}."
        )


# Level 1 function definitions -------------------------------------------------


def _midpoint_in_window(
        word: WordTiming,
        start_cs: int,
        end_cs: int,
        closed: bool
) -> bool:
    doubled = word.interval.start_cs + word.interval.end_cs
    if closed:
        return 2 * start_cs <= doubled <= 2 * end_cs
    return 2 * start_cs <= doubled < 2 * end_cs
