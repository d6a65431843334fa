import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Mapping, TextIO

from tqdm import tqdm

from .dialogue_builder import Dialogue, read_dialogues
from .exceptions import ParseError
from .external_backend import external_backend
from .inference_harness import (
    FAILED,
    OK,
    ComposedHypothesis,
    EvalSetup,
    RecognizerBackend,
    TurnResponse,
    compose_hypothesis,
    mock_oracle_backend,
    references_from_dialogues,
    run_dialogue
)
from .ingest_io import write_seglst
from .logging_config import configure_logging
from .run_config import RunConfig

logger = logging.getLogger(__name__)

RUN_LOG_FILE = "run_log.jsonl"


# Exported function definitions ------------------------------------------------


def simulate_hypotheses(
        dialogues_file: str | os.PathLike,
        output_dir: str | os.PathLike,
        config: RunConfig | None = None,
        log_dir: str | os.PathLike | None = None
) -> dict[str, Path]:
    """
    Decode every dialogue with the configured backend and compose
    hypotheses.

    Dialogues run concurrently on ``config.jobs`` sessions; each dialogue is
    decoded turn by turn. The raw responses go to ``run_log.jsonl`` so that
    :func:`compose_from_run_log` can recompose any setup later.

    Parameters
    ----------
    dialogues_file : str or Path
        Dialogue JSONL from :func:`build_dataset`.

    output_dir : str or Path
        Receives ``run_log.jsonl`` and one
        ``hypothesis.<setup>.seglst.json`` per evaluation setup.

    config : RunConfig, optional
        Backend, mock noise, setup and grid settings.

    log_dir : str or Path, optional
        Directory where the log file is written. Default is
        ``config.log_dir``, else the current working directory.

    Returns
    -------
    dict[str, Path]
        Hypothesis file per setup name.

    Raises
    ------
    BackendError
        If the backend cannot be started.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue import RunConfig, simulate_hypotheses

        # Mock oracle with 10 % word and speaker noise, all four setups
        simulate_hypotheses(
            "data/eval.dialogues.jsonl",
            "runs/mock",
            RunConfig(setup="all", word_sub_rate=0.1, speaker_flip_rate=0.1)
        )

        # External recognizer over stdin/stdout
        simulate_hypotheses(
            "data/eval.dialogues.jsonl",
            "runs/model",
            RunConfig(backend="external:python serve.py --ckpt last.pt")
        )
    """
    config = config or RunConfig()
    configure_logging("simulate_hypotheses", log_dir or config.log_dir)
    dialogues = _load_dialogues(dialogues_file, config)
    backend = create_backend(config, dialogues)

    progress = tqdm(
        total=len(dialogues),
        desc="Decoding dialogues",
        unit=" dialogue",
        unit_scale=True
    )

    def decode(d: Dialogue) -> list[TurnResponse]:
        responses = run_dialogue(d, backend)
        progress.update(1)
        return responses

    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        all_responses = list(pool.map(decode, dialogues))
    progress.close()

    failed = sum(r.status == FAILED for rs in all_responses for r in rs)
    if failed:
        logger.warning(f"{failed} turns failed; their responses are empty.")

    composed = compose_all(dialogues, all_responses, config)
    output_dir = Path(output_dir)
    os.makedirs(output_dir, exist_ok=True)
    with open(output_dir / RUN_LOG_FILE, "w", encoding="utf-8",
              newline="\n") as f:
        write_run_log(dialogues, all_responses, f, composed)
    logger.info(f"Wrote run log to {output_dir / RUN_LOG_FILE}")

    return _write_hypotheses(composed, output_dir)


def compose_from_run_log(
        dialogues_file: str | os.PathLike,
        run_log_file: str | os.PathLike,
        output_dir: str | os.PathLike,
        config: RunConfig | None = None,
        log_dir: str | os.PathLike | None = None
) -> dict[str, Path]:
    """
    Recompose hypotheses from a recorded run without decoding again.

    Returns
    -------
    dict[str, Path]
        Hypothesis file per setup name.

    Raises
    ------
    ParseError
        If the run log is malformed or misses turns of a dialogue.
    """
    config = config or RunConfig()
    configure_logging("compose_hypotheses", log_dir or config.log_dir)
    dialogues = _load_dialogues(dialogues_file, config)
    if not os.path.isfile(run_log_file):
        raise FileNotFoundError(f"Run log '{run_log_file}' not found.")
    with open(run_log_file, "r", encoding="utf-8") as f:
        recorded = read_run_log(f, source_name=os.fspath(run_log_file))

    all_responses = []
    for d in dialogues:
        responses = recorded.get(d.chunk_id, [])
        if [r.turn_index for r in responses] != list(range(len(d.turns))):
            logger.error(f"Run log does not cover all turns of {d.chunk_id}.")
            raise ParseError(
                f"run log misses turns of dialogue '{d.chunk_id}'",
                source=os.fspath(run_log_file)
            )
        all_responses.append(responses)
    composed = compose_all(dialogues, all_responses, config)
    return _write_hypotheses(composed, Path(output_dir))


def create_backend(
        config: RunConfig,
        dialogues: list[Dialogue]
) -> RecognizerBackend:
    """Instantiate the backend named by ``config.backend``."""
    if config.backend == "mock":
        references, speakers = references_from_dialogues(dialogues)
        return mock_oracle_backend(references, config.mock_config(), speakers,
                                   config.codec_config())
    return external_backend(config.backend, config.backend_timeout)


def compose_all(
        dialogues: list[Dialogue],
        all_responses: list[list[TurnResponse]],
        config: RunConfig
) -> dict[EvalSetup, list[ComposedHypothesis]]:
    """Compose every dialogue under every configured evaluation setup."""
    codec_cfg = config.codec_config()
    return {
        setup: [
            compose_hypothesis(d, responses, setup, codec_cfg)
            for d, responses in zip(dialogues, all_responses)
        ]
        for setup in config.eval_setups()
    }


def write_run_log(
        dialogues: Iterable[Dialogue],
        responses: Iterable[list[TurnResponse]],
        stream: TextIO,
        composed: Mapping[EvalSetup, list[ComposedHypothesis]] | None = None
) -> None:
    """
    One JSON line per turn: chunk, turn, status, raw response, diagnostic.

    With ``composed`` each line also lists, per setup, whether the speaker or
    the times fell back to the diarization and how many tokens were dropped.
    """
    fallbacks = {}
    for setup, hypotheses in (composed or {}).items():
        for hypothesis in hypotheses:
            for diag in hypothesis.diagnostics:
                fallbacks.setdefault((diag.chunk_id, diag.turn_index), {})[
                    setup.name] = {
                        "speaker_fallback": diag.speaker_fallback,
                        "time_fallback": diag.time_fallback,
                        "dropped_tokens": diag.dropped_tokens,
                    }
    for d, turn_responses in zip(dialogues, responses):
        for response in turn_responses:
            record = {
                "chunk_id": d.chunk_id,
                "turn_index": response.turn_index,
                "status": response.status,
                "response": response.text,
                "diagnostic": response.diagnostic,
            }
            key = (d.chunk_id, response.turn_index)
            if key in fallbacks:
                record["fallbacks"] = fallbacks[key]
            stream.write(json.dumps(record, ensure_ascii=False))
            stream.write("\n")


def read_run_log(
        stream: TextIO,
        source_name: str | None = None
) -> dict[str, list[TurnResponse]]:
    """Responses per chunk id, in turn order."""
    recorded = {}
    for line_number, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            status = data["status"]
            if status not in (OK, FAILED):
                raise ValueError(f"unknown status {status!r}")
            response = TurnResponse(
                turn_index=int(data["turn_index"]),
                text=str(data["response"]),
                status=status,
                diagnostic=data.get("diagnostic")
            )
            recorded.setdefault(str(data["chunk_id"]), []).append(response)
        except json.JSONDecodeError as e:
            raise ParseError(f"Invalid JSON: {e.msg}", line=line_number,
                             source=source_name) from None
        except KeyError as e:
            raise ParseError(f"missing key {e}", line=line_number,
                             source=source_name) from None
        except (TypeError, ValueError) as e:
            raise ParseError(str(e), line=line_number,
                             source=source_name) from None
    for responses in recorded.values():
        responses.sort(key=lambda r: r.turn_index)
    return recorded


def hypothesis_file_name(setup: EvalSetup) -> str:
    return f"hypothesis.{setup.name.replace(',', '_')}.seglst.json"


# Level 1 function definitions -------------------------------------------------


def _load_dialogues(
        dialogues_file: str | os.PathLike,
        config: RunConfig
) -> list[Dialogue]:
    if not os.path.isfile(dialogues_file):
        logger.error(f"Dialogue file '{dialogues_file}' not found.")
        raise FileNotFoundError(f"Dialogue file '{dialogues_file}' not found.")
    with open(dialogues_file, "r", encoding="utf-8") as f:
        dialogues = read_dialogues(f, config.codec_config(),
                                   source_name=os.fspath(dialogues_file))
    logger.info(f"Loaded {len(dialogues)} dialogues from {dialogues_file}")
    return dialogues


def _write_hypotheses(
        composed: Mapping[EvalSetup, list[ComposedHypothesis]],
        output_dir: Path
) -> dict[str, Path]:
    os.makedirs(output_dir, exist_ok=True)
    written = {}
    for setup, hypotheses in composed.items():
        entries = [e for h in hypotheses for e in h.entries]
        diagnostics = [x for h in hypotheses for x in h.diagnostics]
        speaker_fallbacks = sum(x.speaker_fallback for x in diagnostics)
        time_fallbacks = sum(x.time_fallback for x in diagnostics)
        if speaker_fallbacks or time_fallbacks:
            logger.warning(
                f"Setup {setup.name}: {speaker_fallbacks} speaker and "
                f"{time_fallbacks} time fallbacks to the diarization."
            )
        path = output_dir / hypothesis_file_name(setup)
        path.write_text(write_seglst(entries), encoding="utf-8")
        written[setup.name] = path
        logger.info(f"Wrote {len(entries)} segments for {setup.name} to {path}")
    return written
