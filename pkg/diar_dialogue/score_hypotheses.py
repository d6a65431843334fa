import json
import logging
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import pandas as pd
from tqdm import tqdm

from .exceptions import ParseError
from .ingest_io import SegLstEntry, read_seglst
from .logging_config import configure_logging
from .metrics import (
    ScoreReport,
    SessionScores,
    TokenizationMode,
    aggregate,
    compare_reports,
    report_summary,
    score_session
)
from .run_config import RunConfig

logger = logging.getLogger(__name__)

SCORE_REPORT_FILE = "score_report.json"
SCORE_SUMMARY_FILE = "score_summary.tsv"


# Exported function definitions ------------------------------------------------


def score_hypotheses(
        reference_file: str | os.PathLike,
        hypothesis_file: str | os.PathLike,
        output_dir: str | os.PathLike,
        config: RunConfig | None = None,
        log_dir: str | os.PathLike | None = None
) -> ScoreReport:
    """
    Score a hypothesis SegLST against a reference SegLST.

    Every session is scored with DER (at each collar in
    ``config.collar_der``), cpWER and tcpWER; sessions are scored in
    parallel with ``config.jobs`` workers and pooled in session-id order.

    Parameters
    ----------
    reference_file : str or Path
        Reference SegLST, e.g. ``reference.seglst.json`` of an ingested
        corpus.

    hypothesis_file : str or Path
        Hypothesis SegLST written by :func:`simulate_hypotheses`.

    output_dir : str or Path
        Receives ``score_report.json`` and ``score_summary.tsv``.

    config : RunConfig, optional
        Collars and tokenization. Default: RunConfig().

    log_dir : str or Path, optional
        Directory where the log file is written. Default is
        ``config.log_dir``, else the current working directory.

    Returns
    -------
    ScoreReport
        Per-session and aggregate scores.

    Raises
    ------
    ValueError
        If the two files do not cover the same sessions.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue import RunConfig, score_hypotheses

        report = score_hypotheses(
            "corpus/eval/reference.seglst.json",
            "runs/mock/hypothesis.dia-spk_dia-time.seglst.json",
            "runs/mock/scores",
            RunConfig(collar_der=(0.0, 0.5), jobs=4)
        )
        report.aggregate.cpwer.rate

        # runs/mock/scores/
        # ├── score_report.json
        # └── score_summary.tsv
    """
    config = config or RunConfig()
    configure_logging("score_hypotheses", log_dir or config.log_dir)

    reference = _load_sessions(reference_file)
    hypothesis = _load_sessions(hypothesis_file)
    asymmetric = sorted(set(reference) ^ set(hypothesis))
    if asymmetric:
        logger.error(f"Sessions present on one side only: {asymmetric}")
        raise ValueError(
            f"Reference and hypothesis cover different sessions; "
            f"asymmetric sessions: {asymmetric}"
        )

    tok = config.tokenization()
    tasks = [
        (session_id, reference[session_id], hypothesis[session_id],
         config.collar_der, config.collar_tcp, tok)
        for session_id in sorted(reference)
    ]
    logger.info(
        f"Scoring {len(tasks)} sessions (collar_der={config.collar_der}, "
        f"collar_tcp={config.collar_tcp}, tokenize={tok.mode})."
    )

    progress = tqdm(
        total=len(tasks),
        desc="Scoring sessions",
        unit=" session",
        unit_scale=True
    )
    scored = []
    start_time = time.time()
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for result in pool.map(score_session_task, tasks):
                scored.append(result)
                progress.update(1)
    else:
        for task in tasks:
            scored.append(score_session_task(task))
            progress.update(1)
    progress.close()

    report = aggregate(scored, tok=tok, tcp_collar=config.collar_tcp)
    write_score_report(report, output_dir)

    cp_name, tcp_name = tok.error_rate_names
    logger.info(
        f"Scored {len(scored)} sessions in {time.time() - start_time:.2f}s: "
        f"{cp_name} {100 * report.aggregate.cpwer.rate:.2f}%, "
        f"{tcp_name} {100 * report.aggregate.tcpwer.rate:.2f}%."
    )
    return report


def score_session_task(
        task: tuple[str, list[SegLstEntry], list[SegLstEntry],
                    Sequence[float], float, TokenizationMode]
) -> tuple[str, SessionScores]:
    """Score one (session, reference, hypothesis, collars, tokenization)."""
    session_id, ref, hyp, der_collars, tcp_collar, tok = task
    return session_id, score_session(ref, hyp, der_collars, tcp_collar, tok)


def write_score_report(
        report: ScoreReport,
        output_dir: str | os.PathLike
) -> tuple[Path, Path]:
    """Write the report JSON and its flat TSV summary into ``output_dir``."""
    output_dir = Path(output_dir)
    os.makedirs(output_dir, exist_ok=True)
    json_path = output_dir / SCORE_REPORT_FILE
    json_path.write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8"
    )
    tsv_path = output_dir / SCORE_SUMMARY_FILE
    report_summary(report).to_csv(tsv_path, sep="\t", index=False,
                                  lineterminator="\n")
    logger.info(f"Wrote {json_path} and {tsv_path}")
    return json_path, tsv_path


def load_score_report(report_file: str | os.PathLike) -> ScoreReport:
    """
    Read a report written by :func:`score_hypotheses`.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.

    ParseError
        If the file is not a score report.
    """
    if not os.path.isfile(report_file):
        raise FileNotFoundError(f"Score report '{report_file}' not found.")
    with open(report_file, "r", encoding="utf-8") as f:
        try:
            return ScoreReport.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise ParseError(f"Invalid JSON: {e.msg}", line=e.lineno,
                             source=os.fspath(report_file)) from None
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"not a score report ({e})",
                             source=os.fspath(report_file)) from None


def report_scores(
        report_files: Sequence[str | os.PathLike],
        output_file: str | os.PathLike | None = None
) -> pd.DataFrame:
    """
    Compare the aggregate scores of several reports side by side.

    Systems are named after the directory holding each report, falling back
    to the full path when two directories share a name.

    Parameters
    ----------
    report_files : sequence of str or Path
        ``score_report.json`` files.

    output_file : str or Path, optional
        Where to write the table as TSV.

    Returns
    -------
    pandas.DataFrame
        One row per report; rates in percent.

    Examples
    --------
    .. code-block:: python

        from diar_dialogue import report_scores

        table = report_scores([
            "runs/dia_dia/scores/score_report.json",
            "runs/llm_llm/scores/score_report.json",
        ])
        print(table.to_string(index=False))
    """
    if not report_files:
        raise ValueError("At least one score report is required.")
    names = [Path(path).parent.name or os.fspath(path)
             for path in report_files]
    if len(set(names)) < len(names):
        names = [os.fspath(path) for path in report_files]
    reports = {name: load_score_report(path)
               for name, path in zip(names, report_files)}
    table = compare_reports(reports)
    if output_file is not None:
        os.makedirs(os.path.dirname(os.path.abspath(output_file)),
                    exist_ok=True)
        table.to_csv(output_file, sep="\t", index=False, lineterminator="\n")
        logger.info(f"Wrote comparison of {len(reports)} reports to "
                    f"{output_file}")
    return table


# Level 1 function definitions -------------------------------------------------


def _load_sessions(
        seglst_file: str | os.PathLike
) -> dict[str, list[SegLstEntry]]:
    if not os.path.isfile(seglst_file):
        logger.error(f"SegLST file '{seglst_file}' not found.")
        raise FileNotFoundError(f"SegLST file '{seglst_file}' not found.")
    with open(seglst_file, "r", encoding="utf-8") as f:
        try:
            entries = read_seglst(f, source_name=os.fspath(seglst_file))
        except ParseError as e:
            logger.error(f"Parse Error: {e}")
            raise
    sessions = defaultdict(list)
    for entry in entries:
        sessions[entry.session_id].append(entry)
    logger.info(f"Read {len(entries)} segments of {len(sessions)} sessions "
                f"from {seglst_file}")
    return dict(sessions)
