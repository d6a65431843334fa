import argparse
import sys
from pathlib import Path
from typing import Any, Sequence

from .build_dataset import build_dataset
from .exceptions import BackendError, ParseError
from .ingest_corpus import ingest_corpus
from .metrics import report_summary
from .run_config import RunConfig, resolve_run_config
from .run_simulation import compose_from_run_log, simulate_hypotheses
from .score_hypotheses import report_scores, score_hypotheses
from .token_codec import MODES

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_RUNTIME_ERROR = 3

# Flag destinations that map onto RunConfig fields (plus ``noise``).
CONFIG_FLAGS = (
    "seed", "jobs", "delta_t", "min_chunk", "max_chunk", "max_speakers",
    "min_clip_duration", "perturb_p", "time_jitter_max", "mode", "setup",
    "collar_der", "collar_tcp", "tokenize", "backend", "backend_timeout",
    "noise", "word_sub_rate", "word_del_rate", "word_ins_rate",
    "speaker_flip_rate", "time_jitter_sd", "log_dir"
)


def main(argv: Sequence[str] | None = None) -> int:
    """
    Entry point of the ``diar-dialogue`` command.

    Returns
    -------
    int
        0 on success, 2 on input or validation errors, 3 on backend or
        runtime errors.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_run_config(_config_flags(args),
                                    getattr(args, "config", None))
        return args.handler(args, config)
    except (ParseError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (BackendError, RuntimeError) as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the six subcommands and the shared run flags."""
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="diar-dialogue",
        description="Diarization-conditioned multi-turn ASR data pipeline: "
                    "ingest, build, simulate, compose, score and report.",
        parents=[common]
    )
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser(
        "ingest", parents=[common],
        help="Normalize RTTM and transcripts into a corpus directory."
    )
    ingest.add_argument("--rttm", nargs="+", required=True, type=Path,
                        help="Diarization RTTM files.")
    ingest.add_argument("--transcripts", nargs="+", default=[], type=Path,
                        help="CTM word alignments or SegLST JSON files.")
    ingest.add_argument("--duration", action="append", default=[],
                        metavar="RECORDING=SECONDS",
                        help="Recording duration override; repeatable.")
    ingest.add_argument("--output-dir", dest="output_dir", required=True,
                        type=Path, help="Corpus directory to create.")
    ingest.set_defaults(handler=_run_ingest)

    build = commands.add_parser(
        "build", parents=[common],
        help="Chunk an ingested corpus into dialogue JSONL."
    )
    build.add_argument("corpus_dir", type=Path)
    build.add_argument("output_file", type=Path)
    build.set_defaults(handler=_run_build)

    simulate = commands.add_parser(
        "simulate", parents=[common],
        help="Decode dialogues with a backend and compose hypotheses."
    )
    simulate.add_argument("dialogues", type=Path)
    simulate.add_argument("output_dir", type=Path)
    simulate.set_defaults(handler=_run_simulate)

    compose = commands.add_parser(
        "compose", parents=[common],
        help="Recompose hypotheses from a run log without decoding."
    )
    compose.add_argument("dialogues", type=Path)
    compose.add_argument("run_log", type=Path)
    compose.add_argument("output_dir", type=Path)
    compose.set_defaults(handler=_run_compose)

    score = commands.add_parser(
        "score", parents=[common],
        help="Score a hypothesis SegLST with DER, cpWER and tcpWER."
    )
    score.add_argument("reference", type=Path)
    score.add_argument("hypothesis", type=Path)
    score.add_argument("output_dir", type=Path)
    score.set_defaults(handler=_run_score)

    report = commands.add_parser(
        "report", parents=[common],
        help="Compare the aggregate scores of several score reports."
    )
    report.add_argument("reports", nargs="+", type=Path)
    report.add_argument("--output", type=Path, default=None,
                        help="Also write the table as TSV.")
    report.set_defaults(handler=_run_report)
    return parser


# Level 1 function definitions -------------------------------------------------


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by
    # the subparser's default.
    common = argparse.ArgumentParser(add_help=False,
                                     argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path,
                        help="JSON file with RunConfig overrides.")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int,
                        help="Parallel workers across recordings/sessions.")
    common.add_argument("--delta-t", dest="delta_t", type=float)
    common.add_argument("--min-chunk", dest="min_chunk", type=float)
    common.add_argument("--max-chunk", dest="max_chunk", type=float)
    common.add_argument("--max-speakers", dest="max_speakers", type=int)
    common.add_argument("--min-clip-duration", dest="min_clip_duration",
                        type=float)
    common.add_argument("--perturb-p", dest="perturb_p", type=float)
    common.add_argument("--time-jitter-max", dest="time_jitter_max",
                        type=float)
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--setup",
                        help="e.g. dia-spk,llm-time; 'all' for all four.")
    common.add_argument("--collar-der", dest="collar_der", type=float,
                        nargs="+")
    common.add_argument("--collar-tcp", dest="collar_tcp", type=float)
    common.add_argument("--tokenize", choices=("word", "char"))
    common.add_argument("--backend",
                        help="'mock' or 'external:<command|tcp://host:port>'.")
    common.add_argument("--backend-timeout", dest="backend_timeout",
                        type=float)
    common.add_argument("--noise", type=float,
                        help="Mock substitution/deletion/insertion/flip rate.")
    common.add_argument("--word-sub-rate", dest="word_sub_rate", type=float)
    common.add_argument("--word-del-rate", dest="word_del_rate", type=float)
    common.add_argument("--word-ins-rate", dest="word_ins_rate", type=float)
    common.add_argument("--speaker-flip-rate", dest="speaker_flip_rate",
                        type=float)
    common.add_argument("--time-jitter-sd", dest="time_jitter_sd",
                        type=float)
    common.add_argument("--log-dir", dest="log_dir")
    return common


def _config_flags(args: argparse.Namespace) -> dict[str, Any]:
    flags = {name: getattr(args, name) for name in CONFIG_FLAGS
             if hasattr(args, name)}
    if "collar_der" in flags:
        flags["collar_der"] = tuple(flags["collar_der"])
    return flags


def _run_ingest(args: argparse.Namespace, config: RunConfig) -> int:
    durations = {}
    for item in args.duration:
        recording_id, sep, seconds = item.partition("=")
        if not sep or not recording_id:
            raise ValueError(
                f"--duration expects RECORDING=SECONDS. Got {item!r}."
            )
        durations[recording_id] = float(seconds)
    manifest = ingest_corpus(args.rttm, args.transcripts, args.output_dir,
                             durations=durations, log_dir=config.log_dir)
    print(f"Ingested {len(manifest['recordings'])} recordings into "
          f"{args.output_dir}")
    return EXIT_OK


def _run_build(args: argparse.Namespace, config: RunConfig) -> int:
    count = build_dataset(args.corpus_dir, args.output_file, config)
    print(f"Wrote {count} dialogues to {args.output_file}")
    return EXIT_OK


def _run_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    written = simulate_hypotheses(args.dialogues, args.output_dir, config)
    for setup, path in written.items():
        print(f"{setup}\t{path}")
    return EXIT_OK


def _run_compose(args: argparse.Namespace, config: RunConfig) -> int:
    written = compose_from_run_log(args.dialogues, args.run_log,
                                   args.output_dir, config)
    for setup, path in written.items():
        print(f"{setup}\t{path}")
    return EXIT_OK


def _run_score(args: argparse.Namespace, config: RunConfig) -> int:
    report = score_hypotheses(args.reference, args.hypothesis,
                              args.output_dir, config)
    summary = report_summary(report)
    # Aggregate rows come last.
    overall = summary.tail(len(report.aggregate.der) + 2)
    print(overall[["metric", "value"]].to_string(index=False))
    return EXIT_OK


def _run_report(args: argparse.Namespace, config: RunConfig) -> int:
    table = report_scores(args.reports, args.output)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
