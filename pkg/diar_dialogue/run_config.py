import json
import os
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

from .inference_harness import ALL_SETUPS, EvalSetup, MockOracleConfig
from .metrics import TokenizationMode
from .perturbation import PerturbationConfig
from .token_codec import MODES, PLAIN, CodecConfig

NOISE_FIELDS = ("word_sub_rate", "word_del_rate", "word_ins_rate",
                "speaker_flip_rate")
ALL_SETUPS_NAME = "all"


@dataclass(frozen=True)
class RunConfig:
    """
    Every tunable of a pipeline run.

    Values come from, in increasing priority: the defaults below, a JSON
    config file with the same field names, and command-line flags.
    """

    delta_t: float = 0.1
    min_chunk: float = 15.0
    max_chunk: float = 25.0
    perturb_p: float = 0.1
    time_jitter_max: float = 0.5
    seed: int = 0
    collar_der: tuple[float, ...] = (0.0,)
    collar_tcp: float = 5.0
    tokenize: str = "word"
    setup: str = "dia-spk,dia-time"
    mode: str = PLAIN
    max_speakers: int = 16
    min_clip_duration: float = 0.05
    jobs: int = 1
    backend: str = "mock"
    backend_timeout: float = 30.0
    word_sub_rate: float = 0.0
    word_del_rate: float = 0.0
    word_ins_rate: float = 0.0
    speaker_flip_rate: float = 0.0
    time_jitter_sd: float = 0.0
    log_dir: str | None = None

    def __post_init__(self) -> None:
        collars = self.collar_der
        if isinstance(collars, (int, float)):
            collars = (collars,)
        object.__setattr__(self, "collar_der",
                           tuple(float(c) for c in collars))
        if not self.collar_der or any(c < 0 for c in self.collar_der):
            raise ValueError(
                f"'collar_der' must be one or more non-negative collars. "
                f"Got {self.collar_der}."
            )
        if self.collar_tcp < 0:
            raise ValueError(
                f"'collar_tcp' must be non-negative. Got {self.collar_tcp}."
            )
        if not 0 < self.min_chunk <= self.max_chunk:
            raise ValueError(
                f"Chunk durations must satisfy 0 < min_chunk <= max_chunk. "
                f"Got {self.min_chunk} and {self.max_chunk}."
            )
        if self.mode not in MODES:
            raise ValueError(
                f"'mode' must be one of {MODES}. Got {self.mode!r}."
            )
        if (isinstance(self.jobs, bool) or not isinstance(self.jobs, int)
                or self.jobs < 1):
            raise ValueError(
                f"'jobs' must be a positive integer. Got {self.jobs!r}."
            )
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValueError(f"'seed' must be an integer. Got {self.seed!r}.")
        if self.backend != "mock" and not self.backend.startswith("external:"):
            raise ValueError(
                f"'backend' must be 'mock' or 'external:<endpoint>'. "
                f"Got {self.backend!r}."
            )
        # Raise early on invalid derived settings.
        self.codec_config()
        self.perturbation_config()
        self.mock_config()
        self.tokenization()
        self.eval_setups()

    def codec_config(self) -> CodecConfig:
        return CodecConfig.for_max_chunk(self.max_chunk, self.delta_t,
                                         self.max_speakers)

    def perturbation_config(self) -> PerturbationConfig:
        return PerturbationConfig(p=self.perturb_p,
                                  time_jitter_max=self.time_jitter_max,
                                  seed=self.seed)

    def mock_config(self) -> MockOracleConfig:
        return MockOracleConfig(
            word_sub_rate=self.word_sub_rate,
            word_del_rate=self.word_del_rate,
            word_ins_rate=self.word_ins_rate,
            speaker_flip_rate=self.speaker_flip_rate,
            time_jitter_sd=self.time_jitter_sd,
            seed=self.seed
        )

    def tokenization(self) -> TokenizationMode:
        return TokenizationMode(mode=self.tokenize)

    def eval_setups(self) -> tuple[EvalSetup, ...]:
        if self.setup == ALL_SETUPS_NAME:
            return ALL_SETUPS
        return (EvalSetup.parse(self.setup),)


def load_run_config(config_file: str | os.PathLike) -> dict[str, Any]:
    """
    Read RunConfig overrides from a JSON object.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.

    ValueError
        If the file is not a JSON object or names an unknown field.
    """
    if not os.path.isfile(config_file):
        raise FileNotFoundError(f"Config file '{config_file}' not found.")
    with open(config_file, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(
                f"{config_file}:{e.lineno}: invalid JSON: {e.msg}"
            ) from None
    if not isinstance(data, dict):
        raise ValueError(f"Config file '{config_file}' must hold a JSON object.")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(
            f"Config file '{config_file}' has unknown keys: {unknown}"
        )
    return data


def resolve_run_config(
        flags: Mapping[str, Any] | None = None,
        config_file: str | os.PathLike | None = None
) -> RunConfig:
    """
    Merge defaults, an optional config file and flag values.

    ``None`` flag values count as unset. A ``noise`` flag sets all four mock
    word and speaker rates at once; the individual rates still win over it.
    """
    values = load_run_config(config_file) if config_file is not None else {}
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    noise = flags.pop("noise", None)
    if noise is not None:
        for name in NOISE_FIELDS:
            values[name] = noise
    known = {f.name for f in fields(RunConfig)}
    values.update({k: v for k, v in flags.items() if k in known})
    try:
        return replace(RunConfig(), **values)
    except TypeError as e:
        raise ValueError(f"Invalid configuration: {e}") from None
