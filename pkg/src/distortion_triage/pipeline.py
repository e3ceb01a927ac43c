"""Classify each image with the voting ensemble, route it to a defilter, keep provenance."""

from __future__ import annotations

import json
import logging
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .defilters import defilter_name, restore
from .errors import ConfigError, FormatError, IoError, TriageError
from .features import extract_features
from .gbdt import GbdtEnsemble, load_model, mode_vote
from .image_core import Image, load_image, save_image
from .synth import DistortionClass

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


@dataclass(frozen=True)
class PipelineConfig:
    """Where the model lives, per-defilter keyword overrides, output directory and worker count.

    ``defilter_params`` maps a defilter name such as ``"denoise"`` to the
    keyword arguments passed to it.
    """

    model_path: str | os.PathLike | None = None
    defilter_params: dict = field(default_factory=dict)
    output_dir: str | os.PathLike | None = None
    workers: int = 1

    def __post_init__(self):
        if int(self.workers) < 1:
            raise ConfigError("worker count must be >= 1")
        if self.model_path is not None and not Path(self.model_path).is_file():
            raise ConfigError(f"model file not found: {self.model_path}")
        for name, params in self.defilter_params.items():
            if not isinstance(params, dict):
                raise ConfigError(f"overrides for {name!r} must be a mapping")

    def load_ensemble(self) -> GbdtEnsemble:
        if self.model_path is None:
            raise ConfigError("no model path configured")
        try:
            model = load_model(self.model_path)
        except (FormatError, IoError) as exc:
            raise ConfigError(f"cannot load model {self.model_path}: {exc}") from exc
        if not isinstance(model, GbdtEnsemble):
            raise ConfigError(f"{self.model_path} holds a single model, not an ensemble")
        return model


@dataclass
class ProvenanceRecord:
    input_path: str
    predicted_class: int | None = None
    per_model_votes: list[int] = field(default_factory=list)
    per_model_winning_probabilities: list[float] = field(default_factory=list)
    defilter: str | None = None
    output_path: str | None = None
    wall_time_ms: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def recomputed_class(self) -> int:
        return mode_vote(self.per_model_votes, self.per_model_winning_probabilities)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ProvenanceRecord":
        obj = json.loads(line)
        try:
            return cls(**obj)
        except TypeError as exc:
            raise FormatError(f"malformed provenance record: {exc}") from exc


def output_path_for(input_path: str | os.PathLike, output_dir: str | os.PathLike) -> Path:
    """Restored images keep their input file name; the suffix picks PNG or PNM encoding."""
    return Path(output_dir) / Path(input_path).name


def classify(image: Image, ensemble: GbdtEnsemble):
    return ensemble.predict_mode(extract_features(image))


def process_image(
    image: Image,
    ensemble: GbdtEnsemble,
    config: PipelineConfig,
    input_path: str = "",
    apply_defilter: bool = True,
) -> tuple[Image, ProvenanceRecord]:
    """Features, ensemble vote, routed defilter; writes the result when an output directory is set.

    With ``apply_defilter`` off only the routing decision is recorded and the
    input image is returned as is.
    """
    start = time.perf_counter()
    pred = classify(image, ensemble)
    cls = DistortionClass(pred.label)
    name = defilter_name(cls)
    restored = restore(image, cls, config.defilter_params.get(name)) if apply_defilter else image
    out_path = None
    if apply_defilter and config.output_dir is not None:
        out_path = output_path_for(input_path or "restored.png", config.output_dir)
        save_image(restored, out_path)
    record = ProvenanceRecord(
        input_path=str(input_path),
        predicted_class=int(pred.label),
        per_model_votes=[int(v) for v in pred.per_model_labels],
        per_model_winning_probabilities=[float(p) for p in pred.winning_probabilities],
        defilter=name,
        output_path=None if out_path is None else str(out_path),
        wall_time_ms=(time.perf_counter() - start) * 1000.0,
    )
    return restored, record


def _process_path(path, ensemble, config, apply_defilter=True) -> ProvenanceRecord:
    start = time.perf_counter()
    try:
        image = load_image(path)
        _, record = process_image(image, ensemble, config, str(path), apply_defilter)
        return record
    except (TriageError, OSError, ValueError) as exc:
        logger.warning("failed on %s: %s", path, exc)
        return ProvenanceRecord(
            input_path=str(path),
            wall_time_ms=(time.perf_counter() - start) * 1000.0,
            error=f"{type(exc).__name__}: {exc}",
        )


@dataclass
class BatchResult:
    records: list[ProvenanceRecord]

    @property
    def error_count(self) -> int:
        return sum(not r.ok for r in self.records)

    def class_counts(self) -> dict[str, int]:
        counts = Counter(DistortionClass(r.predicted_class).name for r in self.records if r.ok)
        return {c.name: counts.get(c.name, 0) for c in DistortionClass}


def process_batch(paths, ensemble: GbdtEnsemble, config: PipelineConfig, apply_defilter: bool = True) -> BatchResult:
    """Process every path; records come back in input order and failures stay per item."""
    paths = list(paths)
    if apply_defilter and config.output_dir is not None:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)

    def one(p):
        return _process_path(p, ensemble, config, apply_defilter)

    if config.workers == 1 or len(paths) < 2:
        records = [one(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(one, paths))
    return BatchResult(records)


def list_images(directory: str | os.PathLike) -> list[Path]:
    """Image files directly inside ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def write_provenance(path: str | os.PathLike, records) -> None:
    try:
        with open(path, "w") as fh:
            for r in records:
                fh.write(r.to_json() + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_provenance(path: str | os.PathLike) -> list[ProvenanceRecord]:
    records = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(ProvenanceRecord.from_json(line))
        except (json.JSONDecodeError, FormatError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return records
