"""Pipeline wiring: enhance -> classify -> coverage, plus flat config files.

Coverage runs only when the classifier calls the image depopulated; a fully
populated field is reported as 100% populated by classification alone (the
count would be trivially uninformative). ``force_coverage`` overrides that
skip for analysts who want counts regardless.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from . import classifier as clf
from . import superres as sr
from .coverage import coverage_report
from .images import ImageBuffer, denormalize, load_image, normalize


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for reporting."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    outscale: int = 1
    threshold_user: float = 5.0
    sr_model: str | None = None
    classifier_model: str | None = None
    seed: int = 0
    force_coverage: bool = False
    host: str = "127.0.0.1"
    port: int = 8754
    workdir: str = "."
    static_dir: str | None = None

    def __post_init__(self):
        if self.outscale not in (1, 2, 3, 4):
            raise ValueError(f"outscale must be 1..4, got {self.outscale}")
        if not 0.0 <= self.threshold_user <= 10.0:
            raise ValueError(f"threshold must be in [0, 10], got {self.threshold_user}")


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment. Values are parsed
    as int, float, or bool when they look like one, else kept as strings."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = _coerce(value.strip())
    return values


def _coerce(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip("\"'")


class ModelStore:
    """Lazily loaded classifier/generator shared by CLI and serve mode."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._classifier = None
        self._generators: dict = {}

    def classifier(self):
        if self._classifier is None:
            if not self.config.classifier_model:
                raise FileNotFoundError(
                    "no classifier model configured; train one with "
                    "'canecover train-classifier' and pass --classifier-model"
                )
            self._classifier = clf.load_classifier_model(self.config.classifier_model)
        return self._classifier

    def generator(self, out_scale: int):
        if out_scale not in self._generators:
            if not self.config.sr_model:
                raise FileNotFoundError(
                    "no super-resolution model configured; train one with "
                    "'canecover train-sr' and pass --sr-model"
                )
            self._generators[out_scale] = sr.load_generator_model(self.config.sr_model, out_scale)
        return self._generators[out_scale]


def enhance_image(image: ImageBuffer, params: dict, config: sr.GeneratorConfig) -> ImageBuffer:
    """Run the generator on an 8-bit image and quantize back to 8 bits."""
    tensor = normalize(image)
    if tensor.shape[0] == 1:
        tensor = tensor.repeat(3, axis=0)
    return denormalize(sr.generator_forward(tensor, config, params))


def run_pipeline(image_path, config: PipelineConfig, models: ModelStore | None = None) -> dict:
    """Full enhance -> classify -> coverage run; returns the result document.

    All fields except ``timings_ms`` are deterministic for fixed models and
    seed.
    """
    models = models or ModelStore(config)
    timings = {}

    def staged(stage, fn):
        start = time.perf_counter()
        try:
            value = fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        timings[stage] = round((time.perf_counter() - start) * 1000.0, 3)
        return value

    image = staged("load", lambda: load_image(image_path))
    if config.outscale > 1:
        params, gen_config = models.generator(config.outscale)
        image = staged("enhance", lambda: enhance_image(image, params, gen_config))
    clf_params, clf_config = models.classifier()
    prediction = staged("classify", lambda: clf.predict(image, clf_params, clf_config))

    result = {
        "input": str(image_path),
        "outscale": config.outscale,
        "threshold_user": float(config.threshold_user),
        "prediction": prediction.to_json_dict(),
        "coverage_skipped": False,
        "coverage": None,
        "populated_pct_by_classification": None,
    }
    if prediction.label == "despoblada" or config.force_coverage:
        report, _ = staged("coverage", lambda: coverage_report(image, config.threshold_user))
        result["coverage"] = report.to_json_dict()
    else:
        # fully populated by classification: counting would be uninformative
        result["coverage_skipped"] = True
        result["populated_pct_by_classification"] = 100.0
    result["timings_ms"] = timings
    return result
