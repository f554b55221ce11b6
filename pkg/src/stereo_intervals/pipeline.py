"""Scene and manifest pipelines.

A scene run flows through fixed stages: ingest, census, cost-volume, sgm,
confidence, possibility, disparity, intervals, refine, filter,
regularize, metrics, write. Errors are re-raised as StageError tagged
with the stage name so callers (service, CLI) can report where a run
died. The expensive stages (everything up to the possibility volume) are
shared across the variants of an alpha sweep.

Configuration is a flat set of keys (see PipelineConfig) resolvable from
three layers with increasing precedence: built-in defaults, a key=value
config file, explicit overrides (CLI flags / request fields).
"""

from __future__ import annotations

import hashlib
import json
import time
import types
import typing
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import confidence as conf
from . import costvolume as cvol
from . import dataio
from . import disparity as disp_mod
from . import metrics as metrics_mod
from . import possibility as poss
from . import sgm as sgm_mod

SWEEP_ALPHAS = (0.5, 0.8, 0.9, 0.98)
SWEEP_REG_ALPHA = 0.9


class StageError(RuntimeError):
    """A pipeline stage failed; .stage names the culprit."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class PipelineConfig:
    """Flat configuration for one scene run. All keys are config-file keys."""

    scene: str = "scene"
    left: str | None = None
    right: str | None = None
    truth: str | None = None
    calib: str | None = None
    import_cv: str | None = None
    export_cv: str | None = None
    out_dir: str | None = None
    profile_row: int | None = None

    d_min: int | None = None
    d_max: int | None = None
    convention: str = "negative"
    truth_sign: float | None = None
    truth_scale: float = 1.0
    truth_zero_invalid: bool = False

    census_rows: int = 5
    census_cols: int = 5

    p1: float = 8.0
    p2: float = 32.0
    num_paths: int = 8
    normalize_paths: bool = True

    alpha: float = 0.9
    baseline: bool = False
    baseline_threshold: float = 0.9

    eta_max: float = 2.0
    k_max: int = 10
    tau: float = 0.6
    ambiguity_source: str = "raw"

    regularize: bool = True
    half_height: int = 2
    q_low: float = 0.10
    q_high: float = 0.90

    vfit: bool = True
    median: bool = True
    median_kernel: int = 3

    dump_csv: bool = False

    def validate(self) -> None:
        have_pair = self.left is not None and self.right is not None
        if self.import_cv is not None:
            if self.left is not None or self.right is not None:
                raise ValueError("give either an image pair or import_cv, not both")
        elif not have_pair:
            raise ValueError("a scene needs left+right images or an imported cost volume")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 < self.baseline_threshold <= 1:
            raise ValueError(f"baseline_threshold must be in (0, 1], got {self.baseline_threshold}")
        if not 0 <= self.tau <= 1:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if not 0 <= self.q_low <= self.q_high <= 1:
            raise ValueError(f"need 0 <= q_low <= q_high <= 1, got {self.q_low}, {self.q_high}")
        if self.eta_max <= 0 or self.k_max < 1:
            raise ValueError("eta_max must be positive and k_max >= 1")
        if self.half_height < 0:
            raise ValueError(f"half_height must be >= 0, got {self.half_height}")
        if self.truth_scale <= 0:
            raise ValueError(f"truth_scale must be positive, got {self.truth_scale}")
        if self.profile_row is not None and self.profile_row < 0:
            raise ValueError(f"profile_row must be >= 0, got {self.profile_row}")
        if self.ambiguity_source not in ("raw", "aggregated"):
            raise ValueError(f"ambiguity_source must be raw or aggregated, got {self.ambiguity_source!r}")
        if self.convention not in ("negative", "positive"):
            raise ValueError(f"convention must be negative or positive, got {self.convention!r}")
        # window/penalty/kernel details are validated by the ops themselves,
        # but fail fast on the obvious ones
        sgm_mod.SgmParams(self.p1, self.p2, self.num_paths, self.normalize_paths)
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise ValueError(f"median_kernel must be odd, got {self.median_kernel}")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


_HINTS = typing.get_type_hints(PipelineConfig)


def _coerce(name: str, raw: str):
    hint = _HINTS[name]
    if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if raw.lower() in ("none", ""):
            return None
        hint = args[0]
    if hint is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {name}: bad boolean {raw!r}")
    return hint(raw)


def read_config_file(path: str | Path) -> dict:
    """Parse a flat key=value config file into typed values."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _HINTS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return values


def build_config(config_file: str | Path | None = None, **overrides) -> PipelineConfig:
    """Resolve configuration: defaults, then file, then explicit overrides.

    Overrides equal to None mean "not given" and are dropped.
    """
    values: dict = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    for key, value in overrides.items():
        if key not in _HINTS:
            raise ValueError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    config = PipelineConfig(**values)
    config.validate()
    return config


@dataclass
class ScenePrep:
    """Shared heavy state: everything before interval extraction."""

    config: PipelineConfig
    disp_range: dataio.DisparityRange
    raw_volume: cvol.CostVolume
    agg_volume: cvol.CostVolume
    pvol: poss.PossibilityVolume
    cmap: conf.ConfidenceMap
    winners: np.ndarray
    truth: np.ndarray | None
    timings: dict


@dataclass
class SceneResult:
    scene: str
    report: metrics_mod.EvalReport
    samples: metrics_mod.SceneSamples
    intervals: poss.IntervalMap
    disp: np.ndarray
    cmap: conf.ConfidenceMap
    disp_range: dataio.DisparityRange
    artifacts: dict
    timings: dict


def _run_stage(name: str, timings: dict, fn, *args, **kwargs):
    start = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, str(exc)) from exc
    timings[name] = timings.get(name, 0.0) + time.perf_counter() - start
    return result


def _ingest(config: PipelineConfig):
    if config.import_cv is not None:
        volume = cvol.import_cost_volume(config.import_cv)
        if config.d_min is not None or config.calib is not None:
            expected = dataio.parse_disparity_range(
                config.calib, config.d_min, config.d_max, config.convention
            )
            if expected != volume.disp_range:
                raise ValueError(
                    f"imported volume range [{volume.disp_range.d_min}, "
                    f"{volume.disp_range.d_max}] does not match configured "
                    f"[{expected.d_min}, {expected.d_max}]"
                )
        pair = None
        disp_range = volume.disp_range
        from_calib = False
    else:
        left = dataio.load_gray_image(config.left)
        right = dataio.load_gray_image(config.right)
        if left.data.shape != right.data.shape:
            raise ValueError(
                f"left {left.data.shape} and right {right.data.shape} shapes differ"
            )
        pair = (left, right)
        from_calib = config.d_min is None
        disp_range = dataio.parse_disparity_range(
            config.calib, config.d_min, config.d_max, config.convention
        )
        volume = None

    truth = None
    if config.truth is not None:
        sign = config.truth_sign
        if sign is None:
            sign = -1.0 if (from_calib and config.convention == "negative") else 1.0
        truth = dataio.load_truth(
            config.truth, config.truth_scale, config.truth_zero_invalid, sign
        )
        shape = pair[0].data.shape if pair else volume.costs.shape[:2]
        if truth.shape != shape:
            raise ValueError(f"truth shape {truth.shape} does not match scene {shape}")
    return pair, volume, disp_range, truth


def prepare_scene(config: PipelineConfig) -> ScenePrep:
    """Run the shared stages: ingest through possibility and WTA."""
    config.validate()
    timings: dict = {}
    pair, volume, disp_range, truth = _run_stage("ingest", timings, _ingest, config)

    if volume is None:
        window = (config.census_rows, config.census_cols)
        left_field, right_field = _run_stage(
            "census",
            timings,
            lambda: (
                cvol.census_transform(pair[0], window),
                cvol.census_transform(pair[1], window),
            ),
        )
        volume = _run_stage(
            "cost-volume", timings, cvol.build_cost_volume, left_field, right_field, disp_range
        )
    if config.export_cv is not None:
        _run_stage("cost-volume", timings, cvol.export_cost_volume, volume, config.export_cv)

    params = sgm_mod.SgmParams(config.p1, config.p2, config.num_paths, config.normalize_paths)
    agg = _run_stage("sgm", timings, sgm_mod.aggregate, volume, params)

    source = volume if config.ambiguity_source == "raw" else agg
    cmap = _run_stage(
        "confidence",
        timings,
        lambda: conf.smooth_and_threshold(
            conf.ambiguity(source, config.eta_max, config.k_max), config.tau
        ),
    )
    pvol = _run_stage("possibility", timings, poss.to_possibility_volume, agg)
    winners = _run_stage("disparity", timings, disp_mod.wta, agg)
    return ScenePrep(config, disp_range, volume, agg, pvol, cmap, winners, truth, timings)


def _write_interval_dump(path: Path, result_disp, intervals, truth, cmap):
    height, width = result_disp.shape
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    truth_col = truth if truth is not None else np.full_like(result_disp, np.nan)
    table = np.column_stack(
        [
            ii.ravel(),
            jj.ravel(),
            intervals.lower.ravel(),
            intervals.upper.ravel(),
            result_disp.ravel(),
            np.asarray(truth_col, dtype=np.float64).ravel(),
            cmap.smoothed.ravel(),
            cmap.low_mask.ravel().astype(np.int64),
        ]
    )
    with path.open("w", newline="") as handle:
        handle.write("i,j,lower,upper,disparity,truth,confidence,low_conf_flag\n")
        np.savetxt(
            handle,
            table,
            fmt=["%d", "%d", "%.6g", "%.6g", "%.6g", "%.6g", "%.6g", "%d"],
            delimiter=",",
        )


def finish_scene(prep: ScenePrep, config: PipelineConfig) -> SceneResult:
    """Interval extraction, postprocessing, metrics, and artifact writes."""
    timings = dict(prep.timings)

    if config.baseline:
        # the naive reference: per-curve normalization, no widening, no pooling
        intervals = _run_stage(
            "intervals", timings, poss.baseline_intervals, prep.agg_volume, config.baseline_threshold
        )
    else:
        intervals = _run_stage(
            "intervals", timings, poss.compute_intervals, prep.pvol, prep.winners, config.alpha
        )

    if config.vfit:
        result_disp = _run_stage("refine", timings, disp_mod.vfit_refine, prep.agg_volume, prep.winners)
    else:
        result_disp = prep.winners.copy()

    if config.median:
        result_disp = _run_stage("filter", timings, disp_mod.median_filter, result_disp, config.median_kernel)
        lower = _run_stage("filter", timings, disp_mod.median_filter, intervals.lower, config.median_kernel)
        upper = _run_stage("filter", timings, disp_mod.median_filter, intervals.upper, config.median_kernel)
        intervals = poss.IntervalMap(lower, upper)

    if config.regularize and not config.baseline:
        intervals = _run_stage(
            "regularize",
            timings,
            conf.regularize_intervals,
            intervals,
            prep.cmap,
            config.half_height,
            config.q_low,
            config.q_high,
        )

    report, samples = _run_stage(
        "metrics",
        timings,
        metrics_mod.evaluate_scene,
        config.scene,
        intervals,
        result_disp,
        prep.truth,
        prep.cmap,
        prep.disp_range,
        config.digest(),
        config.half_height,
    )

    artifacts: dict = {}
    if config.out_dir is not None:
        out = Path(config.out_dir)

        def _write_all():
            out.mkdir(parents=True, exist_ok=True)
            dataio.write_pfm(result_disp, out / "disparity.pfm")
            dataio.write_pfm(intervals.lower, out / "intervals_lower.pfm")
            dataio.write_pfm(intervals.upper, out / "intervals_upper.pfm")
            dataio.write_pfm(prep.cmap.smoothed.astype(np.float32), out / "confidence.pfm")
            dataio.write_pgm(prep.cmap.low_mask.astype(np.uint8) * 255, out / "low_mask.pgm")
            metrics_mod.emit_report([report], out / "report.csv", "csv")
            metrics_mod.emit_report([report], out / "report.json", "json")
            artifacts.update(
                {
                    "disparity": str(out / "disparity.pfm"),
                    "intervals_lower": str(out / "intervals_lower.pfm"),
                    "intervals_upper": str(out / "intervals_upper.pfm"),
                    "confidence": str(out / "confidence.pfm"),
                    "low_mask": str(out / "low_mask.pgm"),
                    "report_csv": str(out / "report.csv"),
                    "report_json": str(out / "report.json"),
                }
            )
            if config.profile_row is not None:
                profile = out / f"profile_row_{config.profile_row}.csv"
                metrics_mod.emit_profile(
                    profile, config.profile_row, intervals, result_disp, prep.truth, prep.cmap
                )
                artifacts["profile"] = str(profile)
            if config.dump_csv:
                dump = out / "intervals.csv"
                _write_interval_dump(dump, result_disp, intervals, prep.truth, prep.cmap)
                artifacts["intervals_csv"] = str(dump)

        _run_stage("write", timings, _write_all)
    if config.export_cv is not None:
        artifacts["cost_volume"] = str(config.export_cv)

    return SceneResult(
        config.scene,
        report,
        samples,
        intervals,
        result_disp,
        prep.cmap,
        prep.disp_range,
        artifacts,
        timings,
    )


def run_scene(config: PipelineConfig) -> SceneResult:
    """Run one scene end to end."""
    return finish_scene(prepare_scene(config), config)


def sweep_variants(config: PipelineConfig) -> dict[str, PipelineConfig]:
    """The published comparison grid: baseline, alpha sweep, alpha 0.9 + pooling."""
    variants: dict[str, PipelineConfig] = {
        "baseline": replace(config, baseline=True, regularize=False)
    }
    for alpha in SWEEP_ALPHAS:
        variants[f"alpha{alpha:g}"] = replace(
            config, baseline=False, alpha=alpha, regularize=False
        )
    variants[f"alpha{SWEEP_REG_ALPHA:g}+reg"] = replace(
        config, baseline=False, alpha=SWEEP_REG_ALPHA, regularize=True
    )
    return variants


def run_sweep(config: PipelineConfig) -> dict[str, SceneResult]:
    """Run every sweep variant on one scene, sharing the heavy stages."""
    prep = prepare_scene(config)
    results = {}
    for name, variant in sweep_variants(config).items():
        if variant.out_dir is not None:
            variant = replace(variant, out_dir=str(Path(variant.out_dir) / name))
        results[name] = finish_scene(prep, variant)
    return results


@dataclass
class ManifestResult:
    dataset: str
    scenes: dict
    pooled: dict
    failures: list
    artifacts: dict


def _scene_config(base: dict, entry: dict, manifest_dir: Path) -> PipelineConfig:
    path_keys = ("left", "right", "truth", "calib", "import_cv", "export_cv", "out_dir")
    merged = dict(base)
    merged.update(entry)
    for key in path_keys:
        value = merged.get(key)
        if value is not None and not Path(value).is_absolute():
            merged[key] = str(manifest_dir / value)
    return build_config(**merged)


def run_manifest(
    manifest_path: str | Path,
    overrides: dict | None = None,
    sweep: bool = False,
) -> ManifestResult:
    """Run every scene of a manifest, pooling metrics; failures don't abort.

    The manifest is JSON: {"dataset": name, "defaults": {...config keys...},
    "scenes": [{"scene": id, ...config keys...}, ...]}. Relative paths are
    resolved against the manifest's directory. `overrides` (CLI/request
    fields) take precedence over both manifest layers, except out_dir which
    gains a per-scene subdirectory.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError("manifest", f"{manifest_path}: {exc}") from exc
    if not isinstance(manifest, dict) or "scenes" not in manifest:
        raise StageError("manifest", f"{manifest_path}: expected an object with a scenes list")

    dataset = manifest.get("dataset", manifest_path.stem)
    # None means "not given" at every layer, so null request fields and
    # absent CLI flags cannot clobber manifest defaults
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    out_dir = overrides.pop("out_dir", None)
    base = dict(manifest.get("defaults", {}))
    base.update(overrides)

    scenes: dict = {}
    failures: list = []
    samples: dict[str, list] = {}
    digests: dict[str, str] = {}
    for index, entry in enumerate(manifest["scenes"]):
        entry = dict(entry)
        scene_id = str(entry.setdefault("scene", f"scene{index}"))
        if out_dir is not None:
            entry["out_dir"] = str(Path(out_dir) / scene_id)
        try:
            config = _scene_config(base, entry, manifest_path.parent)
            if sweep:
                result = run_sweep(config)
                for name, res in result.items():
                    samples.setdefault(name, []).append(res.samples)
                    digests[name] = res.report.config_digest
            else:
                result = run_scene(config)
                samples.setdefault("run", []).append(result.samples)
                digests["run"] = result.report.config_digest
            scenes[scene_id] = result
        except StageError as exc:
            failures.append({"scene": scene_id, "stage": exc.stage, "error": str(exc)})

    pooled = {
        name: metrics_mod.pool_samples(sample_list, f"{dataset}:pooled", digests[name])
        for name, sample_list in samples.items()
        if sample_list
    }

    artifacts: dict = {}
    if out_dir is not None and scenes:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if sweep:
            rows = []
            for name in next(iter(scenes.values())).keys():
                rows.append(pooled[name])
                rows.extend(res[name].report for res in scenes.values())
            _emit_sweep_csv(out / "sweep.csv", scenes, pooled)
            metrics_mod.emit_report(rows, out / "report.json", "json")
            artifacts["sweep_csv"] = str(out / "sweep.csv")
        else:
            rows = [pooled["run"]] + [res.report for res in scenes.values()]
            metrics_mod.emit_report(rows, out / "report.csv", "csv")
            metrics_mod.emit_report(rows, out / "report.json", "json")
            artifacts["report_csv"] = str(out / "report.csv")
        artifacts["report_json"] = str(out / "report.json")

    return ManifestResult(dataset, scenes, pooled, failures, artifacts)


def _emit_sweep_csv(path: Path, scenes: dict, pooled: dict) -> None:
    """Long-format sweep table: dataset, variant, region, metric, value."""
    import csv as _csv

    with path.open("w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(["dataset", "variant", "region", "metric", "value"])
        names = list(pooled.keys())
        for name in names:
            for report in [pooled[name]] + [res[name].report for res in scenes.values()]:
                for region in ("global", "high", "low"):
                    stats = report.regions[region]
                    for metric in ("pixels", "evaluated", "accuracy", "relative_size", "overestimation"):
                        value = getattr(stats, metric)
                        if value is None:
                            continue
                        writer.writerow(
                            [report.scene, name, region, metric, metrics_mod._format_value(value)]
                        )
