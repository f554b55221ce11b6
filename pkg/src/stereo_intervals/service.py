"""HTTP service around the scene pipeline.

Requests carry filesystem paths and config overrides; the service runs
the pipeline and returns reports plus the paths of written artifacts.
Fields left at null fall back to the config-file value (when config_file
is given) and then to the package defaults, mirroring the CLI's
precedence. Designed for trusted, shared-filesystem deployments; the
interesting state lives in the returned report JSON, not on the server.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__, pipeline


class SceneRunRequest(BaseModel):
    """One scene run. Null fields inherit config-file / default values."""

    scene: str | None = None
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
    convention: str | None = None
    truth_sign: float | None = None
    truth_scale: float | None = None
    truth_zero_invalid: bool | None = None

    census_rows: int | None = None
    census_cols: int | None = None

    p1: float | None = None
    p2: float | None = None
    num_paths: int | None = None
    normalize_paths: bool | None = None

    alpha: float | None = None
    baseline: bool | None = None
    baseline_threshold: float | None = None

    eta_max: float | None = None
    k_max: int | None = None
    tau: float | None = None
    ambiguity_source: str | None = None

    regularize: bool | None = None
    half_height: int | None = None
    q_low: float | None = None
    q_high: float | None = None

    vfit: bool | None = None
    median: bool | None = None
    median_kernel: int | None = None

    dump_csv: bool | None = None

    config_file: str | None = None

    def to_config(self) -> pipeline.PipelineConfig:
        overrides = self.model_dump(exclude={"config_file"})
        return pipeline.build_config(self.config_file, **overrides)


class ManifestRunRequest(BaseModel):
    """A manifest run: scene list in a JSON file, shared overrides here."""

    manifest: str
    sweep: bool = False
    overrides: SceneRunRequest = SceneRunRequest()


class RegionStatsModel(BaseModel):
    pixels: int
    evaluated: int
    accuracy: float | None
    relative_size: float | None
    overestimation: float | None


class ReportModel(BaseModel):
    scene: str
    config_digest: str
    regions: dict[str, RegionStatsModel]


class SceneRunResponse(BaseModel):
    report: ReportModel
    low_fraction: float
    artifacts: dict[str, str]
    timings: dict[str, float]


class FailureModel(BaseModel):
    scene: str
    stage: str
    error: str


class ManifestRunResponse(BaseModel):
    dataset: str
    pooled: dict[str, ReportModel]
    scenes: dict[str, dict[str, ReportModel]]
    failures: list[FailureModel]
    artifacts: dict[str, str]


app = FastAPI(title="stereo-intervals", version=__version__)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/config/defaults")
def config_defaults() -> dict:
    return asdict(pipeline.PipelineConfig())


def _report_model(report) -> ReportModel:
    return ReportModel(**report.to_dict())


@app.post("/scenes/run")
def run_scene(request: SceneRunRequest) -> SceneRunResponse:
    try:
        config = request.to_config()
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    try:
        result = pipeline.run_scene(config)
    except pipeline.StageError as exc:
        raise HTTPException(
            status_code=422, detail={"stage": exc.stage, "error": str(exc)}
        ) from exc
    return SceneRunResponse(
        report=_report_model(result.report),
        low_fraction=result.cmap.low_fraction,
        artifacts=result.artifacts,
        timings=result.timings,
    )


@app.post("/manifests/run")
def run_manifest(request: ManifestRunRequest) -> ManifestRunResponse:
    overrides = request.overrides.model_dump(exclude={"config_file"})
    try:
        result = pipeline.run_manifest(request.manifest, overrides, request.sweep)
    except pipeline.StageError as exc:
        raise HTTPException(
            status_code=422, detail={"stage": exc.stage, "error": str(exc)}
        ) from exc
    scenes: dict[str, dict[str, ReportModel]] = {}
    for scene_id, scene_result in result.scenes.items():
        if request.sweep:
            scenes[scene_id] = {
                name: _report_model(res.report) for name, res in scene_result.items()
            }
        else:
            scenes[scene_id] = {"run": _report_model(scene_result.report)}
    return ManifestRunResponse(
        dataset=result.dataset,
        pooled={name: _report_model(rep) for name, rep in result.pooled.items()},
        scenes=scenes,
        failures=[FailureModel(**f) for f in result.failures],
        artifacts=result.artifacts,
    )
