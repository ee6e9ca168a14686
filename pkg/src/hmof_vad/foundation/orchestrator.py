"""Command runners: train, detect, eval, synth, bench and ablate.

Each runner takes a validated ``PipelineConfig``, does its file I/O through
``hmof_vad.storage`` and returns a small summary object. Failures inside a
named stage are re-raised as ``StageError`` so the CLI can report where a
run broke.
"""

import hashlib
import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from hmof_vad.core.frames import FrameSequence, PatchGrid, partition
from hmof_vad.core.pipeline import DetectionModels, FramePipeline, FrameResult, project
from hmof_vad.evaluation.report import EvalReport, build_report
from hmof_vad.features.descriptors import DescriptorKind, DescriptorSpec, calibrate_delta
from hmof_vad.foundation.config import PipelineConfig, apply_overrides, flatten_config
from hmof_vad.models import autoencoder, gmm
from hmof_vad.models.classifier import DecisionThresholds, FrameDecision, Verdict, calibrate_alpha
from hmof_vad.storage import frame_store, model_store, results
from hmof_vad.synth.benchmark import BenchReport, benchmark, threaded_throughput
from hmof_vad.synth.generator import generate
from hmof_vad.util.errors import DataError, DimensionMismatchError, HmofError, ModelError, StageError
from hmof_vad.util.logging import log_event, stage_scope
from hmof_vad.vision.flow import magnitude
from hmof_vad.vision.foreground import AlphaMap

logger = logging.getLogger(__name__)

DETECTION_FILENAME = "detection.json"
ABLATION_KINDS = ("hmof", "hof", "mhof")

# Settings detection takes from the training manifest.
_MODEL_BOUND_KEYS = (
    "grid.patch_size",
    "feat.kind",
    "feat.bins",
    "feat.mhof_thresh",
    "ae.output",
)


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag log records and pipeline errors raised inside the block with a stage name."""
    with stage_scope(name):
        try:
            yield
        except StageError:
            raise
        except HmofError as e:
            raise StageError(name, e) from e


def fingerprint(sequence: FrameSequence) -> str:
    """SHA-256 over frame dimensions and raw intensity bytes."""
    digest = hashlib.sha256()
    digest.update(f"{sequence.width}x{sequence.height}x{len(sequence)}".encode())
    for frame in sequence:
        digest.update(np.ascontiguousarray(frame.intensity, dtype="<f8").tobytes())
    return digest.hexdigest()


def _grid(config: PipelineConfig, width: int, height: int) -> PatchGrid:
    try:
        return partition(width, height, config.grid.patch_size)
    except ValueError as e:
        raise DataError(str(e)) from e


@dataclass(eq=False)
class TrainingArtifacts:
    """Models and statistics produced by ``train_models``."""

    params: autoencoder.AutoEncoderParams
    mixture: gmm.GmmModel
    spec: DescriptorSpec
    alpha: float
    ae_result: autoencoder.TrainResult
    em_result: gmm.EmResult
    n_train_patches: int


def _collect_motion(
    config: PipelineConfig, sequence: FrameSequence, grid: PatchGrid
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    all_pixels = config.feat.delta_source == "all"
    pipeline = FramePipeline.from_config(config, grid, keep_flow=all_pixels)
    u_parts: list[np.ndarray] = []
    v_parts: list[np.ndarray] = []
    mag_parts: list[np.ndarray] = []
    for result in pipeline.run(sequence):
        if len(result.selection):
            u_parts.append(result.u_blocks)
            v_parts.append(result.v_blocks)
        if all_pixels and result.flow is not None:
            mag_parts.append(magnitude(result.flow).m.astype(np.float32).ravel())
    if not u_parts:
        raise DataError("no foreground patches found in the training sequence")
    mags = np.concatenate(mag_parts) if all_pixels else None
    return np.concatenate(u_parts), np.concatenate(v_parts), mags


def train_models(config: PipelineConfig, sequence: FrameSequence) -> TrainingArtifacts:
    """Fit delta, the autoencoder, the mixture and alpha on a normal sequence.

    Raises:
        StageError: Wrapping the failure of the stage that broke.
    """
    with stage("flow"):
        grid = _grid(config, sequence.width, sequence.height)
        u, v, all_mags = _collect_motion(config, sequence, grid)
        n_patches = u.shape[0]
        log_event(
            logger,
            logging.INFO,
            f"Collected {n_patches} foreground training patches",
            event="train_stage_done",
            n_patches=n_patches,
        )

    with stage("calibrate"):
        mags = np.hypot(u, v) if all_mags is None else all_mags
        delta = calibrate_delta(mags, config.feat.discard_fraction)
        log_event(logger, logging.INFO, f"Calibrated delta = {delta:.6g}", event="train_stage_done", delta=delta)

    spec = DescriptorSpec(
        kind=DescriptorKind(config.feat.kind),
        bins=config.feat.bins,
        delta=delta,
        mhof_thresh=config.feat.mhof_thresh,
    )
    with stage("features"):
        features = spec.describe(u, v)
    del u, v

    ae = config.ae
    with stage("autoencoder"):
        start = autoencoder.init(spec.dimension, ae.hidden, ae.seed)
        settings = autoencoder.TrainSettings(
            epochs=ae.epochs,
            learning_rate=ae.lr,
            batch_size=ae.batch,
            seed=ae.seed,
            adaptive_lr=ae.adaptive_lr,
        )
        ae_result = autoencoder.train(start, features, settings)
        projected = project(ae_result.params, features, ae.output)

    g = config.gmm
    with stage("gmm"):
        em_result = gmm.fit_em(projected, g.k, seed=g.seed, max_iters=g.max_iters, tol=g.tol, reg=g.reg)
        train_scores = gmm.score_samples(em_result.model, projected)

    with stage("alpha"):
        try:
            alpha = g.alpha if g.alpha is not None else calibrate_alpha(train_scores, g.alpha_quantile)
        except ValueError as e:
            raise DataError(str(e)) from e
        log_event(
            logger,
            logging.INFO,
            f"Calibrated alpha = {alpha:.6g}",
            event="train_stage_done",
            alpha=alpha,
            calibrated=g.alpha is None,
        )
    return TrainingArtifacts(
        params=ae_result.params,
        mixture=em_result.model,
        spec=spec,
        alpha=alpha,
        ae_result=ae_result,
        em_result=em_result,
        n_train_patches=n_patches,
    )


def _model_paths(model_dir: Path) -> tuple[Path, Path, Path]:
    return (
        model_dir / model_store.AE_FILENAME,
        model_dir / model_store.GMM_FILENAME,
        model_dir / model_store.MANIFEST_FILENAME,
    )


def run_train(config: PipelineConfig, *, force: bool = False) -> model_store.TrainingManifest:
    """train: ingest, fit every model and persist them with a manifest.

    Raises:
        ModelError: If models exist and ``force`` is not set.
        StageError: If a stage fails.
    """
    model_dir = config.paths.model_dir
    ae_path, gmm_path, manifest_path = _model_paths(model_dir)
    existing = [p.name for p in (ae_path, gmm_path, manifest_path) if p.exists()]
    if existing and not force:
        raise ModelError(f"models already exist in {model_dir} ({', '.join(existing)}); use --force to overwrite")

    with stage("ingest"):
        sequence = frame_store.load_sequence(config.paths.train_dir, config.paths.pattern)
    artifacts = train_models(config, sequence)

    summary = model_store.ModelSummary(
        delta=artifacts.spec.delta,
        alpha=artifacts.alpha,
        width=sequence.width,
        height=sequence.height,
        fingerprint=fingerprint(sequence),
        n_train_patches=artifacts.n_train_patches,
        ae_loss_initial=artifacts.ae_result.loss_trace[0],
        ae_loss_final=artifacts.ae_result.loss_trace[-1],
        gmm_log_likelihood=artifacts.em_result.log_likelihoods[-1],
    )
    manifest = model_store.TrainingManifest.build(config, summary)
    with stage("persist"):
        model_store.save_autoencoder(artifacts.params, ae_path)
        model_store.save_gmm(artifacts.mixture, gmm_path)
        model_store.write_manifest(manifest, manifest_path)
    log_event(
        logger,
        logging.INFO,
        f"Models written to {model_dir}",
        event="train_done",
        model_dir=str(model_dir),
        fingerprint=summary.fingerprint,
    )
    return manifest


@dataclass(eq=False)
class LoadedModels:
    """Models plus the settings detection must use with them."""

    models: DetectionModels
    spec: DescriptorSpec
    manifest: model_store.TrainingManifest
    config: PipelineConfig


def load_models(config: PipelineConfig) -> LoadedModels:
    """Read models and reconcile the config with the training manifest.

    Model-bound settings (patch size, descriptor, autoencoder output) come
    from the manifest; each one the current config disagrees with is logged
    as ``config_overridden_by_manifest``. An explicit ``gmm.alpha`` still
    overrides the calibrated alpha.

    Raises:
        ModelError: If a model file or the manifest is missing or invalid.
    """
    ae_path, gmm_path, manifest_path = _model_paths(config.paths.model_dir)
    manifest = model_store.read_manifest(manifest_path)
    params = model_store.load_autoencoder(ae_path)
    mixture = model_store.load_gmm(gmm_path)

    current = flatten_config(config)
    overrides = []
    for key in _MODEL_BOUND_KEYS:
        trained = manifest.setting(key)
        if current[key] != trained:
            log_event(
                logger,
                logging.WARNING,
                f"{key} = {current[key]} replaced by trained value {trained}",
                event="config_overridden_by_manifest",
                key=key,
                configured=current[key],
                trained=trained,
            )
        overrides.append(f"{key}={trained}")
    effective = apply_overrides(config, overrides)

    spec = DescriptorSpec(
        kind=DescriptorKind(effective.feat.kind),
        bins=effective.feat.bins,
        delta=manifest.model.delta,
        mhof_thresh=effective.feat.mhof_thresh,
    )
    if params.input_dim != spec.dimension:
        raise ModelError(f"autoencoder input {params.input_dim} does not match descriptor dimension {spec.dimension}")
    alpha = effective.gmm.alpha if effective.gmm.alpha is not None else manifest.model.alpha
    models = DetectionModels(
        autoencoder=params,
        gmm=mixture,
        thresholds=DecisionThresholds(alpha=alpha, beta=effective.gmm.beta),
        output=effective.ae.output,
    )
    return LoadedModels(models=models, spec=spec, manifest=manifest, config=effective)


def _check_dimensions(sequence: FrameSequence, manifest: model_store.TrainingManifest) -> None:
    model = manifest.model
    if (sequence.width, sequence.height) != (model.width, model.height):
        raise DimensionMismatchError(
            f"test frames are {sequence.width}x{sequence.height}, "
            f"models were trained on {model.width}x{model.height}"
        )


def _detection_mask(result: FrameResult, grid: PatchGrid) -> np.ndarray:
    decision = result.decision
    if decision is None or decision.verdict is not Verdict.ABNORMAL:
        return np.zeros((grid.height, grid.width), dtype=bool)
    return grid.mask(decision.abnormal_patches)


@dataclass
class DetectSummary:
    """Outcome of ``run_detect``."""

    n_frames: int
    n_abnormal: int
    alpha: float
    beta: int
    out_dir: Path


def run_detect(config: PipelineConfig) -> DetectSummary:
    """detect: score every test frame and write decisions, masks and dumps.

    Raises:
        StageError: If models are missing, frames cannot be read or do not
            match the training dimensions.
    """
    with stage("load-models"):
        loaded = load_models(config)
    cfg = loaded.config
    log_event(
        logger,
        logging.INFO,
        "Models loaded",
        event="models_loaded",
        fingerprint=loaded.manifest.model.fingerprint,
        alpha=loaded.models.thresholds.alpha,
        beta=loaded.models.thresholds.beta,
    )

    with stage("ingest"):
        sequence = frame_store.load_sequence(cfg.paths.test_dir, cfg.paths.pattern)
        _check_dimensions(sequence, loaded.manifest)

    out_dir = cfg.paths.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _grid(cfg, sequence.width, sequence.height)

    def export_alpha(index: int, alpha_map: AlphaMap) -> None:
        frame_store.write_alpha(alpha_map, out_dir / "alpha" / frame_store.frame_filename(index))

    pipeline = FramePipeline.from_config(
        cfg,
        grid,
        spec=loaded.spec,
        models=loaded.models,
        alpha_sink=export_alpha if cfg.fg.export_alpha else None,
        keep_flow=cfg.flow.dump,
    )

    decisions: list[FrameDecision] = []
    patch_scores: list[tuple[int, dict[int, float]]] = []
    feature_tables = []
    with stage("detect"):
        for result in pipeline.run(sequence):
            if result.decision is None:
                raise ModelError(f"frame {result.frame_index} was not scored")
            decisions.append(result.decision)
            if result.decision.verdict is Verdict.ABNORMAL:
                log_event(
                    logger,
                    logging.DEBUG,
                    f"Frame {result.frame_index} abnormal",
                    event="frame_abnormal",
                    frame=result.frame_index,
                    abnormal_patches=len(result.decision.abnormal_patches),
                    frame_score=result.decision.frame_score,
                )
            frame_store.write_mask(
                _detection_mask(result, grid),
                out_dir / "masks" / frame_store.frame_filename(result.frame_index),
            )
            if cfg.run.patch_scores:
                patch_scores.append((result.frame_index, result.scores))
            if cfg.feat.dump and result.features is not None and len(result.features):
                feature_tables.append(
                    results.features_frame(result.frame_index, result.selection.selected, result.features, cfg.feat.kind)
                )
            if cfg.flow.dump and result.flow is not None:
                frame_store.write_flow(result.flow, out_dir / "flows" / frame_store.frame_filename(result.frame_index, ".flo"))

    with stage("persist"):
        results.write_decisions(decisions, out_dir / "decisions.csv")
        if cfg.run.patch_scores:
            results.write_patch_scores(patch_scores, out_dir / "patch_scores.csv")
        if cfg.feat.dump:
            results.write_features(feature_tables, out_dir / "features.csv")
        thresholds = loaded.models.thresholds
        results.write_json(
            {
                "alpha": thresholds.alpha,
                "beta": thresholds.beta,
                "coverage": cfg.eval.coverage,
                "frames": len(decisions),
                "height": grid.height,
                "patch_size": grid.patch_size,
                "width": grid.width,
            },
            out_dir / DETECTION_FILENAME,
        )

    n_abnormal = sum(d.verdict is Verdict.ABNORMAL for d in decisions)
    log_event(
        logger,
        logging.INFO,
        f"Detection done: {n_abnormal}/{len(decisions)} frames abnormal",
        event="detect_done",
        frames=len(decisions),
        abnormal=n_abnormal,
    )
    return DetectSummary(
        n_frames=len(decisions),
        n_abnormal=n_abnormal,
        alpha=thresholds.alpha,
        beta=thresholds.beta,
        out_dir=out_dir,
    )


def _read_detection_masks(mask_dir: Path, n_frames: int) -> list[np.ndarray] | None:
    paths = [mask_dir / frame_store.frame_filename(i) for i in range(n_frames)]
    if not all(p.is_file() for p in paths):
        return None
    return [frame_store.read_mask(p) for p in paths]


def _read_detection_info(path: Path) -> dict:
    if not path.is_file():
        raise DataError(f"detection outputs not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"cannot parse {path.name}: {e}") from e


def run_eval(config: PipelineConfig) -> EvalReport:
    """eval: compare detect outputs in ``out_dir`` with ground truth.

    Raises:
        StageError: If ground truth or detection outputs are missing or
            disagree in frame count.
    """
    out_dir = config.paths.out_dir
    with stage("load-detections"):
        decisions = results.read_decisions(out_dir / "decisions.csv")
        detection = _read_detection_info(out_dir / DETECTION_FILENAME)
    with stage("load-ground-truth"):
        truth = results.read_ground_truth(config.paths.gt_path)

    grid = PatchGrid(width=detection["width"], height=detection["height"], patch_size=detection["patch_size"])
    n_frames = len(decisions)
    scores_path = out_dir / "patch_scores.csv"
    with stage("evaluate"):
        patch_scores = results.read_patch_scores(scores_path, n_frames) if scores_path.is_file() else None
        report = build_report(
            decisions,
            truth,
            grid=grid,
            beta=int(detection["beta"]),
            patch_scores=patch_scores,
            detection_masks=_read_detection_masks(out_dir / "masks", n_frames),
            coverage=float(detection["coverage"]),
        )
    with stage("persist"):
        results.write_report(report, out_dir)
    return report


@dataclass
class SynthSummary:
    """Where ``run_synth`` wrote its data."""

    train_dir: Path
    test_dir: Path
    gt_path: Path
    n_abnormal: int


def run_synth(config: PipelineConfig) -> SynthSummary:
    """synth: write a normal-only training set and an annotated test set.

    The training set uses ``synth.seed`` with no anomaly movers; the test
    set uses ``synth.seed + 1`` with the configured anomalies.
    """
    synth = config.synth
    paths = config.paths
    train_cfg = synth.model_copy(update={"anomaly_count": 0})
    test_cfg = synth.model_copy(update={"seed": synth.seed + 1})

    with stage("synth"):
        train_seq, _ = generate(train_cfg)
        frame_store.save_sequence(train_seq, paths.train_dir)
        del train_seq
        test_seq, truth = generate(test_cfg)
        frame_store.save_sequence(test_seq, paths.test_dir)
        results.write_ground_truth(truth, paths.gt_path)

    n_abnormal = int(truth.labels.sum())
    log_event(
        logger,
        logging.INFO,
        f"Synthetic data written to {paths.train_dir} and {paths.test_dir}",
        event="synth_done",
        train_dir=str(paths.train_dir),
        test_dir=str(paths.test_dir),
        abnormal=n_abnormal,
    )
    return SynthSummary(train_dir=paths.train_dir, test_dir=paths.test_dir, gt_path=paths.gt_path, n_abnormal=n_abnormal)


def run_bench(config: PipelineConfig) -> BenchReport:
    """bench: time every stage on the test sequence and write timings.json."""
    with stage("load-models"):
        loaded = load_models(config)
    cfg = loaded.config
    with stage("ingest"):
        sequence = frame_store.load_sequence(cfg.paths.test_dir, cfg.paths.pattern)
        _check_dimensions(sequence, loaded.manifest)

    with stage("bench"):
        timings = benchmark(cfg, sequence, loaded.models, loaded.spec)
        fps = threaded_throughput(cfg, sequence, loaded.models, loaded.spec) if cfg.bench.threaded else None

    report = BenchReport(
        width=sequence.width,
        height=sequence.height,
        timings=timings,
        budget_s=cfg.bench.budget_s,
        within_budget=timings.total <= cfg.bench.budget_s,
        workers=cfg.run.workers if fps is not None else None,
        threaded_fps=fps,
    )
    with stage("persist"):
        results.write_json(report.model_dump(mode="json"), cfg.paths.out_dir / "timings.json")
    return report


@dataclass
class AblationRow:
    kind: str
    auc_frame: float
    eer_frame: float
    eer_pixel: float | None


def ablation_table(rows: list[AblationRow]) -> str:
    """Aligned text table: one row per descriptor."""

    def fmt(value: float | None) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    lines = [f"{'Descriptor':<10}  {'Frame AUC':>9}  {'Frame EER':>9}  {'Pixel EER':>9}"]
    for row in rows:
        lines.append(f"{row.kind:<10}  {fmt(row.auc_frame):>9}  {fmt(row.eer_frame):>9}  {fmt(row.eer_pixel):>9}")
    return "\n".join(lines) + "\n"


def run_ablate(config: PipelineConfig, *, force: bool = False) -> list[AblationRow]:
    """ablate: train, detect and evaluate once per descriptor kind.

    Runs use identical seeds and settings apart from ``feat.kind``; each
    kind gets its own ``<model_dir>/<kind>`` and ``<out_dir>/<kind>``.
    """
    rows = []
    for kind in ABLATION_KINDS:
        variant = apply_overrides(
            config,
            [
                f"feat.kind={kind}",
                f"paths.model_dir={(config.paths.model_dir / kind).as_posix()}",
                f"paths.out_dir={(config.paths.out_dir / kind).as_posix()}",
            ],
        )
        log_event(logger, logging.INFO, f"Ablation run: {kind}", event="ablation_run", kind=kind)
        run_train(variant, force=force)
        run_detect(variant)
        report = run_eval(variant)
        rows.append(AblationRow(kind=kind, auc_frame=report.auc_frame, eer_frame=report.eer_frame, eer_pixel=report.eer_pixel))

    results.write_json([asdict(row) for row in rows], config.paths.out_dir / "ablation.json")
    return rows
