"""End-to-end orchestration: source -> clean -> surface -> decompose -> render.

Every stage writes its artifact plus a sidecar manifest carrying the
exact stage configuration, the hashes of its inputs' manifests, and a
stage key derived from both. A rerun skips a stage when its outputs
and manifests already exist with a matching stage key, so the pipeline
is resumable and artifacts form a verifiable provenance chain.

Throughput knobs (thread count) are excluded from stage keys because
they never change results.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import cleaning as cleaning_mod
from . import decomposition as decomp_mod
from . import figures as figures_mod
from . import ingest as ingest_mod
from . import lags as lags_mod
from . import surface as surface_mod
from . import synthetic as synth_mod
from .errors import (
    ArtifactIOError,
    InvalidGrid,
    InvalidSpec,
    StageFailure,
    ValidationFailed,
)
from .series import (
    canonical_json,
    manifest_path,
    read_manifest,
    read_prms,
    series_summary,
    write_manifest,
    write_prms,
)

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class IngestOptions:
    venues_dir: str | None = None
    consolidated: str | None = None
    tz: str = ingest_mod.DEFAULT_TZ
    strict: bool = True

    def to_dict(self) -> dict:
        return {
            "venues_dir": self.venues_dir,
            "consolidated": self.consolidated,
            "tz": self.tz,
            "strict": self.strict,
        }


@dataclass
class PipelineConfig:
    synth: synth_mod.SyntheticSpec | None = None
    ingest: IngestOptions | None = None
    cleaning: cleaning_mod.CleaningConfig = field(
        default_factory=cleaning_mod.CleaningConfig
    )
    lags: str | list = "short"
    grid: surface_mod.BinGrid = field(default_factory=surface_mod.BinGrid)
    bootstrap: decomp_mod.BootstrapConfig = field(
        default_factory=lambda: decomp_mod.BootstrapConfig(seed=42)
    )
    local_index: str = "eq319"
    figures: list[figures_mod.FigureSpec] = field(default_factory=list)
    workdir: str = "."
    deterministic: bool = True
    threads: int = 1
    paths: dict = field(default_factory=dict)

    DEFAULT_PATHS = {
        "mids": "mids.prms",
        "clean": "clean.prms",
        "clean_report": "clean.json",
        "moments": "moments.csv",
        "surface": "surface.csv",
        "heatmap": "heat.csv",
        "summary": "lags.csv",
    }

    def path(self, name: str) -> Path:
        rel = self.paths.get(name, self.DEFAULT_PATHS[name])
        return Path(self.workdir) / rel

    def lag_list(self) -> tuple[int, ...]:
        if isinstance(self.lags, str):
            return lags_mod.parse_lag_selector(self.lags)
        return lags_mod.validate_lags(self.lags)

    def to_dict(self) -> dict:
        return {
            "synth": self.synth.to_dict() if self.synth else None,
            "ingest": self.ingest.to_dict() if self.ingest else None,
            "cleaning": {
                "lower_q": self.cleaning.lower_q,
                "upper_q": self.cleaning.upper_q,
                "jump_threshold": self.cleaning.jump_threshold,
            },
            "lags": self.lags if isinstance(self.lags, str) else list(self.lags),
            "grid": self.grid.to_dict(),
            "bootstrap": {
                "n_replicates": self.bootstrap.n_replicates,
                "seed": self.bootstrap.seed,
                "quantiles": list(self.bootstrap.quantiles),
                "recompute_weights": self.bootstrap.recompute_weights,
            },
            "local_index": self.local_index,
            "figures": [f.to_dict() for f in self.figures],
            "workdir": self.workdir,
            "deterministic": self.deterministic,
            "threads": self.threads,
            "paths": dict(self.paths),
        }


def config_from_dict(raw: dict) -> PipelineConfig:
    problems = validate_config_dict(raw)
    if problems:
        raise ValidationFailed(problems)
    synth = None
    if raw.get("synth"):
        synth = synth_mod.SyntheticSpec(**raw["synth"])
    ing = None
    if raw.get("ingest"):
        ing = IngestOptions(**raw["ingest"])
    clean_raw = raw.get("cleaning", {})
    boot_raw = dict(raw.get("bootstrap", {}))
    if "quantiles" in boot_raw:
        boot_raw["quantiles"] = tuple(boot_raw["quantiles"])
    grid_raw = dict(raw.get("grid", {}))
    grid_raw.pop("n_bins", None)  # derived field, accepted on input for convenience
    figures = [figures_mod.FigureSpec(**f) for f in raw.get("figures", [])]
    return PipelineConfig(
        synth=synth,
        ingest=ing,
        cleaning=cleaning_mod.CleaningConfig(**clean_raw),
        lags=raw.get("lags", "short"),
        grid=surface_mod.BinGrid(**grid_raw),
        bootstrap=decomp_mod.BootstrapConfig(**boot_raw),
        local_index=raw.get("local_index", "eq319"),
        figures=figures,
        workdir=raw.get("workdir", "."),
        deterministic=raw.get("deterministic", True),
        threads=raw.get("threads", 1),
        paths=dict(raw.get("paths", {})),
    )


def load_config(path: str | Path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationFailed([f"config {path} is not valid JSON: {exc}"]) from exc
    return config_from_dict(raw)


def validate_config_dict(raw: dict) -> list[str]:
    """Static checks that never touch data files."""
    problems: list[str] = []
    has_synth = bool(raw.get("synth"))
    has_ingest = bool(raw.get("ingest"))
    if has_synth and has_ingest:
        problems.append("config sets both 'synth' and 'ingest'; pick one source")
    if not has_synth and not has_ingest:
        problems.append("config needs a source: either 'synth' or 'ingest'")

    grid = raw.get("grid", {})
    z_min = grid.get("z_min", -4.0)
    z_max = grid.get("z_max", 4.0)
    step = grid.get("step", 0.025)
    n_min = grid.get("n_min_support", 200)
    if step <= 0:
        problems.append(f"grid step must be > 0, got {step}")
    elif z_min >= z_max:
        problems.append(f"grid needs z_min < z_max, got {z_min}, {z_max}")
    else:
        ratio = (z_max - z_min) / step
        if abs(ratio - round(ratio)) > 1e-9:
            problems.append(
                f"grid step {step} yields a non-integer bin count {ratio:.6g}"
            )
    if n_min < 1:
        problems.append(f"n_min_support must be >= 1, got {n_min}")

    cl = raw.get("cleaning", {})
    lower_q = cl.get("lower_q", 0.00001)
    upper_q = cl.get("upper_q", 0.99999)
    if not (0.0 < lower_q < upper_q < 1.0):
        problems.append(f"need 0 < lower_q < upper_q < 1, got {lower_q}, {upper_q}")
    if cl.get("jump_threshold", 1.5) <= 0:
        problems.append("jump_threshold must be > 0")

    lags = raw.get("lags", "short")
    try:
        if isinstance(lags, str):
            if not lags.startswith("file:"):
                lags_mod.parse_lag_selector(lags)
        else:
            lags_mod.validate_lags(lags)
    except (InvalidGrid, ValidationFailed) as exc:
        problems.append(str(exc))

    boot = raw.get("bootstrap", {})
    if boot.get("n_replicates", 1000) < 1:
        problems.append("bootstrap needs at least 1 replicate")
    q = boot.get("quantiles", (0.025, 0.975))
    if not (0.0 < q[0] < q[1] < 1.0):
        problems.append(f"bad bootstrap quantiles {q}")

    if raw.get("local_index", "eq319") not in decomp_mod.LOCAL_INDEX_CHOICES:
        problems.append(f"unknown local_index '{raw.get('local_index')}'")

    if raw.get("threads", 1) < 1:
        problems.append("threads must be >= 1")

    for f in raw.get("figures", []):
        if f.get("kind") not in figures_mod.FIGURE_KINDS:
            problems.append(f"unknown figure kind '{f.get('kind')}'")

    if raw.get("synth"):
        try:
            synth_mod.SyntheticSpec(**raw["synth"])
        except (InvalidSpec, TypeError) as exc:
            problems.append(f"synth spec invalid: {exc}")

    paths = dict(PipelineConfig.DEFAULT_PATHS)
    paths.update(raw.get("paths", {}))
    seen: dict[str, str] = {}
    for name, rel in sorted(paths.items()):
        if rel in seen:
            problems.append(
                f"paths '{seen[rel]}' and '{name}' both point to '{rel}'"
            )
        seen[rel] = name
    return problems


@dataclass
class StageStatus:
    stage: str
    status: str  # "ran" | "skipped"
    outputs: list[str]


def _key_of(stage: str, cfg: dict, inputs: dict[str, str]) -> str:
    payload = canonical_json({"stage": stage, "config": cfg, "inputs": inputs})
    return hashlib.sha256(payload.encode()).hexdigest()


def _manifest_hash(artifact: Path) -> str:
    payload = canonical_json(read_manifest(artifact))
    return hashlib.sha256(payload.encode()).hexdigest()


def _stage_fresh(outputs: list[Path], key: str) -> bool:
    for out in outputs:
        if not out.exists() or not manifest_path(out).exists():
            return False
        try:
            if read_manifest(out).get("stage_key") != key:
                return False
        except (ArtifactIOError, json.JSONDecodeError):
            return False
    return True


class Pipeline:
    def __init__(self, config: PipelineConfig, force: bool = False):
        self.config = config
        self.force = force
        self.statuses: list[StageStatus] = []

    def run(self) -> list[StageStatus]:
        Path(self.config.workdir).mkdir(parents=True, exist_ok=True)
        self._source()
        self._clean()
        self._surface()
        self._decompose()
        self._render()
        return self.statuses

    # -- stage driver ------------------------------------------------

    def _run_stage(self, stage, outputs, key, producer):
        if not self.force and _stage_fresh(outputs, key):
            self.statuses.append(
                StageStatus(stage, "skipped", [str(o) for o in outputs])
            )
            logger.info("stage %s: outputs fresh, skipped", stage)
            return
        try:
            producer()
        except (StageFailure, ValidationFailed):
            self._remove_partial(outputs)
            raise
        except Exception as exc:  # noqa: BLE001 - boundary to exit-code contract
            self._remove_partial(outputs)
            raise StageFailure(stage, str(exc)) from exc
        self.statuses.append(StageStatus(stage, "ran", [str(o) for o in outputs]))

    @staticmethod
    def _input_hashes(stage: str, paths: dict[str, Path]) -> dict[str, str]:
        hashes = {}
        for name, path in paths.items():
            try:
                hashes[name] = _manifest_hash(path)
            except ArtifactIOError as exc:
                raise StageFailure(stage, f"missing input '{name}': {exc}") from exc
        return hashes

    @staticmethod
    def _remove_partial(outputs):
        for out in outputs:
            out.unlink(missing_ok=True)
            manifest_path(out).unlink(missing_ok=True)

    # -- stages -------------------------------------------------------

    def _source(self):
        cfg = self.config
        out = cfg.path("mids")
        if cfg.synth is not None:
            stage_cfg = {"synth": cfg.synth.to_dict()}
        else:
            stage_cfg = {"ingest": cfg.ingest.to_dict()}
        key = _key_of("source", stage_cfg, {})

        def produce():
            if cfg.synth is not None:
                series = synth_mod.generate(cfg.synth)
                quality = None
            else:
                opts = cfg.ingest
                if opts.consolidated:
                    series, report = ingest_mod.ingest_consolidated(
                        opts.consolidated, tz=opts.tz, strict=opts.strict
                    )
                elif opts.venues_dir:
                    files = {
                        p.stem.upper(): p
                        for p in sorted(Path(opts.venues_dir).glob("*.csv"))
                    }
                    if not files:
                        raise StageFailure(
                            "source", f"no quote files in {opts.venues_dir}"
                        )
                    series, report = ingest_mod.ingest_files(
                        files, tz=opts.tz, strict=opts.strict
                    )
                else:
                    raise StageFailure(
                        "source", "ingest needs venues_dir or consolidated"
                    )
                quality = report.to_dict()
            write_prms(series, out)
            payload = dict(series_summary(series))
            payload.update({"stage": "source", "stage_key": key, "config": stage_cfg})
            if quality is not None:
                payload["quality"] = quality
            write_manifest(out, payload)

        self._run_stage("source", [out], key, produce)

    def _clean(self):
        cfg = self.config
        src = cfg.path("mids")
        out = cfg.path("clean")
        report_path = cfg.path("clean_report")
        stage_cfg = {
            "lower_q": cfg.cleaning.lower_q,
            "upper_q": cfg.cleaning.upper_q,
            "jump_threshold": cfg.cleaning.jump_threshold,
        }
        inputs = self._input_hashes("clean", {"mids": src})
        key = _key_of("clean", stage_cfg, inputs)

        def produce():
            series = read_prms(src)
            cleaned, report = cleaning_mod.clean(series, cfg.cleaning)
            write_prms(cleaned, out)
            report_path.write_text(
                canonical_json(report.to_dict()) + "\n", encoding="utf-8"
            )
            payload = dict(series_summary(cleaned))
            payload.update(
                {
                    "stage": "clean",
                    "stage_key": key,
                    "config": stage_cfg,
                    "inputs": inputs,
                    "report": report.to_dict(),
                }
            )
            write_manifest(out, payload)
            write_manifest(report_path, {"stage": "clean", "stage_key": key})

        self._run_stage("clean", [out, report_path], key, produce)

    def _surface(self):
        cfg = self.config
        src = cfg.path("clean")
        out = cfg.path("surface")
        moments_out = cfg.path("moments")
        lag_list = cfg.lag_list()
        stage_cfg = {"lags": list(lag_list), "grid": cfg.grid.to_dict()}
        inputs = self._input_hashes("surface", {"clean": src})
        key = _key_of("surface", stage_cfg, inputs)

        def produce():
            series = read_prms(src)
            rows = lags_mod.compute_moments_table(series, lag_list)
            lags_mod.write_moments_csv(rows, moments_out)
            surf = surface_mod.accumulate_surface(
                series, rows, cfg.grid, threads=cfg.threads
            )
            surface_mod.write_surface_csv(surf, out)
            clean_cfg_hash = hashlib.sha256(
                canonical_json(
                    {
                        "lower_q": cfg.cleaning.lower_q,
                        "upper_q": cfg.cleaning.upper_q,
                        "jump_threshold": cfg.cleaning.jump_threshold,
                    }
                ).encode()
            ).hexdigest()
            payload = surface_mod.surface_manifest(surf)
            payload.update(
                {
                    "stage": "surface",
                    "stage_key": key,
                    "config": stage_cfg,
                    "cleaning_config_sha256": clean_cfg_hash,
                    "inputs": inputs,
                }
            )
            write_manifest(out, payload)
            write_manifest(moments_out, {"stage": "surface", "stage_key": key})

        self._run_stage("surface", [out, moments_out], key, produce)

    def _decompose(self):
        cfg = self.config
        src = cfg.path("surface")
        heat_out = cfg.path("heatmap")
        summary_out = cfg.path("summary")
        stage_cfg = {
            "local_index": cfg.local_index,
            "bootstrap": {
                "n_replicates": cfg.bootstrap.n_replicates,
                "seed": cfg.bootstrap.seed,
                "quantiles": list(cfg.bootstrap.quantiles),
                "recompute_weights": cfg.bootstrap.recompute_weights,
            },
        }
        inputs = self._input_hashes("decompose", {"surface": src})
        key = _key_of("decompose", stage_cfg, inputs)

        def produce():
            surf = surface_mod.read_surface_csv(src, read_manifest(src))
            pairs = decomp_mod.decompose(surf, cfg.local_index)
            summaries = decomp_mod.summarize(pairs, cfg.bootstrap)
            decomp_mod.write_heatmap_csv(pairs, heat_out)
            decomp_mod.write_summary_csv(summaries, summary_out)
            meta = {
                "stage": "decompose",
                "stage_key": key,
                "config": stage_cfg,
                "inputs": inputs,
            }
            write_manifest(heat_out, meta)
            write_manifest(summary_out, meta)

        self._run_stage("decompose", [heat_out, summary_out], key, produce)

    def _render(self):
        cfg = self.config
        if not cfg.figures:
            return
        inputs = self._input_hashes(
            "render",
            {
                "surface": cfg.path("surface"),
                "heatmap": cfg.path("heatmap"),
                "summary": cfg.path("summary"),
            },
        )
        for fig in cfg.figures:
            wired = figures_mod.FigureSpec(
                kind=fig.kind,
                out=str(Path(cfg.workdir) / fig.out),
                surface=fig.surface or str(cfg.path("surface")),
                heatmap=fig.heatmap or str(cfg.path("heatmap")),
                summary=fig.summary or str(cfg.path("summary")),
                vmax=fig.vmax,
            )
            out = Path(wired.out)
            stage_cfg = wired.to_dict()
            key = _key_of("render", stage_cfg, inputs)

            def produce(spec=wired, key=key, stage_cfg=stage_cfg):
                figures_mod.render_figure(spec)
                write_manifest(
                    Path(spec.out),
                    {
                        "stage": "render",
                        "stage_key": key,
                        "config": stage_cfg,
                        "inputs": inputs,
                    },
                )

            self._run_stage(f"render:{fig.kind}", [out], key, produce)


def run_pipeline(config: PipelineConfig, force: bool = False) -> list[StageStatus]:
    return Pipeline(config, force=force).run()


def apply_override(raw: dict, item: str) -> None:
    """Apply one 'dotted.key=value' override in place; values parse as JSON
    with a plain-string fallback."""
    if "=" not in item:
        raise ValidationFailed([f"override '{item}' is not key=value"])
    key, _, value = item.partition("=")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValidationFailed([f"override '{key}' crosses a non-object entry"])
    node[parts[-1]] = parsed
