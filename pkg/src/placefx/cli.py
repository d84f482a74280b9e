"""Pipeline orchestration and the command-line interface.

Stages (ingest, elicit, aggregate, weights, fit, stack, quantile,
simulate, report) read their inputs from a prior stage's output
directory or from the configured raw files, write atomically, and record
everything in ``run_manifest.json``.  All randomness flows from the
config seed; re-running with identical inputs reproduces byte-identical
CSV/JSON outputs (the manifest itself carries wall-clock durations and
is excluded from that guarantee).
"""

from __future__ import annotations

import json
import logging
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import click
import numpy as np
import pandas as pd

from . import __version__, naming
from .aggregate import ApproachAggregate, SampleSpec, build_panel, cbg_mean, group_summary
from .econ import contrast_ladder, default_specs, ladder_text_table
from .elicit import (
    HttpEndpointClient,
    PromptCache,
    PromptChainConfig,
    mock_endpoint,
    run_chain,
)
from .figures import parity_figure, r2_interval_figure, violin_figure
from .ingest import (
    filter_cbgs,
    load_authoritative,
    load_geometries,
    load_manifest,
    load_segmentation,
    write_manifest,
)
from .quantfit import panel_wide, quantile_grid, r2_ladder
from .serialize import file_sha256, stable_hash, write_csv, write_json
from .simgen import DgpConfig, generate
from .spatial import WeightsMatrix, queen_weights
from .stackinf import (
    EQUIVALENCE_CAVEAT,
    build_stacked_rows,
    cluster_bootstrap,
    equivalence_test,
    fit_stacked,
)

log = logging.getLogger(__name__)

STAGE_ORDER = (
    "ingest",
    "elicit",
    "aggregate",
    "simulate",
    "weights",
    "fit",
    "stack",
    "quantile",
    "report",
)

# acyclic read-dependencies between stages; simulate substitutes for the
# ingest -> elicit -> aggregate chain on the offline path
STAGE_DEPS = {
    "ingest": [],
    "elicit": ["ingest"],
    "aggregate": ["ingest", "elicit"],
    "simulate": [],
    "weights": ["aggregate|simulate"],
    "fit": ["aggregate|simulate", "weights"],
    "stack": ["aggregate|simulate", "weights"],
    "quantile": ["aggregate|simulate"],
    "report": ["fit", "stack", "quantile"],
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_PARTIAL = 4


class ConfigInvalid(ValueError):
    def __init__(self, fieldname: str, reason: str):
        self.fieldname = fieldname
        super().__init__(f"config field {fieldname}: {reason}")


class StageInputMissing(RuntimeError):
    def __init__(self, stage: str, detail: str):
        self.stage = stage
        super().__init__(f"stage {stage}: missing input ({detail})")


@dataclass
class RunConfig:
    out_dir: str = "out"
    seed: int = 0
    target_year: int = 2023
    min_images: int = 10
    rounds: int = 5
    quorum: int = 3
    temperature: float = 1.0
    bootstrap_b: int = 500
    taus: tuple[float, ...] = (0.10, 0.25, 0.50, 0.75, 0.90)
    standardization_scope: str = "estimation"
    sar_se: str = "model"
    comparisons: tuple[str, ...] = naming.COMPARISONS
    stack_comparison: str = naming.VS_IDEAL
    stack_specs: tuple[str, ...] = ("ZipFE", "SAR")
    stack_outcomes: tuple[str, ...] = naming.OUTCOMES
    inputs: dict = field(default_factory=dict)
    endpoint: dict = field(default_factory=dict)
    mock: dict | None = None
    dgp: dict = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigInvalid("(file)", f"{path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("(file)", f"not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigInvalid(sorted(unknown)[0], "unknown field")
        cfg = cls(**{k: v for k, v in raw.items() if k in known})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.min_images < 1:
            raise ConfigInvalid("min_images", "must be >= 1")
        if self.rounds < 1:
            raise ConfigInvalid("rounds", "must be >= 1")
        if not 1 <= self.quorum <= self.rounds:
            raise ConfigInvalid("quorum", "must be in [1, rounds]")
        if self.bootstrap_b < 1:
            raise ConfigInvalid("bootstrap_b", "must be >= 1")
        if self.standardization_scope not in ("estimation", "full"):
            raise ConfigInvalid("standardization_scope", "must be estimation|full")
        if self.sar_se not in ("model", "cluster"):
            raise ConfigInvalid("sar_se", "must be model|cluster")
        for tau in self.taus:
            if not 0.0 < float(tau) < 1.0:
                raise ConfigInvalid("taus", f"{tau} outside (0, 1)")
        for comparison in self.comparisons:
            if comparison not in naming.COMPARISONS:
                raise ConfigInvalid("comparisons", f"unknown {comparison!r}")
        if self.stack_comparison not in (*naming.COMPARISONS, "all"):
            raise ConfigInvalid("stack_comparison", f"unknown {self.stack_comparison!r}")
        for spec in self.stack_specs:
            if spec not in ("ZipFE", "SAR"):
                raise ConfigInvalid("stack_specs", f"unknown {spec!r}")
        for outcome in self.stack_outcomes:
            if outcome not in naming.OUTCOMES:
                raise ConfigInvalid("stack_outcomes", f"unknown {outcome!r}")
        if self.mock is not None and self.mock.get("profile") not in (
            "affluent",
            "deprived",
            "mixed",
        ):
            raise ConfigInvalid("mock.profile", "must be affluent|deprived|mixed")
        if self.workers < 1:
            raise ConfigInvalid("workers", "must be >= 1")

    def out(self, *parts: str) -> Path:
        return Path(self.out_dir).joinpath(*parts)

    def public_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _require_file(stage: str, path: Path) -> Path:
    if not Path(path).exists():
        raise StageInputMissing(stage, str(path))
    return Path(path)


def _read_panel(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"cbg_id": str, "zip_code": str})


def _panel_source(cfg: RunConfig, stage: str) -> Path:
    for candidate in (cfg.out("aggregate"), cfg.out("simulate")):
        if (candidate / "panel_meta.json").exists():
            return candidate
    raise StageInputMissing(stage, "no aggregate/ or simulate/ panel outputs found")


def _load_meta(src: Path) -> dict:
    with open(src / "panel_meta.json", encoding="utf-8") as fh:
        return json.load(fh)


def _panel_path(src: Path, comparison: str) -> Path:
    return src / f"panel_{comparison}.csv"


def _write_panel(path: Path, panel: pd.DataFrame) -> None:
    cols = list(panel.columns)
    write_csv(path, cols, panel.itertuples(index=False, name=None))


# ---------------------------------------------------------------------------
# stages


def stage_ingest(cfg: RunConfig) -> dict:
    inputs = cfg.inputs
    for key in ("manifest", "acs", "geo", "seg"):
        if not inputs.get(key):
            raise StageInputMissing("ingest", f"config inputs.{key} not set")
        _require_file("ingest", Path(inputs[key]))
    out = cfg.out("ingest")
    out.mkdir(parents=True, exist_ok=True)

    records = load_manifest(inputs["manifest"], target_year=cfg.target_year)
    kept, dropped = filter_cbgs(records, min_images=cfg.min_images)
    cbgs = load_authoritative(
        inputs["acs"], inputs["geo"], canopy_path=inputs.get("geie")
    )
    shares = load_segmentation(inputs["seg"], {r.pano_id for r in records})

    write_manifest(records, out / "manifest_clean.csv")
    write_csv(
        out / "cbg_attributes.csv",
        ["cbg_id", "acs_poverty", "geie_canopy", "holc_group", "zip_code",
         *naming.COVARIATE_NAMES],
        (
            (
                c.cbg_id, c.acs_poverty, c.geie_canopy, c.holc_group, c.zip_code,
                *[c.covariates.get(k) for k in naming.COVARIATE_NAMES],
            )
            for c in cbgs
        ),
    )
    write_csv(
        out / "seg_shares.csv",
        ["pano_id", "canopy_share", "poverty_proxy"],
        ((s.pano_id, s.canopy_share, s.poverty_proxy) for s in shares),
    )
    write_json(
        out / "kept_cbgs.json",
        {"min_images": cfg.min_images, "kept": sorted(kept), "dropped": sorted(dropped)},
    )
    return {"n_panoramas": len(records), "n_cbgs": len(cbgs), "n_kept": len(kept)}


def stage_elicit(cfg: RunConfig) -> dict:
    manifest_path = _require_file("elicit", cfg.out("ingest", "manifest_clean.csv"))
    records = load_manifest(manifest_path, target_year=cfg.target_year)
    out = cfg.out("elicit")
    out.mkdir(parents=True, exist_ok=True)

    chain_cfg = PromptChainConfig(
        rounds=cfg.rounds,
        quorum=cfg.quorum,
        endpoint_url=cfg.endpoint.get("url", ""),
        model_name=cfg.endpoint.get("model_name", "vision-default"),
        temperature=cfg.temperature,
        timeout_s=cfg.endpoint.get("timeout_s", 60.0),
        max_retries=cfg.endpoint.get("max_retries", 2),
        max_in_flight=cfg.endpoint.get("max_in_flight", max(1, cfg.workers)),
        credential_env=cfg.endpoint.get("credential_env", "PLACEFX_ENDPOINT_TOKEN"),
    )
    if cfg.mock is not None:
        client = mock_endpoint(int(cfg.mock.get("seed", cfg.seed)), cfg.mock["profile"])
    else:
        client = HttpEndpointClient(chain_cfg)
    cache = PromptCache(out / "audit")

    jobs = [
        (rec.pano_id, tile)
        for rec in records
        for tile in rec.tiles
        if tile.valid
    ]
    results = {}
    with ThreadPoolExecutor(max_workers=max(1, chain_cfg.max_in_flight)) as pool:
        futures = {
            pool.submit(run_chain, pano_id, tile, chain_cfg, client, cache): (pano_id, tile.heading)
            for pano_id, tile in jobs
        }
        for fut, key in futures.items():
            results[key] = fut.result()

    rows = []
    for (pano_id, heading) in sorted(results):
        r = results[(pano_id, heading)]
        rows.append(
            (
                pano_id,
                heading,
                r.consensus_poverty,
                r.consensus_canopy,
                r.n_valid_rounds_poverty,
                r.n_valid_rounds_canopy,
            )
        )
    write_csv(
        out / "elicitation.csv",
        ["pano_id", "heading", "consensus_poverty", "consensus_canopy",
         "n_valid_rounds_poverty", "n_valid_rounds_canopy"],
        rows,
    )
    return {"n_tiles": len(jobs)}


def _aggregate_approach_values(
    records, per_pano: dict[str, tuple[float | None, float | None]]
) -> dict[str, ApproachAggregate]:
    """Collapse per-panorama (poverty, canopy) values to block groups,
    weighting each panorama by its valid-tile count."""
    by_cbg: dict[str, list] = {}
    for rec in records:
        if rec.pano_id in per_pano:
            by_cbg.setdefault(rec.cbg_id, []).append(rec)
    out = {}
    for cbg_id, recs in by_cbg.items():
        pov_pairs = [
            (per_pano[r.pano_id][0], r.n_valid_tiles)
            for r in recs
            if per_pano[r.pano_id][0] is not None and r.n_valid_tiles > 0
        ]
        can_pairs = [
            (per_pano[r.pano_id][1], r.n_valid_tiles)
            for r in recs
            if per_pano[r.pano_id][1] is not None and r.n_valid_tiles > 0
        ]
        if not pov_pairs or not can_pairs:
            continue
        weight = sum(r.n_valid_tiles for r in recs)
        out[cbg_id] = ApproachAggregate(
            poverty=cbg_mean(pov_pairs), canopy=cbg_mean(can_pairs), weight_images=weight
        )
    return out


def stage_aggregate(cfg: RunConfig) -> dict:
    ingest_dir = cfg.out("ingest")
    manifest_path = _require_file("aggregate", ingest_dir / "manifest_clean.csv")
    elicit_path = _require_file("aggregate", cfg.out("elicit", "elicitation.csv"))
    seg_path = _require_file("aggregate", ingest_dir / "seg_shares.csv")
    kept_path = _require_file("aggregate", ingest_dir / "kept_cbgs.json")
    if not cfg.inputs.get("acs") or not cfg.inputs.get("geo"):
        raise StageInputMissing("aggregate", "config inputs.acs / inputs.geo not set")

    records = load_manifest(manifest_path, target_year=cfg.target_year)
    cbgs = load_authoritative(
        cfg.inputs["acs"], cfg.inputs["geo"], canopy_path=cfg.inputs.get("geie")
    )
    with open(kept_path, encoding="utf-8") as fh:
        kept = set(json.load(fh)["kept"])

    elic = pd.read_csv(elicit_path, dtype={"pano_id": str})
    per_pano_mllm: dict[str, tuple[float | None, float | None]] = {}
    for pano_id, group in elic.groupby("pano_id"):
        pov = group["consensus_poverty"].dropna()
        can = group["consensus_canopy"].dropna()
        per_pano_mllm[str(pano_id)] = (
            float(pov.mean()) if len(pov) else None,
            float(can.mean()) if len(can) else None,
        )
    mllm = _aggregate_approach_values(records, per_pano_mllm)

    seg_df = pd.read_csv(seg_path, dtype={"pano_id": str})
    per_pano_seg = {
        str(r.pano_id): (float(r.poverty_proxy), float(r.canopy_share))
        for r in seg_df.itertuples()
    }
    seg = _aggregate_approach_values(records, per_pano_seg)

    out = cfg.out("aggregate")
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "covariate_names": list(naming.COVARIATE_NAMES),
        "standardization_scope": cfg.standardization_scope,
        "comparisons": list(cfg.comparisons),
        "geometry_path": cfg.inputs["geo"],
        "panels": {},
    }
    for comparison in (*cfg.comparisons, "all"):
        spec = SampleSpec(
            comparison=comparison, standardization_scope=cfg.standardization_scope
        )
        panel, pmeta = build_panel(cbgs, mllm, seg, spec, kept_cbgs=kept)
        _write_panel(_panel_path(out, comparison), panel)
        meta["panels"][comparison] = {
            k: pmeta[k] for k in ("n_cbgs", "n_rows", "n_treated")
        }
    write_json(out / "panel_meta.json", meta)
    return {"panels": list(meta["panels"])}


def stage_simulate(cfg: RunConfig) -> dict:
    dgp_kwargs = dict(cfg.dgp)
    dgp_kwargs.setdefault("seed", cfg.seed)
    if "delta_true" in dgp_kwargs:
        dgp_kwargs["delta_true"] = {
            k: float(v) for k, v in dgp_kwargs["delta_true"].items()
        }
    if "approach_bias" in dgp_kwargs:
        dgp_kwargs["approach_bias"] = {
            k: tuple(v) for k, v in dgp_kwargs["approach_bias"].items()
        }
    if "beta" in dgp_kwargs:
        dgp_kwargs["beta"] = tuple(dgp_kwargs["beta"])
    try:
        dgp = DgpConfig(**dgp_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid("dgp", str(exc)) from None
    panel, weights, truth = generate(dgp)

    out = cfg.out("simulate")
    out.mkdir(parents=True, exist_ok=True)
    comparison = truth["comparison"]
    _write_panel(_panel_path(out, comparison), panel)
    _write_panel(_panel_path(out, "all"), panel)
    write_json(out / f"weights_{comparison}.json", weights.to_json_dict())
    write_json(out / "weights_all.json", weights.to_json_dict())
    write_json(out / "truth.json", truth)
    write_json(
        out / "panel_meta.json",
        {
            "covariate_names": truth["covariate_names"],
            "standardization_scope": "estimation",
            "comparisons": [comparison],
            "panels": {
                comparison: {
                    "n_cbgs": weights.n,
                    "n_rows": len(panel),
                    "n_treated": truth["n_treated"],
                },
                "all": {
                    "n_cbgs": weights.n,
                    "n_rows": len(panel),
                    "n_treated": truth["n_treated"],
                },
            },
        },
    )
    return {"n_cbgs": weights.n, "comparison": comparison}


def stage_weights(cfg: RunConfig) -> dict:
    src = _panel_source(cfg, "weights")
    meta = _load_meta(src)
    out = cfg.out("weights")
    out.mkdir(parents=True, exist_ok=True)
    emitted = {}
    comparisons = list(meta["comparisons"])
    if _panel_path(src, "all").exists():
        comparisons.append("all")
    for comparison in comparisons:
        pre_built = src / f"weights_{comparison}.json"
        target = out / f"weights_{comparison}.json"
        if pre_built.exists():
            shutil.copyfile(pre_built, target)
            emitted[comparison] = "copied"
            continue
        geo_path = meta.get("geometry_path")
        if not geo_path or not Path(geo_path).exists():
            raise StageInputMissing("weights", "no geometry source for queen weights")
        panel = _read_panel(_require_file("weights", _panel_path(src, comparison)))
        ids = sorted(panel["cbg_id"].unique())
        geoms = load_geometries(geo_path)
        missing = [c for c in ids if c not in geoms]
        if missing:
            raise StageInputMissing("weights", f"geometry missing for {missing[:5]}")
        w = queen_weights({c: geoms[c] for c in ids})
        write_json(target, w.to_json_dict())
        emitted[comparison] = "built"
    return emitted


def _load_weights(cfg: RunConfig, comparison: str, stage: str) -> WeightsMatrix:
    path = cfg.out("weights", f"weights_{comparison}.json")
    if not path.exists():
        src = _panel_source(cfg, stage)
        path = src / f"weights_{comparison}.json"
    if not path.exists():
        raise StageInputMissing(stage, f"weights for {comparison} (run the weights stage)")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return WeightsMatrix.from_neighbors(doc["ids"], doc["neighbors"])


def stage_fit(cfg: RunConfig) -> dict:
    src = _panel_source(cfg, "fit")
    meta = _load_meta(src)
    comparisons = meta["comparisons"]
    covariates = tuple(meta["covariate_names"])
    panels = {}
    weights = {}
    for comparison in comparisons:
        panels[comparison] = _read_panel(
            _require_file("fit", _panel_path(src, comparison))
        )
        weights[comparison] = _load_weights(cfg, comparison, "fit")
    specs = [s for s in default_specs(covariates) if s.comparison in comparisons]
    ladder = contrast_ladder(panels, specs, weights, sar_se=cfg.sar_se)

    out = cfg.out("fit")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "ladder.csv",
        list(ladder.columns),
        ladder.itertuples(index=False, name=None),
    )
    (out / "ladder.txt").write_text(ladder_text_table(ladder), encoding="utf-8")
    n_failed = int((ladder["status"] != "ok").sum())
    return {"n_cells": len(ladder), "n_failed": n_failed, "partial": n_failed > 0}


def stage_stack(cfg: RunConfig) -> dict:
    src = _panel_source(cfg, "stack")
    meta = _load_meta(src)
    covariates = tuple(meta["covariate_names"])
    comparison = cfg.stack_comparison
    if comparison not in meta["comparisons"] and comparison != "all":
        comparison = meta["comparisons"][0]
    panel = _read_panel(_require_file("stack", _panel_path(src, comparison)))
    weights = (
        _load_weights(cfg, comparison, "stack") if "SAR" in cfg.stack_specs else None
    )

    out = cfg.out("stack")
    out.mkdir(parents=True, exist_ok=True)
    draw_rows = []
    verdicts: dict = {}
    points: dict = {}
    for outcome in cfg.stack_outcomes:
        rows = build_stacked_rows(panel, outcome, covariate_names=covariates)
        dists = {}
        for spec in cfg.stack_specs:
            point = fit_stacked(rows, spec, weights=weights, covariate_names=covariates)
            seed = int(
                stable_hash({"seed": cfg.seed, "outcome": outcome, "spec": spec})[:8],
                16,
            )
            dist = cluster_bootstrap(
                rows,
                spec,
                B=cfg.bootstrap_b,
                seed=seed,
                weights=weights,
                covariate_names=covariates,
            )
            dists[spec] = dist
            points.setdefault(outcome, {})[spec] = {
                "delta0": point.delta0,
                "theta": point.theta,
                "totals": point.totals,
                "rho": point.rho,
            }
            for b in range(dist.n_ok):
                draw_rows.append(
                    (
                        outcome,
                        spec,
                        b,
                        dist.delta0_draws[b],
                        dist.theta_draws[b, 0],
                        dist.theta_draws[b, 1],
                        dist.draws[b, 0],
                        dist.draws[b, 1],
                        dist.draws[b, 2],
                    )
                )
            verdicts.setdefault(outcome, {})[spec] = {
                a: equivalence_test(dist, a) for a in dist.approaches[1:]
            }
        violin_figure(dists, outcome, out / f"violin_{outcome}.svg")

    write_csv(
        out / "bootstrap_draws.csv",
        ["outcome", "spec", "draw", "delta0",
         f"theta_{naming.MLLM}", f"theta_{naming.SEGMENTATION}",
         f"total_{naming.AUTHORITATIVE}", f"total_{naming.MLLM}",
         f"total_{naming.SEGMENTATION}"],
        draw_rows,
    )
    write_json(
        out / "equivalence.json",
        {
            "comparison": comparison,
            "B": cfg.bootstrap_b,
            "verdicts": verdicts,
            "point_estimates": points,
            "caveat": EQUIVALENCE_CAVEAT,
        },
    )
    return {"outcomes": list(cfg.stack_outcomes), "specs": list(cfg.stack_specs)}


def stage_quantile(cfg: RunConfig) -> dict:
    src = _panel_source(cfg, "quantile")
    meta = _load_meta(src)
    covariates = [c for c in meta["covariate_names"]]
    panel = _read_panel(_require_file("quantile", _panel_path(src, "all")))
    wide = panel_wide(panel)

    out = cfg.out("quantile")
    out.mkdir(parents=True, exist_ok=True)
    ladder = r2_ladder(wide, covariates, B=cfg.bootstrap_b, seed=cfg.seed)
    grid = quantile_grid(wide, taus=tuple(cfg.taus), B=cfg.bootstrap_b, seed=cfg.seed)
    write_csv(out / "r2_ladder.csv", list(ladder.columns),
              ladder.itertuples(index=False, name=None))
    write_csv(out / "quantile_grid.csv", list(grid.columns),
              grid.itertuples(index=False, name=None))
    r2_interval_figure(ladder, out / "r2_intervals.svg")
    for outcome in naming.OUTCOMES:
        parity_figure(grid, outcome, out / f"parity_{outcome}.svg")
    return {"n_r2_rows": len(ladder), "n_grid_rows": len(grid)}


def stage_report(cfg: RunConfig) -> dict:
    report = cfg.out("report")
    tables = report / "tables"
    figures = report / "figures"
    audit = report / "audit"
    for d in (tables, figures, audit):
        d.mkdir(parents=True, exist_ok=True)

    try:
        src = _panel_source(cfg, "report")
        meta = _load_meta(src)
        panel = _read_panel(_panel_path(src, "all"))
        summary = group_summary(panel, meta["covariate_names"])
        write_csv(tables / "group_summary.csv", list(summary.columns),
                  summary.itertuples(index=False, name=None))
    except StageInputMissing:
        pass  # report can still bundle whatever stages did run

    copies = {
        tables: [
            cfg.out("fit", "ladder.csv"),
            cfg.out("fit", "ladder.txt"),
            cfg.out("stack", "bootstrap_draws.csv"),
            cfg.out("stack", "equivalence.json"),
            cfg.out("quantile", "r2_ladder.csv"),
            cfg.out("quantile", "quantile_grid.csv"),
        ],
        figures: sorted(cfg.out("stack").glob("violin_*.svg"))
        + sorted(cfg.out("quantile").glob("*.svg")),
        audit: [cfg.out("elicit", "audit", "prompt_cache.jsonl")],
    }
    index = {}
    for dest, paths in copies.items():
        for path in paths:
            if not Path(path).exists():
                continue
            target = dest / Path(path).name
            shutil.copyfile(path, target)
            index[str(target.relative_to(report))] = file_sha256(target)
    write_json(report / "index.json", {"files": index, "version": __version__})
    return {"n_files": len(index)}


STAGES = {
    "ingest": stage_ingest,
    "elicit": stage_elicit,
    "aggregate": stage_aggregate,
    "simulate": stage_simulate,
    "weights": stage_weights,
    "fit": stage_fit,
    "stack": stage_stack,
    "quantile": stage_quantile,
    "report": stage_report,
}


def run(cfg: RunConfig, stages: Sequence[str]) -> int:
    """Run the requested stages in canonical order; returns an exit code."""
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigInvalid("stages", f"unknown stage {unknown[0]!r}")
    ordered = [s for s in STAGE_ORDER if s in stages]
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)

    input_hashes = {
        key: file_sha256(path)
        for key, path in sorted(cfg.inputs.items())
        if path and Path(path).exists()
    }
    manifest = {
        "version": __version__,
        "libraries": {"numpy": np.__version__, "pandas": pd.__version__},
        "config": cfg.public_dict(),
        "config_hash": stable_hash(cfg.public_dict()),
        "input_hashes": input_hashes,
        "notes": {
            "sar_se_convention": cfg.sar_se,
            "weights_row_standardized": True,
        },
        "stage_dependencies": {s: STAGE_DEPS[s] for s in ordered},
        "stages": {},
    }
    exit_code = EXIT_OK
    for stage in ordered:
        start = time.monotonic()
        try:
            result = STAGES[stage](cfg)
        except Exception as exc:  # noqa: BLE001 - stage isolation boundary
            manifest["stages"][stage] = {
                "status": "failed",
                "error": f"{type(exc).__name__}: {exc}",
                "duration_s": time.monotonic() - start,
            }
            write_json(cfg.out("run_manifest.json"), manifest)
            log.error("stage %s failed: %s", stage, exc)
            return EXIT_CONFIG if isinstance(exc, ConfigInvalid) else EXIT_STAGE
        duration = time.monotonic() - start
        manifest["stages"][stage] = {
            "status": "ok",
            "duration_s": duration,
            "result": result,
        }
        if isinstance(result, dict) and result.get("partial"):
            exit_code = EXIT_PARTIAL
    write_json(cfg.out("run_manifest.json"), manifest)
    return exit_code


# ---------------------------------------------------------------------------
# click commands


def _load_config(config_path: str | None, overrides: dict) -> RunConfig:
    cfg = RunConfig.from_json(config_path) if config_path else RunConfig.from_dict({})
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _exit(code: int) -> None:
    if code != EXIT_OK:
        sys.exit(code)


def _run_stages(cfg: RunConfig, stages: Sequence[str]) -> None:
    try:
        code = run(cfg, stages)
    except ConfigInvalid as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    _exit(code)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Street-view indicator pipeline and treatment-effect estimation."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--stages", default="simulate,weights,fit,stack,quantile,report",
              show_default=True, help="comma-separated stage subset")
def cmd_run(config_path: str, stages: str) -> None:
    """Run a stage subset from a single JSON config."""
    try:
        cfg = RunConfig.from_json(config_path)
    except ConfigInvalid as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    _run_stages(cfg, [s.strip() for s in stages.split(",") if s.strip()])


@main.command("ingest")
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--manifest", default=None, type=click.Path())
@click.option("--acs", default=None, type=click.Path())
@click.option("--geie", default=None, type=click.Path())
@click.option("--geo", default=None, type=click.Path())
@click.option("--seg", default=None, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
def cmd_ingest(config_path, manifest, acs, geie, geo, seg, out_dir) -> None:
    """Read and validate the raw input files."""
    try:
        cfg = _load_config(config_path, {"out_dir": out_dir})
    except ConfigInvalid as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for key, value in (("manifest", manifest), ("acs", acs), ("geie", geie),
                       ("geo", geo), ("seg", seg)):
        if value is not None:
            cfg.inputs[key] = value
    _run_stages(cfg, ["ingest"])


@main.command("elicit")
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--manifest", default=None, type=click.Path(),
              help="cleaned manifest (defaults to the ingest stage output)")
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--mock", "mock_spec", default=None,
              help="seed,profile for the deterministic endpoint double")
def cmd_elicit(config_path, manifest, out_dir, mock_spec) -> None:
    """Run the four-prompt chain over every valid tile."""
    try:
        cfg = _load_config(config_path, {"out_dir": out_dir})
        if mock_spec:
            seed_str, _, profile = mock_spec.partition(",")
            cfg.mock = {"seed": int(seed_str), "profile": profile.strip() or "mixed"}
            cfg.validate()
    except (ConfigInvalid, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if manifest:
        target = cfg.out("ingest", "manifest_clean.csv")
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(manifest, target)
    _run_stages(cfg, ["elicit"])


def _make_stage_command(stage: str):
    @click.option("--config", "config_path", default=None, type=click.Path())
    @click.option("--out", "out_dir", default=None, type=click.Path())
    def cmd(config_path, out_dir) -> None:
        try:
            cfg = _load_config(config_path, {"out_dir": out_dir})
        except ConfigInvalid as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        _run_stages(cfg, [stage])

    cmd.__doc__ = f"Run the {stage} stage."
    return cmd


for _stage in ("aggregate", "weights", "fit", "stack", "quantile", "simulate", "report"):
    main.command(_stage)(_make_stage_command(_stage))


if __name__ == "__main__":
    main()
