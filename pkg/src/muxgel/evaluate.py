"""Batch reconstruction runs, metric evaluation, and score ranking."""

from __future__ import annotations

import json
from pathlib import Path

from . import __version__
from .dataset import load_manifest
from .demux import demux
from .errors import ConfigError, ContractError
from .imaging import read_png, write_muxf, write_png
from .metrics import MetricsReport, ScoreWeights, compute_report, selection_score
from .pipeline import load_sample

RUN_DESCRIPTOR = "demux_run.json"
PRED_SUFFIXES = {"vis": "_vis_hat.png", "tac": "_tac_hat.png", "res": "_res_hat.muxf"}


def demux_dataset(in_dir, mode: str, out_dir, mask_source: str = "nominal",
                  sigma: float | None = None, iterations: int = 8) -> dict:
    """Reconstruct every accepted sample of a dataset; writes per-sample
    prediction files and a run descriptor."""
    manifest = load_manifest(in_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ids = []
    for rec in manifest["samples"]:
        sid = rec["id"]
        missing = [n for n in rec["files"].values() if not (Path(in_dir) / n).exists()]
        if missing:
            raise ContractError(f"{sid}: missing artifacts {missing}")
        s = load_sample(in_dir, sid)
        grid = int(s.meta["grid"])
        result = demux(
            s.i_mux,
            mode,
            grid,
            i_ref=s.i_ref if mode != "si" else None,
            tactile_background=s.t_bg_jit if mode == "di-rest" else None,
            true_mask=s.m_wavy if mask_source == "provided" else None,
            mask_source=mask_source,
            sigma=sigma,
            iterations=iterations,
        )
        write_png(out / f"{sid}{PRED_SUFFIXES['vis']}", result.vision)
        write_png(out / f"{sid}{PRED_SUFFIXES['tac']}", result.tactile)
        if result.residual is not None:
            write_muxf(out / f"{sid}{PRED_SUFFIXES['res']}", result.residual)
        ids.append(sid)

    descriptor = {
        "version": __version__,
        "mode": mode,
        "mask_source": mask_source,
        "sigma": sigma,
        "iterations": iterations,
        "source": str(in_dir),
        "ids": ids,
    }
    with open(out / RUN_DESCRIPTOR, "w") as fh:
        json.dump(descriptor, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return descriptor


def _load_lpips_file(path) -> dict:
    with open(path) as fh:
        table = json.load(fh)
    if not isinstance(table, dict):
        raise ContractError(f"{path}: expected an id -> {{lpips_t, lpips_v}} object")
    return table


def _align_ids(pred_dir, truth_dir):
    truth_ids = [rec["id"] for rec in load_manifest(truth_dir)["samples"]]
    pred = Path(pred_dir)
    pred_ids = sorted(p.name[: -len(PRED_SUFFIXES["vis"])]
                      for p in pred.glob(f"*{PRED_SUFFIXES['vis']}"))
    missing = [i for i in truth_ids if i not in set(pred_ids)]
    extra = [i for i in pred_ids if i not in set(truth_ids)]
    if missing or extra:
        raise ContractError(
            "prediction/truth ids disagree; "
            f"missing predictions: {missing or 'none'}; "
            f"predictions without truth: {extra or 'none'}"
        )
    return truth_ids


def evaluate_datasets(pred_dir, truth_dir, lpips_file=None, pseudo_lpips=False,
                      score_weights: ScoreWeights = ScoreWeights()) -> dict:
    """Per-sample and mean MetricsReports for a reconstruction run."""
    ids = _align_ids(pred_dir, truth_dir)
    lpips = _load_lpips_file(lpips_file) if lpips_file else {}

    per_sample = {}
    for sid in ids:
        pred_v = read_png(Path(pred_dir) / f"{sid}{PRED_SUFFIXES['vis']}")
        pred_t = read_png(Path(pred_dir) / f"{sid}{PRED_SUFFIXES['tac']}")
        truth = load_sample(truth_dir, sid)
        entry = lpips.get(sid, {})
        per_sample[sid] = compute_report(
            pred_v, truth.target_vision, pred_t, truth.target_tactile,
            lpips_t=entry.get("lpips_t"), lpips_v=entry.get("lpips_v"),
            pseudo_lpips=pseudo_lpips, score_weights=score_weights,
        )

    aggregate = aggregate_reports(list(per_sample.values()))
    return {
        "version": __version__,
        "count": len(ids),
        "aggregate": aggregate.to_dict() if aggregate else None,
        "per_sample": {sid: rep.to_dict() for sid, rep in per_sample.items()},
    }


def aggregate_reports(reports) -> MetricsReport | None:
    """Field-wise arithmetic mean; optional fields average only when every
    report carries them."""
    if not reports:
        return None
    values = {}
    for key in MetricsReport._KEYS:
        col = [getattr(r, key) for r in reports]
        values[key] = None if any(v is None for v in col) else sum(col) / len(col)
    return MetricsReport.from_dict(values)


def _candidate_inputs(name: str, doc: dict) -> dict:
    """Extract the four score inputs, accepting either direct ssim keys or
    report-style one_minus_ssim keys."""
    out = {}
    for mod in ("t", "v"):
        if f"ssim_{mod}" in doc:
            out[f"ssim_{mod}"] = float(doc[f"ssim_{mod}"])
        elif doc.get(f"one_minus_ssim_{mod}") is not None:
            out[f"ssim_{mod}"] = 1.0 - float(doc[f"one_minus_ssim_{mod}"])
        if doc.get(f"lpips_{mod}") is not None:
            out[f"lpips_{mod}"] = float(doc[f"lpips_{mod}"])
    missing = [k for k in ("ssim_t", "lpips_t", "ssim_v", "lpips_v") if k not in out]
    if missing:
        raise ContractError(f"candidate {name!r}: missing metric fields {missing}")
    return out


def load_candidates(metric_files) -> dict:
    """Each file is one candidate named by its stem, unless it carries a
    'candidates' object mapping names to metric dicts. Aggregate-bearing
    evaluation reports contribute their aggregate."""
    candidates = {}
    for path in metric_files:
        path = Path(path)
        with open(path) as fh:
            doc = json.load(fh)
        if "candidates" in doc:
            for name, sub in doc["candidates"].items():
                candidates[name] = _candidate_inputs(name, sub)
        elif "aggregate" in doc and isinstance(doc["aggregate"], dict):
            candidates[path.stem] = _candidate_inputs(path.stem, doc["aggregate"])
        else:
            candidates[path.stem] = _candidate_inputs(path.stem, doc)
    if not candidates:
        raise ContractError("no candidates found in the given metric files")
    return candidates


def score_candidates(candidates: dict, weights: ScoreWeights = ScoreWeights()) -> list:
    """Ranked (name, score, inputs) rows, best first; ties break by name."""
    rows = []
    for name, m in candidates.items():
        s = selection_score(m["ssim_t"], m["lpips_t"], m["ssim_v"], m["lpips_v"], weights)
        rows.append({"name": name, "score": s, **m})
    rows.sort(key=lambda r: (-r["score"], r["name"]))
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows


def parse_score_weights(text: str | None) -> ScoreWeights:
    """Accept 'ts,tl,vs,vl' or a JSON file path with those keys."""
    if not text:
        return ScoreWeights()
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ConfigError("score weights need exactly four values: ts,tl,vs,vl")
        try:
            ts, tl, vs, vl = (float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"bad score weight: {exc}") from exc
        return ScoreWeights(ts=ts, tl=tl, vs=vs, vl=vl)
    with open(text) as fh:
        doc = json.load(fh)
    try:
        return ScoreWeights(ts=float(doc["ts"]), tl=float(doc["tl"]),
                            vs=float(doc["vs"]), vl=float(doc["vl"]))
    except KeyError as exc:
        raise ConfigError(f"score weights file {text}: missing key {exc}") from exc
