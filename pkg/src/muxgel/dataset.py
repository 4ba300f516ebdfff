"""Deterministic dataset materialization and the run manifest.

Sample indices are assigned before dispatch and every file a worker writes
depends only on (config, global seed, index), so the output bytes are
identical no matter how many jobs run. Rejected draws are retried on an
offset stream and logged; the manifest is written last, atomically.
"""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import GenConfig, config_to_dict
from .errors import ConfigError, ContractError
from .imaging import mask_blend
from .pipeline import load_sample, sample_paths, save_sample, synthesize_sample
from .rng import sample_seed

MANIFEST_SCHEMA = "muxgen-manifest/1"
MANIFEST_NAME = "manifest.json"
MAX_ATTEMPTS = 1000


def _generate_slot(cfg: GenConfig, out_dir: str, index: int, global_seed: int) -> dict:
    """Produce the accepted sample for one slot, retrying rejections on the
    attempt-offset stream. Returns the manifest record."""
    rejections = []
    for attempt in range(MAX_ATTEMPTS):
        seed = sample_seed(global_seed, index, attempt)
        result = synthesize_sample(cfg, seed)
        if result.accepted:
            sample_id = f"{index:06d}"
            paths = save_sample(out_dir, sample_id, result.sample)
            return {
                "id": sample_id,
                "seed": seed,
                "accepted": True,
                "attempts": attempt + 1,
                "contact_ratio": result.contact_ratio,
                "files": {k: p.name for k, p in paths.items()},
                "rejections": rejections,
            }
        rejections.append({"attempt": attempt, "seed": seed,
                           "contact_ratio": result.contact_ratio})
    raise ConfigError(
        f"slot {index}: no acceptable sample in {MAX_ATTEMPTS} attempts; "
        "the configured scenes rarely reach the contact threshold"
    )


def generate_dataset(cfg: GenConfig, out_dir, count=None, seed=None, jobs: int = 1) -> dict:
    """Write exactly ``count`` accepted samples plus the manifest."""
    count = cfg.count if count is None else int(count)
    global_seed = cfg.seed if seed is None else int(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if jobs <= 1:
        records = [_generate_slot(cfg, str(out), i, global_seed) for i in range(count)]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_generate_slot, cfg, str(out), i, global_seed)
                for i in range(count)
            ]
            records = [f.result() for f in futures]
    records.sort(key=lambda r: r["id"])

    rejections = []
    for rec in records:
        for rej in rec.pop("rejections"):
            rejections.append({"id": rec["id"], **rej})

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "seed": global_seed,
        "count": count,
        "config": config_to_dict(cfg),
        "samples": records,
        "rejections": rejections,
    }
    write_manifest(out, manifest)
    return manifest


def write_manifest(directory, manifest: dict):
    """Atomic write: temp file in the target directory, then rename."""
    directory = Path(directory)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".manifest-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, directory / MANIFEST_NAME)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise ContractError(f"{directory}: no {MANIFEST_NAME} (not a generated dataset?)")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ContractError(f"{path}: unexpected manifest schema {manifest.get('schema')!r}")
    return manifest


def verify_sample(directory, sample_id: str, contact_threshold: float | None = None):
    """Reload one sample and re-check its reconstruction identity: the
    multiplexed image must equal the mask blend of the stored tactile and
    vision targets, bit-for-bit at file precision."""
    s = load_sample(directory, sample_id)
    recombined = mask_blend(s.m_wavy, s.target_tactile, s.target_vision)
    if not (recombined.data == s.i_mux.data).all():
        raise ContractError(f"{sample_id}: multiplexing identity violated on disk")
    if contact_threshold is not None and not s.meta["contact_ratio"] > contact_threshold:
        raise ContractError(f"{sample_id}: stored contact ratio fails the filter")
    return s


def verify_dataset(directory) -> int:
    """Re-check every accepted sample in a dataset; returns how many passed."""
    manifest = load_manifest(directory)
    threshold = manifest["config"].get("contact_threshold")
    n = 0
    for rec in manifest["samples"]:
        for name in rec["files"].values():
            if not (Path(directory) / name).exists():
                raise ContractError(f"{rec['id']}: missing file {name}")
        verify_sample(directory, rec["id"], threshold)
        n += 1
    return n


def dataset_ids(directory) -> list:
    return [rec["id"] for rec in load_manifest(directory)["samples"]]


def sample_file(directory, sample_id: str, kind: str) -> Path:
    return sample_paths(directory, sample_id)[kind]
