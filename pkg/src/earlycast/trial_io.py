"""Trial CSV files and dataset manifests.

One CSV holds many trials, one row per frame:

    trial_id,frame,label,hand_side,contact_frame,m1x,m1y,...,m9x,m9y,ballx,bally

UTF-8, LF line endings, floats printed with 9 significant digits. Frames of
a trial must be contiguous and start at 0. The manifest is a JSON document
recording the seed, a hash of the generation config and the trial files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .pipeline import N_FEATURES, RawTrial
from .rng import derive_seed

HEADER = ("trial_id,frame,label,hand_side,contact_frame,"
          + ",".join(f"m{i}x,m{i}y" for i in range(1, 10)) + ",ballx,bally")
N_COLUMNS = 5 + N_FEATURES


def write_trials(path, trials: list[RawTrial]) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HEADER + "\n")
        for trial in trials:
            meta = f"{trial.trial_id},{{frame}},{trial.label},{trial.hand_side},{trial.contact_frame},"
            for frame_idx, row in enumerate(trial.frames):
                fh.write(meta.format(frame=frame_idx))
                fh.write(",".join(f"{v:.9g}" for v in row))
                fh.write("\n")


def read_trials(path) -> list[RawTrial]:
    path = Path(path)
    trials: list[RawTrial] = []
    current: dict | None = None

    def finish(block):
        trial = RawTrial(trial_id=block["trial_id"],
                         frames=np.array(block["rows"], dtype=np.float64),
                         label=block["label"], hand_side=block["hand_side"],
                         contact_frame=block["contact_frame"],
                         drop_kind=block.get("drop_kind", "unknown"))
        trials.append(trial)

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != HEADER:
            raise DataFormatError(f"{path}:1: unexpected header")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != N_COLUMNS:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {N_COLUMNS} columns, got {len(parts)}")
            trial_id, frame_s, label_s, hand_side, contact_s = parts[:5]
            try:
                frame = int(frame_s)
                label = int(label_s)
                contact = int(contact_s)
                values = [float(v) for v in parts[5:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise DataFormatError(f"{path}:{lineno}: non-finite coordinate")
            if current is None or current["trial_id"] != trial_id:
                if current is not None:
                    finish(current)
                if frame != 0:
                    raise DataFormatError(
                        f"{path}:{lineno}: trial {trial_id} does not start at frame 0")
                current = {"trial_id": trial_id, "label": label, "hand_side": hand_side,
                           "contact_frame": contact, "rows": []}
            else:
                if frame != len(current["rows"]):
                    raise DataFormatError(
                        f"{path}:{lineno}: frame {frame} out of order for trial {trial_id}")
                if (label != current["label"] or hand_side != current["hand_side"]
                        or contact != current["contact_frame"]):
                    raise DataFormatError(
                        f"{path}:{lineno}: inconsistent metadata within trial {trial_id}")
            current["rows"].append(values)
    if current is not None:
        finish(current)
    if not trials:
        raise DataFormatError(f"{path}: no trials")
    for trial in trials:
        trial.validate()
    return trials


def config_hash(config) -> str:
    """Stable hash of a dataclass-style config."""
    from dataclasses import asdict
    payload = json.dumps(asdict(config), sort_keys=True)
    return f"{derive_seed('config', payload):016x}"


def write_manifest(path, *, seed: int, cfg_hash: str, files: list[str],
                   n_trials: int) -> None:
    doc = {
        "schema": "earlycast-dataset/1",
        "seed": seed,
        "config_hash": cfg_hash,
        "files": files,
        "n_trials": n_trials,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_manifest(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: unreadable manifest: {exc}") from None
    if doc.get("schema") != "earlycast-dataset/1":
        raise DataFormatError(f"{path}: unknown manifest schema {doc.get('schema')!r}")
    return doc
