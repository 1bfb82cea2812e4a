"""Model bundle files: a self-describing flat binary format.

Layout (all integers little-endian):

    bytes 0..7    magic b"ECBUNDLE"
    bytes 8..11   format version, uint32 (currently 1)
    bytes 12..15  header length in bytes, uint32
    header        UTF-8 JSON
    payload       the named parameter arrays, concatenated in header order,
                  each as raw float64 little-endian values in row-major order

The JSON header carries ``kind`` ("lstm" or "tcn"), the architecture fields
needed to rebuild the bundle, training metadata (seed, epochs, final
losses), and ``arrays``: an ordered list of {"name", "shape"} entries that
fixes the payload layout bit-exactly. See docs/bundle_format.md.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .lstm import LstmLayerParams, LstmModelConfig, ModelBundle
from .tcn import ResidualBlockParams, TcnBundle, TcnConfig

MAGIC = b"ECBUNDLE"
VERSION = 1


def _header(bundle) -> dict:
    if isinstance(bundle, ModelBundle):
        cfg = bundle.config
        arch = {
            "kind": "lstm",
            "variant": cfg.variant,
            "input_features": cfg.input_features,
            "hidden": cfg.hidden,
            "layers": cfg.layers,
            "output_dropout": cfg.output_dropout,
            "recurrent_dropout": cfg.recurrent_dropout,
            "epochs": cfg.epochs,
        }
    elif isinstance(bundle, TcnBundle):
        cfg = bundle.config
        arch = {
            "kind": "tcn",
            "variant": cfg.name,
            "stacks": cfg.stacks,
            "filters": cfg.filters,
            "dilations": list(cfg.dilations),
            "dropout": cfg.dropout,
            "batch_size": cfg.batch_size,
            "kernel_size": cfg.kernel_size,
            "epochs": cfg.epochs,
            "input_features": cfg.input_features,
        }
    else:
        raise TypeError(f"cannot serialize {type(bundle).__name__}")
    arch["seed"] = bundle.seed
    arch["epochs_run"] = bundle.epochs_run
    arch["final_losses"] = bundle.final_losses
    arch["arrays"] = [{"name": n, "shape": list(a.shape)}
                      for n, a in bundle.parameter_items()]
    return arch


def save_bundle(path, bundle) -> None:
    head = json.dumps(_header(bundle), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(VERSION).tobytes())
        fh.write(np.uint32(len(head)).tobytes())
        fh.write(head)
        for _, arr in bundle.parameter_items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_bundle(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise DataFormatError(f"{path}: not a bundle file")
    version = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported bundle version {version}")
    hlen = int(np.frombuffer(raw[12:16], dtype="<u4")[0])
    head = json.loads(raw[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays = {}
    for spec in head["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw[offset:offset + 8 * n], dtype="<f8").reshape(shape).copy()
        offset += 8 * n
        arrays[spec["name"]] = arr
    if offset != len(raw):
        raise DataFormatError(f"{path}: trailing bytes after payload")
    bundle = _rebuild(head, arrays)
    bundle.seed = head.get("seed")
    bundle.epochs_run = head.get("epochs_run", 0)
    bundle.final_losses = head.get("final_losses", {})
    return bundle


def _rebuild(head: dict, arrays: dict):
    if head["kind"] == "lstm":
        cfg = LstmModelConfig(
            variant=head["variant"], input_features=head["input_features"],
            hidden=head["hidden"], layers=head["layers"],
            output_dropout=head["output_dropout"],
            recurrent_dropout=head["recurrent_dropout"], epochs=head["epochs"])
        layers = [LstmLayerParams(arrays[f"layer{i}.W"], arrays[f"layer{i}.U"],
                                  arrays[f"layer{i}.b"]) for i in range(cfg.layers)]
        return ModelBundle(
            config=cfg, layers=layers,
            cls_w=arrays.get("cls.w"), cls_b=arrays.get("cls.b"),
            pred_w=arrays.get("pred.w"), pred_b=arrays.get("pred.b"))
    if head["kind"] == "tcn":
        cfg = TcnConfig(
            name=head["variant"], stacks=head["stacks"], filters=head["filters"],
            dilations=tuple(head["dilations"]), dropout=head["dropout"],
            batch_size=head["batch_size"], kernel_size=head["kernel_size"],
            epochs=head["epochs"], input_features=head["input_features"])
        blocks = []
        for i, d in enumerate(cfg.block_dilations):
            blocks.append(ResidualBlockParams(
                arrays[f"block{i}.k1"], arrays[f"block{i}.b1"],
                arrays[f"block{i}.k2"], arrays[f"block{i}.b2"],
                arrays.get(f"block{i}.down_k"), arrays.get(f"block{i}.down_b"),
                dilation=d))
        return TcnBundle(cfg, blocks, arrays["head.w"], arrays["head.b"])
    raise DataFormatError(f"unknown bundle kind {head['kind']!r}")
