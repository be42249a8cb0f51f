"""Self-describing text checkpoints.

Layout: a version line, then `[section]` blocks of `key = value` pairs, then
one `tensor <name> <ndim> <dims...>` header per parameter followed by its
row-major values on one line. Doubles are written with 17 significant digits,
which float64 round-trips exactly, so save -> load -> predict is bit-identical
to the in-memory model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Scaler
from .encoder import EncoderConfig
from .errors import CheckpointError
from .fileio import write_text_atomic
from .model import MTNet, MTNetConfig

FORMAT_NAME = "mtnet-checkpoint"
FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_vec(values: np.ndarray) -> str:
    return " ".join(_fmt(v) for v in np.asarray(values, dtype=np.float64).ravel())


@dataclass
class Checkpoint:
    config: MTNetConfig
    tensors: dict[str, np.ndarray]
    scaler: Scaler | None
    seed: int
    digest: dict[str, str] = field(default_factory=dict)

    def build_model(self) -> MTNet:
        """Instantiate the model and overwrite every parameter from the file."""
        model = MTNet(self.config, seed=self.seed)
        names = set(model.params.names())
        stored = set(self.tensors)
        if names != stored:
            missing = sorted(names - stored)
            extra = sorted(stored - names)
            raise CheckpointError(f"parameter names disagree with the architecture "
                                  f"(missing {missing}, unexpected {extra})")
        for name in model.params.names():
            p = model.params[name]
            values = self.tensors[name]
            if values.shape != p.value.shape:
                raise CheckpointError(f"parameter {name} has shape {values.shape}, "
                                      f"expected {p.value.shape}")
            p.value.data[...] = values
        return model


def save_checkpoint(path, model: MTNet, scaler: Scaler | None, seed: int,
                    digest: dict | None = None) -> None:
    cfg = model.cfg
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}", "[config]"]
    lines += [
        f"n = {cfg.n}",
        f"T = {cfg.T}",
        f"h = {cfg.h}",
        f"D = {cfg.D}",
        f"targets = {','.join(str(i) for i in cfg.targets)}",
        f"s_ar = {cfg.s_ar}",
        f"encoder.w = {cfg.encoder.w}",
        f"encoder.d_c = {cfg.encoder.d_c}",
        f"encoder.d = {cfg.encoder.d}",
        f"encoder.dropout_rate = {_fmt(cfg.encoder.dropout_rate)}",
    ]
    lines.append("[scaler]")
    if scaler is not None:
        lines.append(f"shift = {_fmt_vec(scaler.shift)}")
        lines.append(f"scale = {_fmt_vec(scaler.scale)}")
    lines.append("[run]")
    lines.append(f"seed = {seed}")
    for key, value in (digest or {}).items():
        lines.append(f"{key} = {value}")
    lines.append("[params]")
    for name in model.params.names():
        value = model.params[name].value.data
        dims = " ".join(str(s) for s in value.shape)
        lines.append(f"tensor {name} {value.ndim}{(' ' + dims) if dims else ''}")
        lines.append(_fmt_vec(value) if value.size else "")
    write_text_atomic(path, "\n".join(lines) + "\n")


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if not lines:
        raise CheckpointError(f"{path}: empty checkpoint file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} file")
    if int(head[1]) != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {head[1]}")

    sections: dict[str, dict[str, str]] = {}
    tensors: dict[str, np.ndarray] = {}
    current = None
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections.setdefault(current, {})
            continue
        if current == "params":
            parts = line.split()
            if parts[0] != "tensor" or len(parts) < 3:
                raise CheckpointError(f"{path}: malformed tensor header {line!r}")
            name = parts[1]
            ndim = int(parts[2])
            dims = tuple(int(x) for x in parts[3:3 + ndim])
            if len(dims) != ndim:
                raise CheckpointError(f"{path}: tensor {name} header is truncated")
            if i >= len(lines):
                raise CheckpointError(f"{path}: tensor {name} is missing its values")
            raw = lines[i].split()
            i += 1
            expected = int(np.prod(dims)) if dims else 1
            if len(raw) != expected:
                raise CheckpointError(f"{path}: tensor {name} has {len(raw)} values, "
                                      f"expected {expected}")
            tensors[name] = np.array([float(v) for v in raw]).reshape(dims)
            continue
        if current is None or "=" not in line:
            raise CheckpointError(f"{path}: unexpected line {line!r}")
        key, _, value = line.partition("=")
        sections[current][key.strip()] = value.strip()

    try:
        conf = sections["config"]
        encoder = EncoderConfig(
            D=int(conf["D"]), T=int(conf["T"]), w=int(conf["encoder.w"]),
            d_c=int(conf["encoder.d_c"]), d=int(conf["encoder.d"]),
            dropout_rate=float(conf["encoder.dropout_rate"]))
        config = MTNetConfig(
            n=int(conf["n"]), T=int(conf["T"]), h=int(conf["h"]), D=int(conf["D"]),
            targets=tuple(int(x) for x in conf["targets"].split(",")),
            s_ar=int(conf["s_ar"]), encoder=encoder)
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing config key {exc}") from None

    scaler = None
    scal = sections.get("scaler", {})
    if "shift" in scal and "scale" in scal:
        scaler = Scaler(shift=np.array([float(v) for v in scal["shift"].split()]),
                        scale=np.array([float(v) for v in scal["scale"].split()]))

    run = dict(sections.get("run", {}))
    seed = int(run.pop("seed", "0"))
    return Checkpoint(config=config, tensors=tensors, scaler=scaler, seed=seed,
                      digest=run)
