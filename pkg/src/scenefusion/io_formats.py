"""Bit-exact persistence: one versioned binary container for all array
artifacts plus JSON for human-facing metadata.

Container layout (all little-endian):
    magic   4 bytes  b"SCFA"
    version u32      currently 1
    kind    u32 len + utf-8 payload kind
    meta    u32 len + utf-8 JSON metadata
    count   u32      number of arrays
    per array: u16 name len + name, u8 dtype code (0=f8, 1=i8, 2=bool),
               u8 ndim, ndim x u64 shape, u64 byte length, raw row-major bytes

Floats are 64-bit little-endian, row-major; a write/read round trip is
bit-identical. Truncated or corrupt files raise a clean format error and
never return a partial object.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict

import numpy as np

from .align.model import AlignmentModel, ModelConfig
from .align.vocab import Vocabulary
from .errors import ArtifactFormatError
from .frame import Frame3D
from .geometry import Pose
from .scene import SceneState
from .voxelizer import GridLayout, VoxelGrid

MAGIC = b"SCFA"
VERSION = 1

ARTIFACT_KINDS = ("frame", "grid", "scene", "checkpoint", "render", "tokens")

_DTYPE_CODES = {0: "<f8", 1: "<i8", 2: "|b1"}


def _code_for(arr: np.ndarray) -> tuple[int, np.ndarray]:
    if arr.dtype == bool:
        return 2, np.ascontiguousarray(arr)
    if np.issubdtype(arr.dtype, np.integer):
        return 1, np.ascontiguousarray(arr, dtype="<i8")
    return 0, np.ascontiguousarray(arr, dtype="<f8")


def save_artifact(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    kind_b = kind.encode()
    buf.write(struct.pack("<I", len(kind_b)))
    buf.write(kind_b)
    meta_b = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(meta_b)))
    buf.write(meta_b)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        name_b = name.encode()
        code, data = _code_for(np.asarray(arr))
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", code))
        buf.write(struct.pack("<B", data.ndim))
        for s in data.shape:
            buf.write(struct.pack("<Q", s))
        raw = data.tobytes()
        buf.write(struct.pack("<Q", len(raw)))
        buf.write(raw)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ArtifactFormatError(f"truncated artifact file while reading {what}")
    return data


def load_artifact(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise ArtifactFormatError(f"bad magic {magic!r}; not a scenefusion artifact")
        (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
        if version != VERSION:
            raise ArtifactFormatError(f"unsupported artifact version {version} (want {VERSION})")
        (kl,) = struct.unpack("<I", _read_exact(f, 4, "kind length"))
        kind = _read_exact(f, kl, "kind").decode()
        (ml,) = struct.unpack("<I", _read_exact(f, 4, "meta length"))
        try:
            meta = json.loads(_read_exact(f, ml, "metadata").decode())
        except json.JSONDecodeError as exc:
            raise ArtifactFormatError(f"corrupt metadata block: {exc}") from exc
        (count,) = struct.unpack("<I", _read_exact(f, 4, "array count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nl,) = struct.unpack("<H", _read_exact(f, 2, "array name length"))
            name = _read_exact(f, nl, "array name").decode()
            (code,) = struct.unpack("<B", _read_exact(f, 1, "dtype code"))
            if code not in _DTYPE_CODES:
                raise ArtifactFormatError(f"unknown dtype code {code}")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, "ndim"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(f, 8, "shape"))[0] for _ in range(ndim)
            )
            (nbytes,) = struct.unpack("<Q", _read_exact(f, 8, "byte length"))
            raw = _read_exact(f, nbytes, f"array {name!r} data")
            arr = np.frombuffer(raw, dtype=_DTYPE_CODES[code]).reshape(shape)
            arrays[name] = arr.astype(bool) if code == 2 else arr.copy()
        return kind, meta, arrays


# ---------------------------------------------------------------------------
# typed wrappers


def save_frame(frame: Frame3D, path) -> None:
    save_artifact(
        path,
        "frame",
        {"coord_frame": frame.coord_frame, "feature_dim": frame.feature_dim},
        {
            "positions": frame.positions,
            "colors": frame.colors,
            "features": frame.features,
            "pixel_indices": frame.pixel_indices,
            "pose_rotation": frame.pose.rotation,
            "pose_translation": frame.pose.translation,
        },
    )


def load_frame(path) -> Frame3D:
    kind, meta, arrays = load_artifact(path)
    if kind != "frame":
        raise ArtifactFormatError(f"expected a frame artifact, got {kind!r}")
    return Frame3D(
        positions=arrays["positions"],
        colors=arrays["colors"],
        features=arrays["features"],
        pose=Pose(arrays["pose_rotation"], arrays["pose_translation"]),
        coord_frame=meta["coord_frame"],
        pixel_indices=arrays["pixel_indices"],
    )


def _grid_payload(grid: VoxelGrid) -> tuple[dict, dict]:
    meta = {
        "origin": grid.layout.origin.tolist(),
        "resolution": grid.layout.resolution,
        "dims": list(grid.layout.dims),
    }
    return meta, {"features": grid.features, "visibility": grid.visibility}


def _grid_from_payload(meta: dict, arrays: dict) -> VoxelGrid:
    layout = GridLayout(np.array(meta["origin"]), meta["resolution"], tuple(meta["dims"]))
    return VoxelGrid(layout, arrays["features"], arrays["visibility"])


def save_grid(grid: VoxelGrid, path) -> None:
    meta, arrays = _grid_payload(grid)
    save_artifact(path, "grid", meta, arrays)


def load_grid(path) -> VoxelGrid:
    kind, meta, arrays = load_artifact(path)
    if kind != "grid":
        raise ArtifactFormatError(f"expected a grid artifact, got {kind!r}")
    return _grid_from_payload(meta, arrays)


def save_scene(state: SceneState, path) -> None:
    meta, arrays = _grid_payload(state.grid)
    meta["t"] = state.t
    save_artifact(path, "scene", meta, arrays)


def load_scene(path) -> SceneState:
    kind, meta, arrays = load_artifact(path)
    if kind != "scene":
        raise ArtifactFormatError(f"expected a scene artifact, got {kind!r}")
    return SceneState(grid=_grid_from_payload(meta, arrays), t=meta["t"])


def save_checkpoint(model: AlignmentModel, path, extra_meta: dict | None = None) -> None:
    meta = {
        "model_cfg": asdict(model.cfg),
        "vocab": list(model.vocab.words),
        "param_order": list(model.params.keys()),
    }
    if extra_meta:
        meta.update(extra_meta)
    save_artifact(path, "checkpoint", meta, dict(model.params))


def load_checkpoint(path) -> AlignmentModel:
    kind, meta, arrays = load_artifact(path)
    if kind != "checkpoint":
        raise ArtifactFormatError(f"expected a checkpoint artifact, got {kind!r}")
    cfg = ModelConfig(**meta["model_cfg"])
    vocab = Vocabulary(tuple(meta["vocab"]))
    params = {name: arrays[name] for name in meta["param_order"]}
    return AlignmentModel(cfg, params, vocab)
