"""Persistence: PLY point clouds, 16-bit depth PNGs, pose files, and the
experiment configuration loader."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import yaml
from PIL import Image

from .errors import (
    ConfigError,
    DepthImageError,
    PlyHeaderError,
    PlyLayoutError,
    PlyTruncatedError,
    PoseFileError,
)
from .experiments import ExperimentSpec, spec_from_dict
from .geometry import CameraIntrinsics, PointCloud, RigidTransform

__all__ = [
    "DatasetEntry",
    "load_ply",
    "save_ply",
    "load_depth_png16",
    "save_depth_png16",
    "load_config",
    "load_pose_file",
    "save_pose_file",
]

_PLY_TYPES = {
    "float": ("<f4", 4), "float32": ("<f4", 4),
    "double": ("<f8", 8), "float64": ("<f8", 8),
    "uchar": ("<u1", 1), "uint8": ("<u1", 1),
    "char": ("<i1", 1), "int8": ("<i1", 1),
    "short": ("<i2", 2), "int16": ("<i2", 2),
    "ushort": ("<u2", 2), "uint16": ("<u2", 2),
    "int": ("<i4", 4), "int32": ("<i4", 4),
    "uint": ("<u4", 4), "uint32": ("<u4", 4),
}


@dataclass
class DatasetEntry:
    """One evaluation item: a model file, an optional depth image, the
    ground-truth pose and the camera that captured it."""

    model_path: str
    gt_pose: RigidTransform
    intrinsics: CameraIntrinsics
    object_id: str
    depth_path: str | None = None
    model_scale: float = 1.0

    def validate(self):
        if not os.path.isfile(self.model_path):
            raise ConfigError(f"model file missing: {self.model_path}")
        if self.depth_path is not None and not os.path.isfile(self.depth_path):
            raise ConfigError(f"depth file missing: {self.depth_path}")


def _parse_ply_header(blob: bytes):
    end = blob.find(b"end_header")
    if not blob.startswith(b"ply") or end < 0:
        raise PlyHeaderError("not a PLY file (missing 'ply' or 'end_header')")
    nl = blob.find(b"\n", end)
    if nl < 0:
        raise PlyHeaderError("unterminated header")
    header = blob[:nl].decode("ascii", errors="replace")
    body = blob[nl + 1:]
    fmt = None
    elements = []  # (name, count, [(prop_type, prop_name) or ('list', ...)])
    for line in header.splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise PlyHeaderError("malformed format line")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise PlyHeaderError(f"malformed element line: {line!r}")
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyHeaderError("property before any element")
            if parts[1] == "list":
                if len(parts) != 5:
                    raise PlyHeaderError(f"malformed list property: {line!r}")
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                if len(parts) != 3:
                    raise PlyHeaderError(f"malformed property line: {line!r}")
                elements[-1][2].append((parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyHeaderError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, body


def load_ply(path: str, scale: float = 1.0) -> PointCloud:
    """Parse vertex positions (and normals when present) from an ASCII or
    binary-little-endian PLY. `scale` converts file units to mm and must be
    given explicitly for non-mm models."""
    with open(path, "rb") as f:
        blob = f.read()
    fmt, elements, body = _parse_ply_header(blob)
    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise PlyLayoutError("no vertex element")
    if elements and elements[0][0] != "vertex":
        raise PlyLayoutError("only leading vertex elements are supported")
    _, count, props = vertex
    names = [p[1] for p in props if p[0] != "list"]
    if any(p[0] == "list" for p in props):
        raise PlyLayoutError("list properties inside the vertex element are unsupported")
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise PlyLayoutError(f"vertex element lacks property {axis!r}")
    has_normals = all(n in names for n in ("nx", "ny", "nz"))

    if fmt == "ascii":
        tokens = body.split()
        need = count * len(props)
        if len(tokens) < need:
            raise PlyTruncatedError(f"expected {need} ascii values, found {len(tokens)}")
        try:
            data = np.array(tokens[:need], dtype=np.float64).reshape(count, len(props))
        except ValueError as exc:
            raise PlyTruncatedError(f"non-numeric vertex payload: {exc}") from exc
        cols = {n: data[:, i] for i, n in enumerate(names)}
    else:
        try:
            dtype = np.dtype([(p[1], _PLY_TYPES[p[0]][0]) for p in props])
        except KeyError as exc:
            raise PlyLayoutError(f"unsupported property type {exc}") from exc
        need = count * dtype.itemsize
        if len(body) < need:
            raise PlyTruncatedError(f"expected {need} payload bytes, found {len(body)}")
        rec = np.frombuffer(body[:need], dtype=dtype)
        cols = {n: rec[n].astype(np.float64) for n in names}

    pts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1) * scale
    normals = None
    if has_normals:
        normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
    return PointCloud(pts, normals)


def save_ply(path: str, cloud: PointCloud, binary: bool = True):
    """Write x/y/z (and normals if present) as float64, binary LE or ASCII."""
    props = ["x", "y", "z"]
    data = cloud.points
    if cloud.normals is not None:
        props += ["nx", "ny", "nz"]
        data = np.hstack([cloud.points, cloud.normals])
    fmt = "binary_little_endian" if binary else "ascii"
    header = ["ply", f"format {fmt} 1.0", f"element vertex {len(cloud)}"]
    header += [f"property double {p}" for p in props]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        else:
            for row in data:
                f.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))


def load_depth_png16(path: str, depth_scale: float = 1.0) -> np.ndarray:
    """Read a 16-bit single-channel PNG as depth in mm (value * depth_scale);
    zero stays invalid."""
    img = Image.open(path)
    if img.mode not in ("I;16", "I;16B", "I"):
        raise DepthImageError(f"expected a 16-bit single-channel image, got mode {img.mode!r}")
    arr = np.array(img)
    if arr.ndim != 2:
        raise DepthImageError(f"expected one channel, got shape {arr.shape}")
    if img.mode == "I" and arr.max(initial=0) > 0xFFFF:
        raise DepthImageError("integer image exceeds 16-bit range")
    return arr.astype(np.float64) * depth_scale


def save_depth_png16(path: str, depth_mm: np.ndarray, depth_scale: float = 1.0):
    """Write depth (mm) as 16-bit PNG with value = depth / depth_scale."""
    scaled = np.asarray(depth_mm, dtype=np.float64) / depth_scale
    if scaled.min(initial=0) < 0 or scaled.max(initial=0) > 0xFFFF:
        raise DepthImageError("depth out of 16-bit range at this scale")
    Image.fromarray(np.rint(scaled).astype(np.uint16), mode="I;16").save(path)


def load_config(path: str) -> ExperimentSpec:
    """Read a YAML key-value config into a validated ExperimentSpec.

    An empty file yields the all-defaults spec. Unknown keys, wrong types,
    and out-of-range values raise ConfigError naming the offending field.
    """
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return spec_from_dict(raw if raw is not None else {})


def load_pose_file(path: str) -> dict[str, RigidTransform]:
    """Pose file: one `object_id r11 r12 ... r33 tx ty tz` row-major [R|t]
    line per object; '#' starts a comment."""
    poses: dict[str, RigidTransform] = {}
    with open(path, "r") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 13:
                raise PoseFileError(f"{path}:{lineno}: expected object_id + 12 numbers")
            try:
                vals = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise PoseFileError(f"{path}:{lineno}: {exc}") from exc
            m = vals.reshape(3, 4)
            try:
                poses[parts[0]] = RigidTransform(m[:, :3], m[:, 3])
            except Exception as exc:
                raise PoseFileError(f"{path}:{lineno}: invalid rotation: {exc}") from exc
    return poses


def save_pose_file(path: str, poses: dict[str, RigidTransform]):
    with open(path, "w") as f:
        for oid, pose in poses.items():
            m = np.hstack([pose.rotation, pose.translation[:, None]])
            f.write(oid + " " + " ".join(repr(float(v)) for v in m.reshape(-1)) + "\n")
