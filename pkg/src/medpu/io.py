"""Readers and writers for XYZ, PLY and OBJ point clouds and meshes."""

from __future__ import annotations

import io as _io
import os
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFile
from .geometry import PointCloud, TriangleMesh

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _fmt_rows(a: np.ndarray) -> str:
    buf = _io.StringIO()
    np.savetxt(buf, a, fmt="%.17g")
    return buf.getvalue()


def _unit_normals(normals: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(normals, axis=1)
    if np.any(n == 0):
        raise FormatError("zero-length normal in file")
    return normals / n[:, None]


# XYZ

def read_xyz(path) -> PointCloud:
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) not in (3, 6):
                raise FormatError(f"{path}:{lineno}: expected 3 or 6 values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        return PointCloud(np.zeros((0, 3)))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: mixed 3- and 6-column rows")
    data = np.array(rows, dtype=np.float64)
    if data.shape[1] == 6:
        return PointCloud(data[:, :3], _unit_normals(data[:, 3:]))
    return PointCloud(data)


def write_xyz(cloud: PointCloud, path) -> None:
    data = cloud.points if cloud.normals is None else np.hstack([cloud.points, cloud.normals])
    with open(path, "w", newline="\n") as fh:
        fh.write(_fmt_rows(data))


# PLY

def _parse_ply_header(fh):
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise FormatError("not a PLY file")
    fmt = None
    elements = []
    while True:
        line = fh.readline()
        if not line:
            raise TruncatedFile("PLY header ended before end_header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append({"name": tokens[1], "count": int(tokens[2]), "props": []})
        elif tokens[0] == "property":
            if not elements:
                raise FormatError("PLY property before element")
            if tokens[1] == "list":
                elements[-1]["props"].append((tokens[4], "list", _PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]]))
            else:
                elements[-1]["props"].append((tokens[2], _PLY_TYPES[tokens[1]]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_ply_binary(fh, elements, endian):
    data = {}
    for el in elements:
        props = el["props"]
        has_list = any(p[1] == "list" for p in props)
        if not has_list:
            dt = np.dtype([(p[0], endian + p[1]) for p in props])
            raw = fh.read(dt.itemsize * el["count"])
            if len(raw) < dt.itemsize * el["count"]:
                raise TruncatedFile(f"PLY element {el['name']} truncated")
            data[el["name"]] = np.frombuffer(raw, dtype=dt)
            continue
        if len(props) == 1:
            name, _, count_t, item_t = props[0]
            # fast path: every list has length 3
            dt = np.dtype([("n", endian + count_t), ("v", endian + item_t, (3,))])
            pos = fh.tell()
            raw = fh.read(dt.itemsize * el["count"])
            if len(raw) == dt.itemsize * el["count"]:
                arr = np.frombuffer(raw, dtype=dt)
                if np.all(arr["n"] == 3):
                    data[el["name"]] = {name: arr["v"].astype(np.int64)}
                    continue
            fh.seek(pos)
        rows = {p[0]: [] for p in props}
        for _ in range(el["count"]):
            for p in props:
                if p[1] == "list":
                    cdt = np.dtype(endian + p[2])
                    raw = fh.read(cdt.itemsize)
                    if len(raw) < cdt.itemsize:
                        raise TruncatedFile(f"PLY element {el['name']} truncated")
                    n = int(np.frombuffer(raw, dtype=cdt)[0])
                    idt = np.dtype(endian + p[3])
                    raw = fh.read(idt.itemsize * n)
                    if len(raw) < idt.itemsize * n:
                        raise TruncatedFile(f"PLY element {el['name']} truncated")
                    rows[p[0]].append(np.frombuffer(raw, dtype=idt))
                else:
                    dt = np.dtype(endian + p[1])
                    raw = fh.read(dt.itemsize)
                    if len(raw) < dt.itemsize:
                        raise TruncatedFile(f"PLY element {el['name']} truncated")
                    rows[p[0]].append(np.frombuffer(raw, dtype=dt)[0])
        # scalar properties take their declared type so ascii and binary files agree
        for p in el["props"]:
            if p[1] != "list":
                rows[p[0]] = np.asarray(rows[p[0]], dtype=p[1])
        data[el["name"]] = rows
    return data


def _read_ply_ascii(fh, elements):
    lines = iter(fh.read().decode("ascii").splitlines())
    data = {}
    for el in elements:
        rows = {p[0]: [] for p in el["props"]}
        for _ in range(el["count"]):
            try:
                tokens = next(lines).split()
            except StopIteration:
                raise TruncatedFile(f"PLY element {el['name']} truncated") from None
            pos = 0
            try:
                for p in el["props"]:
                    if p[1] == "list":
                        n = int(tokens[pos])
                        rows[p[0]].append(np.array(tokens[pos + 1:pos + 1 + n], dtype=np.int64))
                        pos += 1 + n
                    else:
                        rows[p[0]].append(float(tokens[pos]))
                        pos += 1
            except IndexError:
                raise TruncatedFile(f"PLY element {el['name']} has a short row") from None
            if pos > len(tokens):
                raise TruncatedFile(f"PLY element {el['name']} has a short row")
        # scalar properties take their declared type so ascii and binary files agree
        for p in el["props"]:
            if p[1] != "list":
                rows[p[0]] = np.asarray(rows[p[0]], dtype=p[1])
        data[el["name"]] = rows
    return data


def _fan(polys) -> np.ndarray:
    tris = []
    for poly in polys:
        poly = [int(i) for i in poly]
        if len(poly) < 3:
            raise FormatError("polygon with fewer than 3 vertices")
        for j in range(1, len(poly) - 1):
            tris.append((poly[0], poly[j], poly[j + 1]))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


def read_ply(path):
    """Return ``(points, normals_or_None, faces)`` from an ASCII or binary PLY."""
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        if fmt == "ascii":
            data = _read_ply_ascii(fh, elements)
        else:
            data = _read_ply_binary(fh, elements, "<" if fmt == "binary_little_endian" else ">")
    if "vertex" not in data:
        raise FormatError("PLY has no vertex element")
    v = data["vertex"]
    try:
        pts = np.column_stack([np.asarray(v[c], dtype=np.float64) for c in "xyz"]).reshape(-1, 3)
    except (KeyError, ValueError):
        raise FormatError("PLY vertex element lacks x/y/z") from None
    normals = None
    names = v.dtype.names if isinstance(v, np.ndarray) else tuple(v)
    if all(c in names for c in ("nx", "ny", "nz")):
        normals = _unit_normals(
            np.column_stack([np.asarray(v[c], dtype=np.float64) for c in ("nx", "ny", "nz")])
        )
    faces = np.zeros((0, 3), dtype=np.int64)
    if "face" in data:
        f = data["face"]
        key = "vertex_indices" if "vertex_indices" in f else ("vertex_index" if "vertex_index" in f else None)
        if key is None:
            raise FormatError("PLY face element lacks vertex_indices")
        polys = f[key]
        if isinstance(polys, np.ndarray):
            faces = polys.reshape(-1, 3)
        else:
            faces = _fan(polys)
    return pts, normals, faces


def write_ply(path, points: np.ndarray, normals=None, faces=None, binary: bool = True) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    faces = None if faces is None else np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(points)}",
              "property float x", "property float y", "property float z"]
    if normals is not None:
        header += ["property float nx", "property float ny", "property float nz"]
    if faces is not None:
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    vert = points if normals is None else np.hstack([points, np.asarray(normals, dtype=np.float64)])
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(vert.astype("<f4").tobytes())
            if faces is not None:
                rec = np.empty(len(faces), dtype=[("n", "u1"), ("v", "<i4", (3,))])
                rec["n"] = 3
                rec["v"] = faces
                fh.write(rec.tobytes())
        else:
            buf = _io.StringIO()
            np.savetxt(buf, vert.astype(np.float32), fmt="%.9g")
            if faces is not None:
                np.savetxt(buf, np.hstack([np.full((len(faces), 1), 3), faces]), fmt="%d")
            fh.write(buf.getvalue().encode("ascii"))


# OBJ

def read_obj(path):
    """Return ``(vertices, normals_or_None, faces)``; polygons are fan-triangulated."""
    verts, vnormals, polys = [], [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                if tokens[0] == "v":
                    verts.append([float(t) for t in tokens[1:4]])
                elif tokens[0] == "vn":
                    vnormals.append([float(t) for t in tokens[1:4]])
                elif tokens[0] == "f":
                    idx = []
                    for t in tokens[1:]:
                        i = int(t.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    polys.append(idx)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    pts = np.array(verts, dtype=np.float64).reshape(-1, 3)
    normals = None
    if vnormals and len(vnormals) == len(verts):
        normals = _unit_normals(np.array(vnormals, dtype=np.float64))
    return pts, normals, _fan(polys)


def write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        buf = _io.StringIO()
        np.savetxt(buf, np.asarray(vertices, dtype=np.float64).reshape(-1, 3), fmt="v %.17g %.17g %.17g")
        np.savetxt(buf, np.asarray(faces, dtype=np.int64).reshape(-1, 3) + 1, fmt="f %d %d %d")
        fh.write(buf.getvalue())


# dispatch by extension

def _ext(path) -> str:
    return Path(path).suffix.lower()


def load_mesh(path) -> TriangleMesh:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = _ext(path)
    if ext == ".ply":
        pts, _, faces = read_ply(path)
    elif ext == ".obj":
        pts, _, faces = read_obj(path)
    else:
        raise FormatError(f"unsupported mesh format {ext!r}")
    try:
        return TriangleMesh(pts, faces)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_mesh(mesh: TriangleMesh, path, binary: bool = True) -> None:
    ext = _ext(path)
    if ext == ".ply":
        write_ply(path, mesh.vertices, faces=mesh.faces, binary=binary)
    elif ext == ".obj":
        write_obj(path, mesh.vertices, mesh.faces)
    else:
        raise FormatError(f"unsupported mesh format {ext!r}")


def load_cloud(path) -> PointCloud:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    ext = _ext(path)
    if ext in (".xyz", ".txt", ".pts"):
        return read_xyz(path)
    if ext == ".ply":
        pts, normals, _ = read_ply(path)
    elif ext == ".obj":
        pts, normals, _ = read_obj(path)
    else:
        raise FormatError(f"unsupported point cloud format {ext!r}")
    return PointCloud(pts, normals)


def save_cloud(cloud: PointCloud, path, binary: bool = True) -> None:
    ext = _ext(path)
    if ext in (".xyz", ".txt", ".pts"):
        write_xyz(cloud, path)
    elif ext == ".ply":
        write_ply(path, cloud.points, cloud.normals, binary=binary)
    else:
        raise FormatError(f"unsupported point cloud format {ext!r}")
