"""PLY mesh I/O: binary little-endian writer, binary + ascii reader."""

from __future__ import annotations

import numpy as np

from slamkit.errors import PlyError
from slamkit.mesh import TriangleMesh

_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4, "float": 4, "float32": 4,
    "double": 8, "float64": 8,
}
_NP_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def write_ply(mesh: TriangleMesh, path) -> None:
    with_color = mesh.colors is not None
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {mesh.vertices.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if with_color:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines += [
        f"element face {mesh.faces.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    vdtype = [("xyz", "<f4", 3)] + ([("rgb", "u1", 3)] if with_color else [])
    vbuf = np.empty(mesh.vertices.shape[0], dtype=vdtype)
    vbuf["xyz"] = mesh.vertices.astype(np.float32)
    if with_color:
        vbuf["rgb"] = mesh.colors
    fbuf = np.empty(mesh.faces.shape[0], dtype=[("n", "u1"), ("idx", "<i4", 3)])
    fbuf["n"] = 3
    fbuf["idx"] = mesh.faces.astype(np.int32)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(vbuf.tobytes())
        fh.write(fbuf.tobytes())


def read_ply(path) -> TriangleMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if end < 0:
        raise PlyError("missing end_header")
    nl = data.find(b"\n", end)
    header = data[:nl].decode("ascii", errors="replace").splitlines()
    body = data[nl + 1:]

    if not header or header[0].strip() != "ply":
        raise PlyError("line 1: not a PLY file")
    fmt = None
    elements = []  # (name, count, [(prop_name, type) or ("__list__", count_t, item_t, name)])
    for lineno, raw in enumerate(header[1:], start=2):
        tok = raw.strip().split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"line {lineno}: unsupported format {raw.strip()!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyError(f"line {lineno}: malformed element declaration")
            try:
                elements.append([tok[1], int(tok[2]), []])
            except ValueError:
                raise PlyError(f"line {lineno}: bad element count {tok[2]!r}")
        elif tok[0] == "property":
            if not elements:
                raise PlyError(f"line {lineno}: property before any element")
            if tok[1] == "list":
                if len(tok) != 5:
                    raise PlyError(f"line {lineno}: malformed list property")
                elements[-1][2].append(("__list__", tok[2], tok[3], tok[4]))
            else:
                if len(tok) != 3 or tok[1] not in _SCALAR_SIZES:
                    raise PlyError(f"line {lineno}: unsupported property {raw.strip()!r}")
                elements[-1][2].append((tok[2], tok[1]))
        elif tok[0] == "end_header":
            break
        else:
            raise PlyError(f"line {lineno}: unrecognized header keyword {tok[0]!r}")
    if fmt is None:
        raise PlyError("missing format declaration")

    verts = faces = colors = None
    offset = 0
    ascii_rows = body.decode("ascii", errors="replace").split("\n") if fmt == "ascii" else None
    row_at = 0
    for name, cnt, props in elements:
        is_list = any(p[0] == "__list__" for p in props)
        if name == "vertex":
            if is_list:
                raise PlyError("vertex element must not contain list properties")
            names = [p[0] for p in props]
            for need in ("x", "y", "z"):
                if need not in names:
                    raise PlyError(f"vertex element lacks property {need!r}")
            if fmt == "binary_little_endian":
                dt = np.dtype([(p[0], "<" + _NP_TYPES[p[1]]) for p in props])
                nbytes = dt.itemsize * cnt
                if offset + nbytes > len(body):
                    raise PlyError(f"vertex data truncated: expected {cnt} entries")
                arr = np.frombuffer(body, dtype=dt, count=cnt, offset=offset)
                offset += nbytes
            else:
                rows = ascii_rows[row_at:row_at + cnt]
                if len(rows) < cnt or any(not r.strip() for r in rows):
                    raise PlyError(f"vertex data truncated: expected {cnt} entries")
                row_at += cnt
                table = np.array([r.split() for r in rows], dtype=np.float64)
                if table.shape[1] != len(props):
                    raise PlyError("vertex row width does not match declared properties")
                arr = {p[0]: table[:, i] for i, p in enumerate(props)}
            verts = np.stack([np.asarray(arr["x"], np.float64),
                              np.asarray(arr["y"], np.float64),
                              np.asarray(arr["z"], np.float64)], axis=1)
            if all(c in names for c in ("red", "green", "blue")):
                colors = np.stack([np.asarray(arr["red"]), np.asarray(arr["green"]),
                                   np.asarray(arr["blue"])], axis=1).astype(np.uint8)
        elif name == "face":
            lists = [p for p in props if p[0] == "__list__"]
            if len(lists) != 1 or len(props) != 1:
                raise PlyError("face element must have exactly one list property")
            _, cnt_t, item_t, _ = lists[0]
            if fmt == "binary_little_endian":
                faces = np.empty((cnt, 3), dtype=np.int64)
                csz, isz = _SCALAR_SIZES[cnt_t], _SCALAR_SIZES[item_t]
                cdt = np.dtype("<" + _NP_TYPES[cnt_t])
                idt = np.dtype("<" + _NP_TYPES[item_t])
                for i in range(cnt):
                    if offset + csz > len(body):
                        raise PlyError(f"face data truncated: expected {cnt} entries")
                    k = int(np.frombuffer(body, dtype=cdt, count=1, offset=offset)[0])
                    offset += csz
                    if k != 3:
                        raise PlyError(f"face {i}: only triangles supported, got {k} indices")
                    if offset + 3 * isz > len(body):
                        raise PlyError(f"face data truncated: expected {cnt} entries")
                    faces[i] = np.frombuffer(body, dtype=idt, count=3, offset=offset)
                    offset += 3 * isz
            else:
                rows = ascii_rows[row_at:row_at + cnt]
                if len(rows) < cnt or any(not r.strip() for r in rows):
                    raise PlyError(f"face data truncated: expected {cnt} entries")
                row_at += cnt
                faces = np.empty((cnt, 3), dtype=np.int64)
                for i, r in enumerate(rows):
                    tok = r.split()
                    if int(tok[0]) != 3 or len(tok) != 4:
                        raise PlyError(f"face {i}: only triangles supported")
                    faces[i] = [int(t) for t in tok[1:4]]
        else:
            raise PlyError(f"unsupported element {name!r}")
    if verts is None:
        raise PlyError("no vertex element found")
    if faces is None:
        faces = np.zeros((0, 3), dtype=np.int64)
    if faces.size and (faces.min() < 0 or faces.max() >= verts.shape[0]):
        raise PlyError("face indices out of range")
    return TriangleMesh(verts, faces, colors)
