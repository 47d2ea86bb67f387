"""Lagrangian boundary geometry: triangle meshes, polylines, markers.

3D bodies are triangle soups (STL or procedural icospheres) with one marker
per facet centroid; 2D boundaries are polylines with one marker per segment
midpoint.  Rigid motion is a prescribed translation trajectory.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StlParseError

_DEGENERATE_AREA = 1e-30


@dataclass(frozen=True)
class Oscillation:
    """Rigid translation X(t) = X0 + amplitude * sin(omega * t)."""

    amplitude: tuple
    omega: float

    def displacement(self, t):
        return np.asarray(self.amplitude) * math.sin(self.omega * t)

    def velocity(self, t):
        return np.asarray(self.amplitude) * (self.omega * math.cos(self.omega * t))


class TriMesh:
    """Triangle soup: vertices (NV,3) and vertex-index triples (NF,3)."""

    def __init__(self, vertices, faces):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (
            self.faces.min() < 0 or self.faces.max() >= len(self.vertices)
        ):
            raise ConfigError("mesh face indices out of range")
        self.dropped_facets = 0

    @property
    def n_faces(self):
        return len(self.faces)

    def _corner_arrays(self):
        v = self.vertices
        return v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]

    def face_normals_areas(self):
        a, b, c = self._corner_arrays()
        n = np.cross(b - a, c - a)
        twice_area = np.linalg.norm(n, axis=1)
        return n, 0.5 * twice_area

    def centroids(self):
        a, b, c = self._corner_arrays()
        return (a + b + c) / 3.0

    def mean_edge(self):
        a, b, c = self._corner_arrays()
        e = (
            np.linalg.norm(b - a, axis=1)
            + np.linalg.norm(c - b, axis=1)
            + np.linalg.norm(a - c, axis=1)
        )
        return float(e.mean() / 3.0) if len(e) else float("nan")

    def enclosed_volume(self):
        """Signed volume via the divergence theorem (exact for closed meshes)."""
        a, b, c = self._corner_arrays()
        return float(np.einsum("ij,ij->", a, np.cross(b, c)) / 6.0)


def _parse_ascii_stl(text, path):
    verts = []
    tokens = text.split()
    i = 0
    n = len(tokens)
    try:
        while i < n:
            tok = tokens[i]
            if tok == "vertex":
                verts.append(
                    (float(tokens[i + 1]), float(tokens[i + 2]), float(tokens[i + 3]))
                )
                i += 4
            else:
                i += 1
    except (IndexError, ValueError) as exc:
        raise StlParseError(
            f"{path}: malformed ASCII STL near token {i} ({tokens[i]!r})"
        ) from exc
    if len(verts) == 0 or len(verts) % 3 != 0:
        raise StlParseError(
            f"{path}: ASCII STL vertex count {len(verts)} is not a multiple of 3"
        )
    v = np.array(verts, dtype=np.float64)
    f = np.arange(len(verts), dtype=np.int64).reshape(-1, 3)
    return TriMesh(v, f)


def _parse_binary_stl(raw, path):
    if len(raw) < 84:
        raise StlParseError(f"{path}: binary STL shorter than the 84-byte header")
    (ntri,) = struct.unpack_from("<I", raw, 80)
    expected = 84 + 50 * ntri
    if len(raw) < expected:
        raise StlParseError(
            f"{path}: truncated binary STL — facet count {ntri} implies "
            f"{expected} bytes, file ends at byte {len(raw)}"
        )
    rec = np.frombuffer(raw, dtype=np.uint8, count=50 * ntri, offset=84)
    rec = rec.reshape(ntri, 50)
    tri = rec[:, 12:48].copy().view("<f4").reshape(ntri, 3, 3).astype(np.float64)
    v = tri.reshape(-1, 3)
    f = np.arange(3 * ntri, dtype=np.int64).reshape(-1, 3)
    return TriMesh(v, f)


def load_stl(path):
    """Read an ASCII or binary STL file into a TriMesh.

    Degenerate (zero-area) facets are dropped; the count is kept on the
    returned mesh as ``dropped_facets``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    is_ascii = raw[:5] == b"solid"
    if is_ascii:
        # some binary exporters also start with "solid"; trust the record
        # arithmetic over the magic word
        if len(raw) >= 84:
            (ntri,) = struct.unpack_from("<I", raw, 80)
            if len(raw) == 84 + 50 * ntri:
                is_ascii = False
    if is_ascii:
        try:
            text = raw.decode("ascii")
        except UnicodeDecodeError as exc:
            raise StlParseError(
                f"{path}: starts with 'solid' but is not ASCII at byte {exc.start}"
            ) from exc
        mesh = _parse_ascii_stl(text, path)
    else:
        mesh = _parse_binary_stl(raw, path)
    _, areas = mesh.face_normals_areas()
    keep = areas > _DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        mesh = TriMesh(mesh.vertices, mesh.faces[keep])
    mesh.dropped_facets = dropped
    return mesh


def write_stl_ascii(path, mesh, name="mesh"):
    n, _ = mesh.face_normals_areas()
    norm = np.linalg.norm(n, axis=1)
    n = n / np.where(norm > 0, norm, 1.0)[:, None]
    a, b, c = mesh._corner_arrays()
    lines = [f"solid {name}"]
    for i in range(mesh.n_faces):
        lines.append(f"  facet normal {n[i,0]:.9e} {n[i,1]:.9e} {n[i,2]:.9e}")
        lines.append("    outer loop")
        for p in (a[i], b[i], c[i]):
            lines.append(f"      vertex {p[0]:.9e} {p[1]:.9e} {p[2]:.9e}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}\n")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def write_stl_binary(path, mesh):
    n, _ = mesh.face_normals_areas()
    norm = np.linalg.norm(n, axis=1)
    n = n / np.where(norm > 0, norm, 1.0)[:, None]
    a, b, c = mesh._corner_arrays()
    ntri = mesh.n_faces
    buf = bytearray(84 + 50 * ntri)
    struct.pack_into("<I", buf, 80, ntri)
    off = 84
    for i in range(ntri):
        struct.pack_into(
            "<12fH", buf, off,
            n[i, 0], n[i, 1], n[i, 2],
            a[i, 0], a[i, 1], a[i, 2],
            b[i, 0], b[i, 1], b[i, 2],
            c[i, 0], c[i, 1], c[i, 2], 0,
        )
        off += 50
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def icosphere(radius=0.5, center=(0.0, 0.0, 0.0), subdivisions=2):
    """Geodesic sphere from icosahedron subdivision; 20*4^n facets."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
            (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
            (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.add(verts[i], verts[j]) / 2.0
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for (i, j, k) in faces:
            a = midpoint(i, j)
            b = midpoint(j, k)
            c = midpoint(k, i)
            new_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.array(faces, dtype=np.int64))


def icosphere_subdivisions_for_edge(radius, target_edge):
    """Smallest subdivision level whose mean edge is <= target_edge."""
    edge0 = 1.0514622242382672 * radius  # icosahedron edge for this radius
    n = 0
    while edge0 / (2**n) > target_edge and n < 8:
        n += 1
    return n


class MarkerSet:
    """Lagrangian markers: positions, areas, normals, desired velocities.

    ``area`` is the facet area (3D) or segment length (2D); ``dV`` (marker
    volume) is attached when a transfer operator is built.  ``move_to(t)``
    applies the rigid motion (if any) to positions and desired velocities.
    """

    def __init__(self, X, area, normal, motion=None, mean_edge_length=None,
                 enclosed_volume=None):
        self.X0 = np.ascontiguousarray(X, dtype=np.float64)
        self.X = self.X0.copy()
        self.area = np.ascontiguousarray(area, dtype=np.float64)
        self.normal = np.ascontiguousarray(normal, dtype=np.float64)
        if self.X0.ndim != 2 or self.area.shape != (len(self.X0),) \
                or self.normal.shape != self.X0.shape:
            raise ConfigError("inconsistent marker array shapes")
        if np.any(self.area <= 0):
            raise ConfigError("marker areas must be positive")
        self.motion = motion
        self.mean_edge_length = mean_edge_length
        self.enclosed_volume = enclosed_volume
        self.U_desired = np.zeros_like(self.X0)
        self.dV = None
        self.t = 0.0

    @property
    def count(self):
        return len(self.X0)

    @property
    def ndim(self):
        return self.X0.shape[1]

    def body_velocity(self, t):
        if self.motion is None:
            return np.zeros(self.ndim)
        return np.asarray(self.motion.velocity(t), dtype=np.float64)

    def body_acceleration(self, t):
        if self.motion is None:
            return np.zeros(self.ndim)
        amp = np.asarray(self.motion.amplitude, dtype=np.float64)
        w = self.motion.omega
        return -amp * w * w * math.sin(w * t)

    def move_to(self, t):
        self.t = float(t)
        if self.motion is None:
            return
        disp = np.asarray(self.motion.displacement(t), dtype=np.float64)
        self.X[:] = self.X0 + disp
        self.U_desired[:] = self.body_velocity(t)


def markers_from_mesh(mesh, motion=None):
    """One marker per non-degenerate facet: centroid, area, outward normal."""
    n, areas = mesh.face_normals_areas()
    keep = areas > _DEGENERATE_AREA
    cent = mesh.centroids()[keep]
    area = areas[keep]
    normal = n[keep] / (2.0 * area)[:, None]
    ms = MarkerSet(
        cent, area, normal, motion=motion,
        mean_edge_length=mesh.mean_edge(),
        enclosed_volume=abs(mesh.enclosed_volume()),
    )
    ms.skipped_facets = int((~keep).sum())
    return ms


def seed_line_markers(Y0, n, extent, grid_or_h, x_start=0.0, motion=None):
    """Evenly spaced markers on the horizontal line y = Y0 (2D).

    ``n`` markers per cell over ``extent`` cells, each owning a segment of
    length h/n; marker l sits at x_start + (l + 0.5) * h/n.  Normals point
    along +y.
    """
    if n < 1:
        raise ConfigError("need at least one marker per cell")
    h = grid_or_h if isinstance(grid_or_h, (int, float)) else grid_or_h.h
    nl = int(n) * int(extent)
    xs = x_start + (np.arange(nl) + 0.5) * (h / n)
    X = np.column_stack([xs, np.full(nl, float(Y0))])
    area = np.full(nl, h / n)
    normal = np.tile([0.0, 1.0], (nl, 1))
    return MarkerSet(X, area, normal, motion=motion, mean_edge_length=h / n)


def circle_markers(center, radius, n_markers, motion=None):
    """2D circle as n equal arc segments, outward normals."""
    if n_markers < 3:
        raise ConfigError("need at least 3 markers on a circle")
    th = (np.arange(n_markers) + 0.5) * (2.0 * np.pi / n_markers)
    normal = np.column_stack([np.cos(th), np.sin(th)])
    X = np.asarray(center, dtype=np.float64) + radius * normal
    area = np.full(n_markers, 2.0 * np.pi * radius / n_markers)
    ms = MarkerSet(X, area, normal, motion=motion,
                   mean_edge_length=2.0 * np.pi * radius / n_markers,
                   enclosed_volume=np.pi * radius**2)
    return ms


@dataclass(frozen=True)
class ResolutionReport:
    ratio: float
    warning: bool
    undefined: bool
    message: str = ""


def resolution_check(markers, grid):
    """Mean marker edge length relative to h; warn above 1.0."""
    edge = markers.mean_edge_length if markers is not None else None
    if markers is None or markers.count == 0 or not edge or not np.isfinite(edge):
        return ResolutionReport(float("nan"), False, True,
                                "no markers; resolution ratio undefined")
    ratio = float(edge / grid.h)
    warn = ratio > 1.0
    msg = (
        f"mean marker edge {edge:.4g} is {ratio:.2f}x the grid spacing"
        + ("; boundary may leak between markers" if warn else "")
    )
    return ResolutionReport(ratio, warn, False, msg)
