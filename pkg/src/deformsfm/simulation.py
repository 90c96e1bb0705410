"""Synthetic deforming scenes, image tracks, and their persistence.

This module is the ground-truth oracle for everything else: it projects a
scene before and after one or two applications of a deformation, with
optional Gaussian image noise, and reads/writes the resulting
correspondence sets as JSON or CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateDeformation, ParseError, ZeroProjection
from .geometry import (
    RAY_TOL,
    AffineDeformation,
    ImagePoint,
    PolynomialDeformation,
    ScenePoint,
    apply_affine,
    apply_poly,
    project,
)

__all__ = [
    "Scene",
    "CorrespondenceSet",
    "simulate",
    "random_scene",
    "load_tracks",
    "save_tracks",
    "load_scene",
    "save_scene",
]

Deformation = Union[AffineDeformation, PolynomialDeformation]


@dataclass(frozen=True)
class Scene:
    """An ordered collection of scene points with a text label."""

    points: tuple[ScenePoint, ...]
    label: str = ""

    def __init__(self, points: Iterable[ScenePoint], label: str = ""):
        pts = tuple(
            p if isinstance(p, ScenePoint) else ScenePoint(p) for p in points
        )
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "label", str(label))

    def __len__(self) -> int:
        return len(self.points)

    def array(self) -> np.ndarray:
        """Affine coordinates of all points, shape ``(n, 3)``."""
        return np.array([p.affine for p in self.points])


@dataclass(frozen=True)
class CorrespondenceSet:
    """Two or three index-aligned views of the same physical points.

    Attributes:
        views: tuple of 2 or 3 tuples of :class:`ImagePoint`, equal length.
        noise_sigma: standard deviation of the image noise (0 = exact).
        label: free-text provenance tag.
    """

    views: tuple[tuple[ImagePoint, ...], ...]
    noise_sigma: float = 0.0
    label: str = ""

    def __init__(
        self,
        views: Iterable[Iterable[ImagePoint]],
        noise_sigma: float = 0.0,
        label: str = "",
    ):
        packed = tuple(
            tuple(q if isinstance(q, ImagePoint) else ImagePoint(q) for q in view)
            for view in views
        )
        if len(packed) not in (2, 3):
            raise ValueError(f"expected 2 or 3 views, got {len(packed)}")
        lengths = {len(v) for v in packed}
        if len(lengths) != 1:
            raise ValueError(f"unaligned views: lengths {sorted(len(v) for v in packed)}")
        if float(noise_sigma) < 0.0:
            raise ValueError("noise_sigma must be nonnegative")
        object.__setattr__(self, "views", packed)
        object.__setattr__(self, "noise_sigma", float(noise_sigma))
        object.__setattr__(self, "label", str(label))

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_points(self) -> int:
        return len(self.views[0])

    def view_array(self, k: int) -> np.ndarray:
        """Homogeneous coordinates of view ``k`` as an ``(n, 3)`` array."""
        return np.array([q.coords for q in self.views[k]])


def _check_distinct_rays(rays: Sequence[ImagePoint], view_index: int) -> None:
    units = np.array([q.normalized() for q in rays])
    gram = np.abs(units @ units.T)
    np.fill_diagonal(gram, 0.0)
    if gram.size and gram.max() > 1.0 - RAY_TOL:
        i, j = np.unravel_index(int(gram.argmax()), gram.shape)
        raise DegenerateDeformation(
            f"points {min(i, j)} and {max(i, j)} fall on the same ray in view {view_index}"
        )


def _apply(deformation: Deformation, point: ScenePoint) -> ScenePoint:
    if isinstance(deformation, AffineDeformation):
        return apply_affine(deformation, point)
    return apply_poly(deformation, point)


def simulate(
    scene: Scene,
    deformation: Deformation,
    repeats: int = 2,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> CorrespondenceSet:
    """Project a scene before and after repeated deformation.

    View ``k`` holds the projections after ``k`` applications of the
    deformation, so ``repeats=2`` yields three views.

    Args:
        scene: the undeformed configuration (must be nonempty).
        deformation: affine or polynomial deformation applied identically
            at every step.
        repeats: 1 or 2 applications.
        noise_sigma: standard deviation of isotropic Gaussian noise added
            to the normalized image coordinates of every observation.
        rng: generator or seed used only when ``noise_sigma > 0``.

    Raises:
        DegenerateDeformation: if two scene points fall on one viewing ray
            in any view.
        ZeroProjection: if a (possibly deformed) point hits the camera
            center, or noise is requested for a ray parallel to the image
            plane.
    """
    if len(scene) == 0:
        raise ValueError("scene must contain at least one point")
    if repeats not in (1, 2):
        raise ValueError("repeats must be 1 or 2")
    noise_sigma = float(noise_sigma)

    views: list[list[ImagePoint]] = []
    current = list(scene.points)
    for k in range(repeats + 1):
        if k > 0:
            current = [_apply(deformation, p) for p in current]
        rays = [project(p) for p in current]
        _check_distinct_rays(rays, k)
        views.append(rays)

    if noise_sigma > 0.0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        noisy: list[list[ImagePoint]] = []
        for view in views:
            out = []
            for q in view:
                if q.coords[2] == 0.0:
                    raise ZeroProjection(
                        "cannot apply image noise to a ray parallel to the image plane"
                    )
                xy = q.inhomogeneous() + gen.normal(0.0, noise_sigma, size=2)
                out.append(ImagePoint([xy[0], xy[1], 1.0]))
            noisy.append(out)
        views = noisy

    return CorrespondenceSet(views, noise_sigma=noise_sigma, label=scene.label)


def random_scene(
    n_points: int,
    rng: np.random.Generator | int | None = None,
    label: str = "",
    low: float = -5.0,
    high: float = 5.0,
) -> Scene:
    """Sample a generic scene uniformly in a cube.

    Coordinates are drawn uniformly in ``[low, high]³``; the draw is
    rejected until the first four points span a tetrahedron of volume
    greater than ``1e-3``, which enforces the affine-basis genericity the
    recovery algorithms assume.
    """
    if n_points < 1:
        raise ValueError("n_points must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    for _ in range(1000):
        pts = gen.uniform(low, high, size=(n_points, 3))
        if n_points < 4:
            break
        vol = abs(np.linalg.det(pts[1:4] - pts[0])) / 6.0
        if vol > 1e-3:
            break
    else:  # pragma: no cover - vanishing probability
        raise DegenerateDeformation("could not sample an affinely independent basis")
    return Scene([ScenePoint(p) for p in pts], label=label)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _format_float(x: float) -> str:
    return repr(float(x))


def save_tracks(tracks: CorrespondenceSet, path: str | Path) -> None:
    """Write a correspondence set as JSON (``.json``) or CSV (``.csv``)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["view", "index", "x", "y", "w"])
            for k, view in enumerate(tracks.views):
                for i, q in enumerate(view):
                    writer.writerow(
                        [k, i] + [_format_float(c) for c in q.coords]
                    )
    else:
        payload = {
            "views": [
                [[float(c) for c in q.coords] for q in view] for view in tracks.views
            ],
            "noise_sigma": tracks.noise_sigma,
            "label": tracks.label,
        }
        path.write_text(json.dumps(payload, indent=1))


def _load_tracks_json(path: Path) -> CorrespondenceSet:
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "views" not in payload:
        raise ParseError(f"{path}: missing required field 'views'")
    views = payload["views"]
    if not isinstance(views, list) or not (2 <= len(views) <= 3):
        raise ParseError(f"{path}: 'views' must be a list of 2 or 3 views")
    lengths = {len(v) for v in views}
    if len(lengths) != 1:
        raise ParseError(f"{path}: unaligned views (lengths {sorted(map(len, views))})")
    parsed = []
    for k, view in enumerate(views):
        rays = []
        for i, row in enumerate(view):
            if not isinstance(row, list) or len(row) != 3:
                raise ParseError(
                    f"{path}: view {k} point {i}: expected 3 coordinates, got {row!r}"
                )
            try:
                rays.append(ImagePoint([float(c) for c in row]))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}: view {k} point {i}: {exc}") from exc
        parsed.append(rays)
    sigma = payload.get("noise_sigma", 0.0)
    if not isinstance(sigma, (int, float)) or sigma < 0:
        raise ParseError(f"{path}: field 'noise_sigma' must be a nonnegative number")
    return CorrespondenceSet(parsed, noise_sigma=float(sigma), label=str(payload.get("label", "")))


def _load_tracks_csv(path: Path) -> CorrespondenceSet:
    cells: dict[tuple[int, int], list[float]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row[:2] == ["view", "index"]:
                continue
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != 5:
                raise ParseError(
                    f"{path}: line {lineno}: expected 5 fields (view,index,x,y,w), got {len(row)}"
                )
            try:
                k, i = int(row[0]), int(row[1])
                coords = [float(f) for f in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            if (k, i) in cells:
                raise ParseError(f"{path}: line {lineno}: duplicate entry for view {k} index {i}")
            cells[(k, i)] = coords
    if not cells:
        raise ParseError(f"{path}: no track rows found")
    n_views = max(k for k, _ in cells) + 1
    n_points = max(i for _, i in cells) + 1
    if n_views not in (2, 3):
        raise ParseError(f"{path}: expected 2 or 3 views, found {n_views}")
    views = []
    for k in range(n_views):
        rays = []
        for i in range(n_points):
            if (k, i) not in cells:
                raise ParseError(f"{path}: unaligned views: missing view {k} index {i}")
            rays.append(ImagePoint(cells[(k, i)]))
        views.append(rays)
    return CorrespondenceSet(views)


def load_tracks(path: str | Path) -> CorrespondenceSet:
    """Read a correspondence set written by :func:`save_tracks`.

    The format is chosen by extension (``.csv`` for CSV, anything else is
    treated as JSON).

    Raises:
        ParseError: naming the file and the offending line or field.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    if path.suffix.lower() == ".csv":
        return _load_tracks_csv(path)
    return _load_tracks_json(path)


def save_scene(scene: Scene, path: str | Path) -> None:
    """Write a scene as JSON ``{points: [[X, Y, Z], ...], label}``."""
    payload = {
        "points": [[float(c) for c in p.affine] for p in scene.points],
        "label": scene.label,
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_scene(path: str | Path) -> Scene:
    """Read a scene written by :func:`save_scene`."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "points" not in payload:
        raise ParseError(f"{path}: missing required field 'points'")
    pts = []
    for i, row in enumerate(payload["points"]):
        if not isinstance(row, list) or len(row) not in (3, 4):
            raise ParseError(f"{path}: point {i}: expected 3 coordinates, got {row!r}")
        try:
            pts.append(ScenePoint([float(c) for c in row]))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}: point {i}: {exc}") from exc
    return Scene(pts, label=str(payload.get("label", "")))
