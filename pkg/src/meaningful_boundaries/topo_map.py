"""Topographic map: level lines of the bilinear interpolation and their tree.

Lines are traced per quantization level by marching over the dual cells.
Crossings on Qedgels are found by linear interpolation along the edge and
saddle cells are resolved with the saddle value of the bilinear patch.
Arcs reaching the frame are closed along it, so every line is a closed
polygon whose interior is either an upper or a lower level set component.
"""
from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .raster import RasterImage

__all__ = [
    "ROOT",
    "TopologyError",
    "LevelLine",
    "LevelLines",
    "LevelLineTree",
    "MonotoneSection",
    "extract_level_lines",
    "build_inclusion_tree",
    "find_monotone_sections",
    "reconstruct_from_level_sets",
    "lines_to_json",
]

ROOT = -1


class TopologyError(RuntimeError):
    """Level lines cross each other; the extraction is broken."""


@dataclass(frozen=True)
class LevelLine:
    id: int
    level: float
    polyline: np.ndarray
    euclidean_length: float
    crossing_count: int
    sampled_points: np.ndarray
    touches_border: bool
    signed_area: float
    sample_cells: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.sampled_points.shape[0]

    @property
    def interior_is_upper(self) -> bool:
        """True when the enclosed side is brighter than the level."""
        return self.signed_area > 0


class LevelLines(Sequence):
    """All level lines of an image stored as flat arrays.

    Indexing returns :class:`LevelLine` records; the array attributes are
    what the scoring code consumes.
    """

    def __init__(self, shape, points, is_crossing, cells, offsets, levels,
                 lengths, areas, touches_border, perimeters=None):
        self.shape = tuple(shape)
        self.points = points
        self.is_crossing = is_crossing
        self.cells = cells
        self.offsets = offsets
        self.levels = levels
        self.lengths = lengths
        self.areas = areas
        self.touches_border = touches_border
        # closed polygon length, frame stretch included
        self.perimeters = lengths if perimeters is None else perimeters

    @classmethod
    def empty(cls, shape):
        return cls(shape, np.empty((0, 2)), np.empty(0, bool), np.empty(0, np.int64),
                   np.zeros(1, np.int64), np.empty(0), np.empty(0), np.empty(0),
                   np.empty(0, bool), np.empty(0))

    def __len__(self) -> int:
        return self.levels.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        i = int(i)
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        a, b = self.offsets[i], self.offsets[i + 1]
        sel = self.sample_index[self.sample_offsets[i]:self.sample_offsets[i + 1]]
        return LevelLine(
            id=i,
            level=float(self.levels[i]),
            polyline=self.points[a:b],
            euclidean_length=float(self.lengths[i]),
            crossing_count=int(self.crossing_counts[i]),
            sampled_points=self.points[sel],
            touches_border=bool(self.touches_border[i]),
            signed_area=float(self.areas[i]),
            sample_cells=self.sample_cells[self.sample_offsets[i]:self.sample_offsets[i + 1]],
        )

    @cached_property
    def point_line(self) -> np.ndarray:
        return np.repeat(np.arange(len(self)), np.diff(self.offsets))

    @cached_property
    def crossing_counts(self) -> np.ndarray:
        if len(self) == 0:
            return np.empty(0, np.int64)
        return np.add.reduceat(self.is_crossing.astype(np.int64), self.offsets[:-1])

    @property
    def sample_counts(self) -> np.ndarray:
        return self.crossing_counts // 2

    @cached_property
    def sample_index(self) -> np.ndarray:
        """Global point indices of the sampled points, grouped by line.

        One crossing out of two, starting with the first, and ``m // 2`` of
        them per line.
        """
        if len(self) == 0:
            return np.empty(0, np.int64)
        cross = self.is_crossing
        rank = np.cumsum(cross) - 1
        base = np.concatenate([[0], np.cumsum(self.crossing_counts)])[:-1]
        local = rank - base[self.point_line]
        n = self.sample_counts[self.point_line]
        keep = cross & (local % 2 == 0) & (local // 2 < n)
        return np.flatnonzero(keep)

    @cached_property
    def sample_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sample_counts)]).astype(np.int64)

    @cached_property
    def sample_line(self) -> np.ndarray:
        return self.point_line[self.sample_index]

    @property
    def sample_cells(self) -> np.ndarray:
        """The two dual cells next to each sample, ``(n_samples, 2)``.

        A sample sits on a Qedgel, halfway between the cells of the chords
        entering and leaving it.  Column 0 is the leaving chord, column 1
        the entering one; -1 marks a chord that runs along the frame.
        """
        return np.column_stack([self.cells[self.sample_index], self._entering_cells])

    @cached_property
    def _entering_cells(self) -> np.ndarray:
        q = self.sample_index
        if q.size == 0:
            return np.empty(0, np.int64)
        line = self.sample_line
        prev = np.where(q == self.offsets[line], self.offsets[line + 1] - 1, q - 1)
        mid = (self.points[q] + self.points[prev]) / 2
        H, W = self.shape
        inside = (mid[:, 0] > 0) & (mid[:, 0] < W - 1) & (mid[:, 1] > 0) & (mid[:, 1] < H - 1)
        cell = np.floor(mid[:, 1]).astype(np.int64) * (W - 1) + np.floor(mid[:, 0]).astype(np.int64)
        return np.where(inside, cell, -1)


def extract_level_lines(image: RasterImage, levels=None) -> LevelLines:
    """Closed level lines of the bilinear interpolation at every quantized level.

    ``levels`` restricts the extraction to a subset of levels.
    """
    u = np.ascontiguousarray(image.values, dtype=np.float64)
    H, W = u.shape
    parts = []
    for lam in (image.levels if levels is None else levels):
        ox, oy, oc, st, arc = _kernels.trace_level(u, float(lam))
        if arc.shape[0] == 0:
            continue
        px, py, pc, pcross, lst, area, perim, inner = _kernels.close_pieces(ox, oy, oc, st, arc, W, H)
        parts.append((lam, px, py, pc, pcross, lst, area, inner, arc, perim))
    if not parts:
        return LevelLines.empty((H, W))
    npts = np.cumsum([0] + [p[1].shape[0] for p in parts])
    offsets = np.concatenate(
        [p[5][:-1] + base for p, base in zip(parts, npts[:-1])] + [np.array([npts[-1]])]
    ).astype(np.int64)
    points = np.column_stack([np.concatenate([p[1] for p in parts]),
                              np.concatenate([p[2] for p in parts])])
    return LevelLines(
        shape=(H, W),
        points=points,
        is_crossing=np.concatenate([p[4] for p in parts]),
        cells=np.concatenate([p[3] for p in parts]),
        offsets=offsets,
        levels=np.concatenate([np.full(p[6].shape[0], p[0]) for p in parts]),
        lengths=np.concatenate([p[7] for p in parts]),
        areas=np.concatenate([p[6] for p in parts]),
        touches_border=np.concatenate([p[8] for p in parts]),
        perimeters=np.concatenate([p[9] for p in parts]),
    )


# ----------------------------------------------------------------------
# Inclusion tree
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MonotoneSection:
    """Maximal single-child run of the tree with strictly monotone levels.

    ``direction`` is +1 when levels increase inwards, -1 when they decrease
    and 0 for a section reduced to one line.
    """

    line_ids: tuple
    direction: int


class LevelLineTree:
    """Inclusion tree of level lines hanging from a virtual frame node."""

    def __init__(self, lines: LevelLines, parent: np.ndarray, owner: np.ndarray | None = None):
        self.lines = lines
        self.parent = np.asarray(parent, dtype=np.int64)
        self.owner = owner

    root = ROOT

    def __len__(self) -> int:
        return self.parent.shape[0]

    @cached_property
    def children(self) -> dict:
        out = {ROOT: []}
        for i in range(len(self)):
            out.setdefault(i, [])
        for i, p in enumerate(self.parent.tolist()):
            out[p].append(i)
        return out

    @cached_property
    def child_counts(self) -> np.ndarray:
        inner = self.parent[self.parent >= 0]
        return np.bincount(inner, minlength=len(self))

    def topological_order(self) -> list:
        """Line ids sorted so that parents come before children."""
        order = []
        stack = list(reversed(self.children[ROOT]))
        while stack:
            v = stack.pop()
            order.append(v)
            stack.extend(reversed(self.children[v]))
        return order

    def depth(self) -> np.ndarray:
        d = np.zeros(len(self), np.int64)
        for v in self.topological_order():
            p = self.parent[v]
            d[v] = 0 if p == ROOT else d[p] + 1
        return d


def _point_in_polygon(x, y, poly) -> bool:
    xs, ys = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(xs, -1), np.roll(ys, -1)
    hit = (ys > y) != (yn > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = xs + (y - ys) * (xn - xs) / (yn - ys)
    return bool(np.count_nonzero(hit & (x < xc)) % 2)


def build_inclusion_tree(lines: LevelLines) -> LevelLineTree:
    """Parent of each line is the smallest line whose interior contains it.

    Interiors are painted on the pixel grid from the largest to the
    smallest; a line's parent is whoever owned its pixels just before.
    """
    H, W = lines.shape
    if len(lines) == 0:
        return LevelLineTree(lines, np.empty(0, np.int64), np.full(H * W, ROOT, np.int64))
    absarea = np.abs(lines.areas)
    order = np.lexsort((np.arange(len(lines)), -absarea)).astype(np.int64)
    px = np.ascontiguousarray(lines.points[:, 0])
    py = np.ascontiguousarray(lines.points[:, 1])
    parent, owner, conflicts = _kernels.paint_parents(px, py, lines.offsets, order, W, H)
    if conflicts:
        raise TopologyError(f"{conflicts} pixels claimed by crossing level lines")
    orphans = np.flatnonzero(parent == -2)
    for i in orphans:
        # no pixel centre inside: fall back to a geometric test on the
        # midpoint of the first chord
        a = lines.offsets[i]
        x, y = (lines.points[a] + lines.points[a + 1]) / 2
        best, best_area = ROOT, np.inf
        for j in np.flatnonzero(absarea > absarea[i]):
            poly = lines.points[lines.offsets[j]:lines.offsets[j + 1]]
            if absarea[j] < best_area and _point_in_polygon(x, y, poly):
                best, best_area = j, absarea[j]
        parent[i] = best
    return LevelLineTree(lines, parent, owner)


def find_monotone_sections(tree: LevelLineTree) -> list:
    """Split the tree into maximal monotone sections, parents first."""
    levels = tree.lines.levels
    nchild = tree.child_counts
    section_of = np.full(len(tree), -1, np.int64)
    members: list[list] = []
    direction: list[int] = []
    for v in tree.topological_order():
        p = int(tree.parent[v])
        if p != ROOT and nchild[p] == 1 and levels[v] != levels[p]:
            step = 1 if levels[v] > levels[p] else -1
            s = section_of[p]
            if members[s][-1] == p and direction[s] in (0, step):
                members[s].append(v)
                direction[s] = step
                section_of[v] = s
                continue
        section_of[v] = len(members)
        members.append([v])
        direction.append(0)
    return [MonotoneSection(tuple(m), d) for m, d in zip(members, direction)]


def reconstruct_from_level_sets(image: RasterImage, lines: LevelLines | None = None,
                                tree: LevelLineTree | None = None) -> RasterImage:
    """Rebuild the quantized image from its topographic map.

    Each pixel takes the level of the smallest line enclosing it, moved half
    a step towards the inside of that line.  This is the superposition of
    the upper level sets read off the tree.
    """
    step = image.quantization_step
    if lines is None:
        lines = extract_level_lines(image)
    if tree is None:
        tree = build_inclusion_tree(lines)
    H, W = image.values.shape
    if len(lines) == 0:
        return RasterImage(image.quantized(), step)
    upper = lines.areas > 0
    inside = np.where(upper, lines.levels + step / 2, lines.levels - step / 2)
    first = tree.children[ROOT][0]
    outside = lines.levels[first] - step / 2 if upper[first] else lines.levels[first] + step / 2
    owner = tree.owner
    out = np.where(owner >= 0, inside[np.maximum(owner, 0)], outside)
    return RasterImage(out.reshape(H, W), step)


def lines_to_json(lines: LevelLines, tree: LevelLineTree | None = None) -> str:
    """Debug dump: ``[{id, level, length, n, points, parent}, ...]``."""
    records = []
    for line in lines:
        records.append({
            "id": line.id,
            "level": line.level,
            "length": line.euclidean_length,
            "n": line.n,
            "points": line.polyline.tolist(),
            "parent": None if tree is None else int(tree.parent[line.id]),
        })
    return json.dumps(records)
