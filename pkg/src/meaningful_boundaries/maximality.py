"""Maximal meaningful boundaries: one representative per monotone section."""
from __future__ import annotations

import dataclasses

import numpy as np

from .saliency import Detection
from .topo_map import LevelLineTree, MonotoneSection, find_monotone_sections

__all__ = ["section_index", "prune_maximal", "maximal_mask"]


def section_index(n_lines: int, sections: list) -> np.ndarray:
    """Section number of every line id."""
    out = np.full(n_lines, -1, np.int64)
    for k, sec in enumerate(sections):
        out[list(sec.line_ids)] = k
    if (out < 0).any():
        raise ValueError("monotone sections do not cover every line")
    return out


def maximal_mask(log10_nfa: np.ndarray, meaningful: np.ndarray, section_of: np.ndarray) -> np.ndarray:
    """Boolean mask of the lines kept by maximality pruning.

    Within a section the meaningful line of smallest log10 NFA survives,
    ties going to the smallest line id.
    """
    log10_nfa = np.asarray(log10_nfa, dtype=np.float64)
    meaningful = np.asarray(meaningful, dtype=bool)
    keep = np.zeros(log10_nfa.shape[0], bool)
    cand = np.flatnonzero(meaningful)
    if cand.size == 0:
        return keep
    order = np.lexsort((cand, log10_nfa[cand], section_of[cand]))
    ranked = cand[order]
    sec = section_of[ranked]
    first = np.r_[True, sec[1:] != sec[:-1]]
    keep[ranked[first]] = True
    return keep


def prune_maximal(tree: LevelLineTree, sections: list | None, detections: list) -> list:
    """Keep the best meaningful detection of each maximal monotone section.

    Survivors come back flagged ``maximal=True`` in line-id order.  Lines
    absent from ``detections`` are ignored, which makes pruning idempotent.
    """
    if sections is None:
        sections = find_monotone_sections(tree)
    section_of = section_index(len(tree), sections)
    if not detections:
        return []
    ids = np.array([d.line_id for d in detections], np.int64)
    nfa = np.array([d.log10_nfa for d in detections], np.float64)
    flag = np.array([d.meaningful for d in detections], bool)
    keep = maximal_mask(nfa, flag, section_of[ids])
    kept = sorted((detections[i] for i in np.flatnonzero(keep)), key=lambda d: d.line_id)
    return [dataclasses.replace(d, maximal=True) for d in kept]
