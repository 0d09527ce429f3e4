"""Procedural scene pairs with known ground truth.

Each location is a wide canvas filled with a distinct arrangement of solid,
striped and split rectangles over a smooth background. Two views are cropped
from it at horizontal offsets differing by 5-15% of the view width, and the
test view gets a brightness perturbation of up to +/-10%. Correct matches are
positional by construction, so retrieval quality is measurable without any
real imagery.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .imaging import GrayImage, save_png

log = logging.getLogger("placerec")

# Fills stay below 0.9 so a +10% brightness change never clips.
_FILL_LO, _FILL_HI = 0.08, 0.88


def _two_tones(rng: np.random.Generator) -> tuple[float, float]:
    """Tone pair with a guaranteed gap so the contrast survives resizing."""
    a = float(rng.uniform(_FILL_LO, _FILL_HI))
    gap = float(rng.uniform(0.35, 0.7))
    b = a + gap if a + gap <= _FILL_HI else a - gap
    return a, float(np.clip(b, _FILL_LO, _FILL_HI))


def _stripes(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    period = int(rng.integers(4, 13))
    a, b = _two_tones(rng)
    if rng.integers(0, 2):
        idx = np.arange(h)[:, None]
    else:
        idx = np.arange(w)[None, :]
    return np.where((idx // period) % 2 == 0, a, b) * np.ones((h, w))


def _grating(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    # period tied to the block so the wave stays visible after any resize
    period = float(rng.uniform(0.4, 1.2)) * min(h, w)
    theta = float(rng.uniform(0.0, np.pi))
    phase = float(rng.uniform(0.0, 2 * np.pi))
    base = float(rng.uniform(0.3, 0.62))
    amp = float(rng.uniform(0.16, 0.26))
    ys, xs = np.mgrid[0:h, 0:w]
    wave = np.sin(2 * np.pi * (xs * np.cos(theta) + ys * np.sin(theta)) / period + phase)
    return np.clip(base + amp * wave, _FILL_LO, _FILL_HI)


def _checker(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    m = min(h, w)
    cell = int(rng.integers(max(5, m // 4), max(6, m // 2 + 1)))
    a, b = _two_tones(rng)
    ys, xs = np.mgrid[0:h, 0:w]
    return np.where(((xs // cell) + (ys // cell)) % 2 == 0, a, b).astype(np.float64)


def _diagonal_split(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    a, b = _two_tones(rng)
    theta = float(rng.uniform(0.0, np.pi))
    ys, xs = np.mgrid[0:h, 0:w]
    side = (xs - w / 2) * np.cos(theta) + (ys - h / 2) * np.sin(theta)
    return np.where(side >= 0.0, a, b).astype(np.float64)


def make_scene(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """A canvas of distinct textured rectangles over a low-frequency background.

    Distinctiveness across scenes comes from three independent sources: the
    ambient background level, the background wave orientation, and the mix of
    rectangle textures (tones, orientations and periods all vary).
    """
    ys, xs = np.mgrid[0:height, 0:width]
    theta = float(rng.uniform(0.0, np.pi))
    u = xs * np.cos(theta) + ys * np.sin(theta)
    v = -xs * np.sin(theta) + ys * np.cos(theta)
    fx = rng.uniform(0.5, 2.0) * 2 * np.pi / width
    fy = rng.uniform(0.5, 2.0) * 2 * np.pi / height
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    base = float(rng.uniform(0.18, 0.52))
    canvas = base + 0.12 * np.sin(fx * u + p1) * np.cos(fy * v + p2)
    n_rects = int(rng.integers(12, 21))
    # Stratify rectangle centres across the width so every section has content.
    slots = (np.arange(n_rects) + rng.uniform(0.1, 0.9, size=n_rects)) / n_rects
    styles = (_grating, _checker, _diagonal_split, _stripes)
    for cx in rng.permutation(slots):
        w = int(rng.integers(20, 80))
        h = int(rng.integers(20, min(96, height - 10)))
        x1 = int(np.clip(round(cx * width - w / 2), 1, width - w - 1))
        y1 = int(rng.integers(2, height - h - 2))
        style = int(rng.integers(0, len(styles) + 1))
        if style == len(styles):
            block = np.full((h, w), rng.uniform(_FILL_LO, _FILL_HI))
        else:
            block = styles[style](rng, h, w)
        canvas[y1 : y1 + h, x1 : x1 + w] = block
        border = float(rng.uniform(_FILL_LO, _FILL_HI))
        canvas[y1 : y1 + 2, x1 : x1 + w] = border
        canvas[y1 + h - 2 : y1 + h, x1 : x1 + w] = border
        canvas[y1 : y1 + h, x1 : x1 + 2] = border
        canvas[y1 : y1 + h, x1 + w - 2 : x1 + w] = border
    return np.clip(canvas, 0.02, _FILL_HI + 0.02)


def render_views(
    scene: np.ndarray, view_width: int, view_height: int, rng: np.random.Generator
) -> tuple[GrayImage, GrayImage, int, int]:
    """Crop a reference/test view pair: shifted 5-15% of width, re-lit.

    Returns the two views plus their horizontal offsets into the scene, so
    the caller can express scene-fixed anchors in view coordinates.
    """
    canvas_h, canvas_w = scene.shape
    if canvas_h < view_height or canvas_w < view_width + round(0.15 * view_width):
        raise ValueError("scene canvas too small for the requested views")
    shift = int(round(view_width * rng.uniform(0.05, 0.15)))
    slack = canvas_w - view_width - shift
    x_ref = int(rng.integers(0, slack + 1))
    x_test = x_ref + shift
    if rng.integers(0, 2):
        x_ref, x_test = x_test, x_ref
    y = int(rng.integers(0, canvas_h - view_height + 1))
    ref = scene[y : y + view_height, x_ref : x_ref + view_width]
    test = scene[y : y + view_height, x_test : x_test + view_width]
    brightness = 1.0 + rng.uniform(-0.1, 0.1)
    test = np.clip(test * brightness, 0.0, 1.0)
    return GrayImage.from_array(ref.copy()), GrayImage.from_array(test), x_ref, x_test


def generate_dataset(
    out_dir: str | Path,
    locations: int = 50,
    seed: int = 0,
    view_width: int = 320,
    view_height: int = 240,
    name: str = "synthetic",
) -> Path:
    """Write a full dataset (PNG pairs plus manifest) and return the manifest path."""
    if locations < 1:
        raise ValueError("need at least one location")
    out_dir = Path(out_dir)
    images = out_dir / "images"
    images.mkdir(parents=True, exist_ok=True)
    canvas_w = view_width + round(0.15 * view_width) + 16
    canvas_h = view_height + 16
    records = []
    for i in range(locations):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))
        scene = make_scene(rng, canvas_w, canvas_h)
        ref, test, x_ref, x_test = render_views(scene, view_width, view_height, rng)
        loc_id = f"loc_{i:03d}"
        ref_name = f"images/{loc_id}_reference.png"
        test_name = f"images/{loc_id}_test.png"
        save_png(ref, out_dir / ref_name)
        save_png(test, out_dir / test_name)
        # one scene-fixed anchor, expressed per view: aligns sections across
        # the pair the way a shared vanishing point would
        anchor = canvas_w / 2
        records.append(
            {
                "id": loc_id,
                "reference": ref_name,
                "test": test_name,
                "vp_x_reference": int(round(anchor - x_ref)),
                "vp_x_test": int(round(anchor - x_test)),
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps({"name": name, "locations": records}, indent=2) + "\n")
    log.info("synthetic dataset: %d locations under %s", locations, out_dir)
    return manifest_path
