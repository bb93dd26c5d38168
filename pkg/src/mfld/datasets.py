"""Dataset loading and the deterministic generators used by presets."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ensemble import NoiseSource, Stream


def load_dataset(path, supervised: bool = False):
    """Read whitespace-separated reals, one sample per line.

    Blank lines and ``#`` comments are skipped. With ``supervised=True`` the
    last column is returned separately as the label vector.
    """
    path = Path(path)
    rows = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vals = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no samples")
    arr = np.asarray(rows, dtype=np.float64)
    if supervised:
        if arr.shape[1] < 2:
            raise ValueError(f"{path}: supervised data needs at least one feature and a label column")
        return arr[:, :-1], arr[:, -1]
    return arr


def two_gaussians(n: int, seed: int, dim: int = 1) -> np.ndarray:
    """n points from 0.3 N(-1, 0.5^2 I) + 0.7 N(3, 0.5^2 I)."""
    src = NoiseSource(seed)
    u = src.uniforms(0, n, stream=Stream.DATA)
    g = src.normals(1, n, dim, Stream.DATA)
    centers = np.where(u < 0.3, -1.0, 3.0)[:, None]
    return centers + 0.5 * g


def finite_sum_quadratic(n: int, dim: int, seed: int, center_std: float = 1.0, curvature_range=(0.5, 1.5)):
    """Centers and curvatures for V_j(x) = a_j ||x - c_j||^2 / 2."""
    src = NoiseSource(seed)
    centers = center_std * src.normals(2, n, dim, Stream.DATA)
    lo, hi = curvature_range
    curv = lo + (hi - lo) * src.uniforms(3, n, stream=Stream.DATA)
    return centers, curv
