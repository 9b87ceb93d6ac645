"""SVG drawings of the images phi_w(X) for short admissible words w."""
from __future__ import annotations

import numpy as np

from .core import Inversion, Moebius, Similarity, SystemSpec, compose

PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e"]

def admissible_words(maps, depth):
    """Words (tuples of maps) of length ``depth``, outermost map first."""
    words = [(m,) for m in maps]
    for _ in range(depth - 1):
        words = [w + (m,) for w in words for m in maps if m.target == w[-1].source]
    return words

def _circle_of_image(word, X):
    """(kind, data) describing phi_w(X): ("circle", (cx, cy, r)) or ("path", pts)."""
    f = compose(list(word))
    if isinstance(f, Moebius):
        c, r = f.image_disk(X.center, X.radius)
        return "circle", (c[0], c[1], r)
    if all(isinstance(m, Similarity) for m in word):
        c, r = np.array(X.center), X.radius
        for m in reversed(word):
            c, r = m.ratio * c + m.offset, m.ratio * r
        return "circle", (c[0], c[1], r)
    if X.dim == 3 and all(isinstance(m, (Inversion, Similarity)) for m in word):
        # spheres go to spheres: fit one through mapped samples, draw its xy shadow
        y, _ = f._eval(X.boundary_samples(64))
        A = np.c_[2 * y, np.ones(len(y))]
        sol, *_ = np.linalg.lstsq(A, np.einsum("ij,ij->i", y, y), rcond=None)
        c = sol[:3]
        r = float(np.sqrt(sol[3] + c @ c))
        return "circle", (c[0], c[1], r)
    pts = X.boundary_samples(256)
    y, _ = f._eval(pts)
    return "path", y[:, :2]

def figure_shapes(spec: SystemSpec, depth: int, truncation=None):
    maps = spec.maps(truncation)
    shapes = []
    for v, vert in enumerate(spec.vertices):
        shapes.append((0, "circle", (vert.X.center[0], vert.X.center[1], vert.X.radius)))
    for d in range(1, depth + 1):
        for w in admissible_words(maps, d):
            X = spec.vertices[w[-1].source].X
            kind, data = _circle_of_image(w, X)
            shapes.append((d, kind, data))
    return shapes

def emit_figure(spec: SystemSpec, depth: int, path, truncation=None, size=800):
    """Write an SVG with the vertex regions and their images up to ``depth``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if spec.alphabet.infinite and depth > 4:
        raise ValueError("depth is limited to 4 for infinite alphabets")
    shapes = figure_shapes(spec, depth, truncation)
    xs, ys = [], []
    for _, kind, data in shapes:
        if kind == "circle":
            cx, cy, r = data
            xs += [cx - r, cx + r]
            ys += [cy - r, cy + r]
        else:
            xs += list(data[:, 0])
            ys += list(data[:, 1])
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    span = max(x1 - x0, y1 - y0) * 1.05
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    scale = size / span

    def tx(x, y):
        return (x - cx) * scale + size / 2, size / 2 - (y - cy) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<title>{spec.name}, depth {depth}</title>',
           '<rect width="100%" height="100%" fill="white"/>']
    for d, kind, data in shapes:
        col = "#000000" if d == 0 else PALETTE[(d - 1) % len(PALETTE)]
        sw = 1.5 if d == 0 else 0.8
        if kind == "circle":
            x, y = tx(data[0], data[1])
            out.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{data[2] * scale:.4f}" '
                       f'fill="none" stroke="{col}" stroke-width="{sw}"/>')
        else:
            p = " ".join("{:.3f},{:.3f}".format(*tx(a, b)) for a, b in data)
            out.append(f'<polygon points="{p}" fill="none" stroke="{col}" stroke-width="{sw}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return len(shapes)
