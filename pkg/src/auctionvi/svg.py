"""Self-contained SVG rendering of two-slope flow fields."""

import numpy as np

MARGIN = 50


def _fmt(v):
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, xr, yr, size):
        self.xr, self.yr, self.size = xr, yr, size
        self.items = []

    def px(self, x, y):
        s = self.size
        X = MARGIN + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * s
        Y = MARGIN + s - (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * s
        return X, Y

    def add(self, text):
        self.items.append(text)

    def render(self, title):
        w = self.size + 2 * MARGIN
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" '
                f'viewBox="0 0 {w} {w}">\n'
                '<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" '
                'orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#1f3b73"/></marker></defs>\n'
                f'<rect width="{w}" height="{w}" fill="white"/>\n'
                f'<title>{title}</title>\n')
        return head + "\n".join(self.items) + "\n</svg>\n"


def _star(cx, cy, r):
    pts = []
    for k in range(10):
        ang = -np.pi / 2 + k * np.pi / 5
        rad = r if k % 2 == 0 else 0.45 * r
        pts.append(f"{_fmt(cx + rad * np.cos(ang))},{_fmt(cy + rad * np.sin(ang))}")
    return " ".join(pts)


def flow_svg(field, violations=None, trajectories=(), size=600, arrows=21, title=None):
    """Vector field with violation overlay, trajectories and the equilibrium marker.

    Arrow lengths are proportional to the gradient norm relative to the
    largest shown arrow, clamped to one lattice spacing of the arrow grid.
    """
    b1, b2 = field.b1, field.b2
    xr, yr = (b1[0], b1[-1]), (b2[0], b2[-1])
    cv = _Canvas(xr, yr, size)
    if violations is not None:
        dx = (b1[1] - b1[0]) if b1.size > 1 else 1.0
        dy = (b2[1] - b2[0]) if b2.size > 1 else 1.0
        for i, j in zip(*np.nonzero(violations.violated)):
            x0, y0 = cv.px(violations.b1[i] - dx / 2, violations.b2[j] + dy / 2)
            x1, y1 = cv.px(violations.b1[i] + dx / 2, violations.b2[j] - dy / 2)
            cv.add(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                   f'height="{_fmt(y1 - y0)}" fill="red" fill-opacity="0.35" stroke="none"/>')
    # axes
    x0, y0 = cv.px(xr[0], yr[0])
    x1, y1 = cv.px(xr[1], yr[1])
    cv.add(f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" height="{_fmt(y0 - y1)}" '
           'fill="none" stroke="black"/>')
    for t in np.linspace(xr[0], xr[1], 6):
        X, Y = cv.px(t, yr[0])
        cv.add(f'<text x="{_fmt(X)}" y="{_fmt(Y + 18)}" font-size="12" text-anchor="middle">{t:.2g}</text>')
    for t in np.linspace(yr[0], yr[1], 6):
        X, Y = cv.px(xr[0], t)
        cv.add(f'<text x="{_fmt(X - 8)}" y="{_fmt(Y + 4)}" font-size="12" text-anchor="end">{t:.2g}</text>')
    X, Y = cv.px(0.5 * (xr[0] + xr[1]), yr[0])
    cv.add(f'<text x="{_fmt(X)}" y="{_fmt(Y + 38)}" font-size="14" text-anchor="middle">b1</text>')
    X, Y = cv.px(xr[0], 0.5 * (yr[0] + yr[1]))
    cv.add(f'<text x="{_fmt(X - 38)}" y="{_fmt(Y)}" font-size="14" text-anchor="middle">b2</text>')

    # arrows on a subsampled lattice
    ii = np.unique(np.round(np.linspace(0, b1.size - 1, min(arrows, b1.size))).astype(int))
    jj = np.unique(np.round(np.linspace(0, b2.size - 1, min(arrows, b2.size))).astype(int))
    sub = np.ix_(ii, jj)
    g1, g2, feas = field.g1[sub], field.g2[sub], field.feasible[sub]
    norms = np.where(feas, np.hypot(g1, g2), 0.0)
    top = np.max(norms) if np.any(norms > 0) else 1.0
    cell = size / max(len(ii), len(jj))
    for a, i in enumerate(ii):
        for b, j in enumerate(jj):
            if not feas[a, b] or norms[a, b] == 0:
                continue
            length = 0.9 * cell * min(1.0, np.sqrt(norms[a, b] / top))
            X, Y = cv.px(b1[i], b2[j])
            ux, uy = g1[a, b] / norms[a, b], -g2[a, b] / norms[a, b]
            cv.add(f'<line x1="{_fmt(X)}" y1="{_fmt(Y)}" x2="{_fmt(X + length * ux)}" '
                   f'y2="{_fmt(Y + length * uy)}" stroke="#1f3b73" stroke-width="1.2" '
                   'marker-end="url(#head)"/>')
    for tr in trajectories:
        pts = " ".join(f"{_fmt(p[0])},{_fmt(p[1])}" for p in (cv.px(it.b1, it.b2) for it in tr.iterates))
        cv.add(f'<polyline points="{pts}" fill="none" stroke="#2a9d4b" stroke-width="1.5"/>')
    star = field.star
    if star is not None:
        X, Y = cv.px(star.b1, star.b2)
        cv.add(f'<polygon class="bne-star" points="{_star(X, Y, 12)}" fill="gold" stroke="black"/>')
    return cv.render(title or f"{field.rule} gradient field")
