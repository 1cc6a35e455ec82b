"""Artifact emission: JSON reports, CSV series, SVG plots, run manifests.

All writers are deterministic: sorted JSON keys, repr-style floats with
full precision, no timestamps inside reports.  The manifest carries the
wall clock, which is the one field excluded from byte-for-byte claims.
"""

import hashlib
import json
import os

import numpy as np


def _plain(obj):
    """Recursively convert numpy scalars/arrays for JSON emission."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def json_bytes(obj):
    text = json.dumps(_plain(obj), sort_keys=True, indent=2,
                      ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def write_json(path, obj):
    data = json_bytes(obj)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_bytes(columns):
    """RFC-4180-style CSV from an ordered mapping name -> sequence."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    if cols and any(len(c) != len(cols[0]) for c in cols):
        raise ValueError("CSV columns must share a length")
    lines = [",".join(names)]
    for i in range(len(cols[0]) if cols else 0):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    return ("\r\n".join(lines) + "\r\n").encode("utf-8")


def write_csv(path, columns):
    with open(path, "wb") as fh:
        fh.write(csv_bytes(columns))
    return path


# ---------------------------------------------------------------------------
# SVG plotting, hand-rolled for byte determinism

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _minmax_bin(x, y, max_points=2000):
    """Downsample keeping per-bin extremes so spikes survive."""
    n = len(x)
    if n <= max_points:
        return x, y
    n_bins = max_points // 2
    edges = np.linspace(0, n, n_bins + 1).astype(int)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if a == b:
            continue
        seg = y[a:b]
        i_min, i_max = int(np.argmin(seg)), int(np.argmax(seg))
        for i in sorted({i_min, i_max}):
            xs.append(x[a + i])
            ys.append(seg[i])
    return np.array(xs), np.array(ys)


def svg_plot(series, title="", width=640, height=400, log_y=False):
    """Static SVG: dict name -> (x, y); legend order is input order."""
    pad = 50
    body = []
    named = []
    for name, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if log_y:
            keep &= y > 0.0
        x, y = x[keep], y[keep]
        if len(x):
            named.append((name, *_minmax_bin(x, np.log10(y) if log_y else y)))
    if not named:
        body.append('<text x="%d" y="%d" text-anchor="middle">no data'
                    '</text>' % (width // 2, height // 2))
    else:
        x_lo = min(float(np.min(x)) for _, x, _ in named)
        x_hi = max(float(np.max(x)) for _, x, _ in named)
        y_lo = min(float(np.min(y)) for _, _, y in named)
        y_hi = max(float(np.max(y)) for _, _, y in named)
        x_span = (x_hi - x_lo) or 1.0
        y_span = (y_hi - y_lo) or 1.0
        x_lo, x_hi = x_lo - 0.05 * x_span, x_hi + 0.05 * x_span
        y_lo, y_hi = y_lo - 0.05 * y_span, y_hi + 0.05 * y_span

        def sx(v):
            return pad + (v - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

        def sy(v):
            return height - pad - (v - y_lo) / (y_hi - y_lo) \
                * (height - 2 * pad)

        body.append('<rect x="%d" y="%d" width="%d" height="%d" fill="none" '
                    'stroke="#000"/>' % (pad, pad, width - 2 * pad,
                                         height - 2 * pad))
        body.append('<text x="%d" y="%d" font-size="11">%s</text>'
                    % (pad, height - pad + 16, "%.6g" % x_lo))
        body.append('<text x="%d" y="%d" font-size="11" text-anchor="end">%s'
                    '</text>' % (width - pad, height - pad + 16, "%.6g" % x_hi))
        ylab = ("1e%.3g" % y_lo, "1e%.3g" % y_hi) if log_y \
            else ("%.6g" % y_lo, "%.6g" % y_hi)
        body.append('<text x="%d" y="%d" font-size="11">%s</text>'
                    % (4, height - pad, ylab[0]))
        body.append('<text x="%d" y="%d" font-size="11">%s</text>'
                    % (4, pad + 6, ylab[1]))
        for k, (name, x, y) in enumerate(named):
            pts = " ".join("%.2f,%.2f" % (sx(a), sy(b))
                           for a, b in zip(x, y))
            color = _COLORS[k % len(_COLORS)]
            body.append('<polyline fill="none" stroke="%s" stroke-width="1.2"'
                        ' points="%s"/>' % (color, pts))
            body.append('<text x="%d" y="%d" font-size="11" fill="%s">%s'
                        '</text>' % (width - pad - 120, pad + 14 + 14 * k,
                                     color, name))
    if title:
        body.append('<text x="%d" y="18" text-anchor="middle" font-size="13">'
                    '%s</text>' % (width // 2, title))
    svg = ('<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">'
           % (width, height)) + "".join(body) + "</svg>\n"
    return svg.encode("utf-8")


def write_svg(path, series, **kwargs):
    with open(path, "wb") as fh:
        fh.write(svg_plot(series, **kwargs))
    return path


# ---------------------------------------------------------------------------
# manifest

def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


class RunManifest:
    """Provenance record for one CLI run."""

    def __init__(self, command, config_text, seed, version):
        self.command = command
        self.config_hash = hashlib.sha256(
            config_text.encode("utf-8")).hexdigest()
        self.seed = seed
        self.version = version
        self.inputs = {}
        self.outputs = []
        self.wall_clock_s = None
        self.passed = None

    def add_input(self, path):
        self.inputs[os.path.basename(path)] = file_digest(path)

    def add_output(self, path):
        self.outputs.append(os.path.basename(path))

    def as_dict(self):
        return {"command": self.command, "config_hash": self.config_hash,
                "seed": self.seed, "version": self.version,
                "inputs": self.inputs, "outputs": sorted(set(self.outputs)),
                "wall_clock_s": self.wall_clock_s, "passed": self.passed}

    def write(self, path):
        return write_json(path, self.as_dict())
