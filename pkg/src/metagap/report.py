"""Result emission: CSV (the source of truth), a self-contained SVG figure and a text summary."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .runner import COLUMNS, MEAN_STUDY_COLUMNS


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip form, stable across runs
    return str(v)


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        d = r if isinstance(r, dict) else r.as_dict()
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue()


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise RuntimeError(f"cannot write {path}: {exc.strerror or exc}") from None


# -- SVG --------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = np.floor(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def _panel(x, series, title, ylabel, ox, oy, w, h, xlabel) -> list[str]:
    """One line-plot panel at offset ``(ox, oy)``; ``series`` is ``[(label, y, err or None)]``."""
    ys = [np.asarray(y) for _, y, _ in series]
    errs = [np.zeros_like(y) if e is None else np.asarray(e) for (_, _, e), y in zip(series, ys)]
    lo = min(float(np.min(y - e)) for y, e in zip(ys, errs))
    hi = max(float(np.max(y + e)) for y, e in zip(ys, errs))
    yt = _nice_ticks(min(lo, 0.0), hi)
    y0, y1 = float(yt[0]), float(yt[-1])
    xt = _nice_ticks(float(np.min(x)), float(np.max(x)))
    x0, x1 = float(np.min(x)), float(np.max(x))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5

    def px(v):
        return ox + (v - x0) / (x1 - x0) * w

    def py(v):
        return oy + h - (v - y0) / (y1 - y0) * h

    out = [f'<rect x="{ox}" y="{oy}" width="{w}" height="{h}" fill="none" stroke="#333"/>',
           f'<text x="{ox + w / 2:.1f}" y="{oy - 10}" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<text x="{ox + w / 2:.1f}" y="{oy + h + 38}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
           f'<text x="{ox - 48}" y="{oy + h / 2:.1f}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 {ox - 48} {oy + h / 2:.1f})">{escape(ylabel)}</text>']
    for t in yt:
        out.append(f'<line x1="{ox}" x2="{ox + w}" y1="{py(t):.1f}" y2="{py(t):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{ox - 6}" y="{py(t) + 4:.1f}" text-anchor="end" font-size="10">{t:.3g}</text>')
    for t in xt:
        if x0 - 1e-12 <= t <= x1 + 1e-12:
            out.append(f'<text x="{px(t):.1f}" y="{oy + h + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>')
    for i, ((label, _, _), y, e) in enumerate(zip(series, ys, errs)):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for a, b, s in zip(x, y, e):
            out.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="3" fill="{color}"/>')
            if s > 0:
                out.append(f'<line x1="{px(a):.1f}" x2="{px(a):.1f}" y1="{py(b - s):.1f}" y2="{py(b + s):.1f}" '
                           f'stroke="{color}"/>')
        ly = oy + 16 + 16 * i
        out.append(f'<line x1="{ox + 10}" x2="{ox + 30}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ox + 36}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    return out


def sweep_svg(rows) -> str:
    """Two stacked panels: both gap metrics (with one standard error) and both bounds."""
    x = np.array([r.swept_value for r in rows])
    xlabel = rows[0].parameter if rows else ""
    W, H, pw, ph = 640, 720, 520, 250
    gaps = [("|gap| averaged over tasks", [r.abs_avg_gap for r in rows], [r.abs_avg_gap_se for r in rows]),
            ("|average gap|", [r.avg_abs_gap for r in rows], [r.avg_abs_gap_se for r in rows])]
    bounds = [("KL bound", [r.bound_kl for r in rows], None),
              ("JS bound", [r.bound_js for r in rows], None),
              ("|gap| averaged over tasks", [r.abs_avg_gap for r in rows], None)]
    body = _panel(x, gaps, "Meta-generalization gap", "gap", 90, 50, pw, ph, xlabel)
    body += _panel(x, bounds, "Upper bounds", "value", 90, 410, pw, ph, xlabel)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
            f'font-family="sans-serif">\n<rect width="{W}" height="{H}" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


# -- text report --------------------------------------------------------------

def _table(rows, columns) -> str:
    cells = [[str(c) for c in columns]]
    for r in rows:
        d = r if isinstance(r, dict) else r.as_dict()
        cells.append([f"{d[c]:.5g}" if isinstance(d[c], (float, np.floating)) else str(d[c]) for c in columns])
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "\n".join("  ".join(v.rjust(wd) for v, wd in zip(row, widths)) for row in cells)


def sweep_checks(rows) -> dict:
    """Qualitative checks over a sweep; each entry is ``(passed, detail)``."""
    a = np.array([r.abs_avg_gap for r in rows])
    a_se = np.array([r.abs_avg_gap_se for r in rows])
    b = np.array([r.avg_abs_gap for r in rows])
    b_se = np.array([r.avg_abs_gap_se for r in rows])
    kl = np.array([r.bound_kl for r in rows])
    js = np.array([r.bound_js for r in rows])
    up = int(np.sum(np.diff(a) > 0))
    ra, rb = float(np.ptp(a)), float(np.ptp(b))
    slack = float(np.min(np.minimum(kl, js) - (a - 3 * a_se)))
    jensen = float(np.max(b - a - 3 * np.hypot(a_se, b_se)))
    return {
        "abs_avg_increasing": (up >= len(rows) - 2, f"{up} of {len(rows) - 1} consecutive pairs increase"),
        "avg_abs_flat": (rb < 0.25 * ra, f"range {rb:.4g} vs 0.25 x {ra:.4g} = {0.25 * ra:.4g}"),
        "bounds_dominate": (slack >= 0, f"smallest bound minus (gap - 3 se) = {slack:.4g}"),
        "bounds_monotone": (bool(np.all(np.diff(kl) > 0) and np.all(np.diff(js) > 0)), "KL and JS bounds strictly increase"),
        "jensen_ordering": (jensen <= 0, f"largest (avg_abs - abs_avg - 3 se) = {jensen:.4g}"),
    }


def sweep_report(rows, cfg) -> str:
    cols = ("swept_value", "abs_avg_gap", "abs_avg_gap_se", "avg_abs_gap", "avg_abs_gap_se", "bound_kl", "bound_js",
            "epsilon_kl", "epsilon_js", "B", "mi_hyper", "mi_model")
    lines = [f"sweep over {rows[0].parameter} ({len(rows)} points, seed {cfg.budget.seed})",
             f"budget: outer={cfg.budget.outer_trials} inner={cfg.budget.inner_trials} test={cfg.budget.test_samples}",
             "", _table(rows, cols), "", "checks:"]
    for name, (ok, detail) in sweep_checks(rows).items():
        lines.append(f"  [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return "\n".join(lines) + "\n"


def write_sweep_outputs(rows, cfg, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    paths = {"csv": out_dir / "results.csv", "svg": out_dir / "fig2.svg", "report": out_dir / "report.txt"}
    _write(paths["csv"], rows_to_csv(rows))
    _write(paths["svg"], sweep_svg(rows))
    _write(paths["report"], sweep_report(rows, cfg))
    return paths


def write_single_row(row, cfg, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    paths = {"csv": out_dir / "results.csv", "report": out_dir / "report.txt"}
    _write(paths["csv"], rows_to_csv([row]))
    _write(paths["report"], f"single scenario (seed {cfg.budget.seed})\n\n" + _table([row], COLUMNS[1:]) + "\n")
    return paths


def write_mean_study(rows, cfg, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    paths = {"csv": out_dir / "mean_study.csv", "report": out_dir / "report.txt"}
    _write(paths["csv"], rows_to_csv(rows, MEAN_STUDY_COLUMNS))
    conf, lim = rows
    text = [
        f"Gaussian mean estimation (N={conf['N']}, m={conf['m']}, alpha={conf['alpha']}, c={conf['c']})",
        f"  epsilon_kl                 {conf['epsilon_kl']:.6g}",
        f"  I(U;S_i) closed / KSG      {conf['mi_hyper_closed']:.5f} / {conf['mi_hyper_ksg']:.5f} (se {conf['mi_hyper_ksg_se']:.2g})",
        f"  I(W;Z_j) closed / KSG      {conf['mi_model_closed']:.5f} / {conf['mi_model_ksg']:.5f} (se {conf['mi_model_ksg_se']:.2g})",
        f"  KL bound closed / assembled {conf['bound_kl_closed_form']:.12g} / {conf['bound_kl_assembled']:.12g}",
        f"  JS bound closed / assembled {conf['bound_js_closed_form']:.12g} / {conf['bound_js_assembled']:.12g}",
        f"limit N=m={lim['N']} with epsilon fixed: {lim['bound_kl_closed_form']:.8g} vs c^2 sqrt(eps)/sqrt(2) = "
        f"{lim['limit_target']:.8g} (deviation {lim['limit_deviation']:.3g})",
    ]
    _write(paths["report"], "\n".join(text) + "\n")
    return paths
