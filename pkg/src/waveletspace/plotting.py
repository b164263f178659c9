"""PNG rendering of merged result tables (Agg backend, no display)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps the PNG bytes a function of the data alone
_PNG_META = {"Software": None}


def _float(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def render_table(header: list, rows: list, title: str, run_column: str = "run_id") -> bytes:
    """One line per run: every numeric column against the first data column.

    ``rows`` are lists of strings aligned with ``header``. Columns whose
    values span several decades get a log axis.
    """
    cols = [h for h in header if h != run_column]
    xcol, ycols = cols[0], cols[1:]
    ri = header.index(run_column)
    xi = header.index(xcol)
    runs = []
    for row in rows:
        if row[ri] not in runs:
            runs.append(row[ri])
    fig, axes = plt.subplots(len(ycols) or 1, 1, figsize=(6, 2.6 * max(len(ycols), 1)),
                             squeeze=False)
    for ax, yc in zip(axes[:, 0], ycols):
        yi = header.index(yc)
        positive = True
        for run in runs:
            pts = [(_float(r[xi]), _float(r[yi])) for r in rows if r[ri] == run]
            pts = [(a, b) for a, b in pts if a is not None and b is not None]
            if not pts:
                continue
            xs, ys = zip(*pts)
            positive &= all(y > 0 for y in ys)
            ax.plot(xs, ys, marker="o", label=run)
        if positive and ax.lines:
            ys = [y for line in ax.lines for y in line.get_ydata()]
            if max(ys) / min(ys) > 1e3:
                ax.set_yscale("log")
        ax.set_xlabel(xcol)
        ax.set_ylabel(yc)
        if len(runs) > 1:
            ax.legend(fontsize="small")
    axes[0, 0].set_title(title)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return buf.getvalue()
