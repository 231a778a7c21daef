"""Figures: rendered to PNG with Agg, plus a standalone script that redraws them from the data files."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import _write  # noqa: E402

_SCRIPT = '''"""Redraw {png} from the profile files next to this script."""
import os
import sys

import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
FILES = {files!r}
LABELS = {labels!r}
PLUS = {plus!r}

fig, ax = plt.subplots(figsize=(8, 4.5))
for a, b in PLUS:
    ax.axvspan(a, b, color="0.92", lw=0)
for f, lab in zip(FILES, LABELS):
    with open(os.path.join(HERE, f)) as fh:
        d = np.loadtxt([ln for ln in fh if ln[0] not in "#x"], delimiter=",", ndmin=2)
    ax.plot(d[:, 0], d[:, 1], lw=0.9, label=lab)
ax.set_xlabel("x")
ax.set_ylabel("u")
ax.set_title({title!r})
if len(FILES) <= 12:
    ax.legend(fontsize=7, ncol=2)
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, {png!r}), dpi=120)
'''


def overlay(out_dir, stem, files, labels, title="", plus=()):
    """Overlay u(x) from profile files; writes stem.png and stem_plot.py, returns both paths."""
    plus = [tuple(map(float, I)) for I in plus]
    files = [os.path.basename(f) for f in files]
    png = f"{stem}.png"
    script = _SCRIPT.format(png=png, files=files, labels=[str(s) for s in labels], plus=plus, title=title)
    spath = _write(os.path.join(out_dir, f"{stem}_plot.py"), script)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for a, b in plus:
        ax.axvspan(a, b, color="0.92", lw=0)
    for f, lab in zip(files, labels):
        with open(os.path.join(out_dir, f)) as fh:
            d = np.loadtxt([ln for ln in fh if ln[0] not in "#x"], delimiter=",", ndmin=2)
        ax.plot(d[:, 0], d[:, 1], lw=0.9, label=str(lab))
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.set_title(title)
    if len(files) <= 12:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    ppath = os.path.join(out_dir, png)
    fig.savefig(ppath, dpi=120)
    plt.close(fig)
    return ppath, spath
