# Plotting utils

import csv
import logging
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use('Agg')  # batch use, no display
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)


def color_list():
    # Return first 10 plt colors as hex strings
    return list(matplotlib.colors.TABLEAU_COLORS.values())


def write_csv(path, columns):
    """columns: ordered mapping name -> 1D array; shorter columns are padded with blanks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    n = max((len(c) for c in cols), default=0)
    with open(path, 'w', newline='') as f:
        w = csv.writer(f)
        w.writerow(names)
        for i in range(n):
            w.writerow([f'{c[i]:.10g}' if i < len(c) else '' for c in cols])
    return path


def write_gnuplot(path, csv_name, x, ys, xlabel='', ylabel='', logy=False, title=''):
    # companion script: gnuplot <name>.gp renders <name>.svg next to the CSV
    path = Path(path)
    names = [x] + list(ys)
    lines = ['set datafile separator ","',
             'set key autotitle columnhead',
             'set terminal svg size 800,500',
             f"set output '{path.stem}.svg'",
             f"set title '{title}'",
             f"set xlabel '{xlabel}'",
             f"set ylabel '{ylabel}'"]
    if logy:
        lines.append('set logscale y')
    plots = [f"'{csv_name}' using 1:{names.index(y) + 1} with lines" for y in ys]
    lines.append('plot ' + ', \\\n     '.join(plots))
    path.write_text('\n'.join(lines) + '\n')
    return path


def emit_plot(out_dir, name, x, ys, xlabel='', ylabel='', logy=False, title=''):
    """Write <name>.csv, <name>.gp and <name>.png for curves ys (mapping label -> array) over x."""
    out_dir = Path(out_dir)
    xname = xlabel or 'x'
    cols = {xname: x}
    cols.update({k: np.abs(v) if logy else np.real(v) for k, v in ys.items()})
    csv_path = write_csv(out_dir / f'{name}.csv', cols)
    write_gnuplot(out_dir / f'{name}.gp', csv_path.name, xname, list(ys), xlabel, ylabel, logy, title)
    fig, ax = plt.subplots(1, 1, figsize=(8, 5), tight_layout=True)
    for i, label in enumerate(ys):
        y, c = cols[label], color_list()[i % 10]
        ax.plot(x, y, '.-' if len(y) < 16 else '-', color=c, label=label, linewidth=1.5, markersize=6)
    if logy:
        ax.set_yscale('log')
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc='best')
    fig.savefig(out_dir / f'{name}.png', dpi=150)
    plt.close(fig)
    logger.info(f'plot {name}: {csv_path}')
    return csv_path


def plot_L_profile(L, out_dir, rows=4):
    # |L(r, w_j)| for a few directions
    idx = np.linspace(0, len(L.dirs) - 1, min(rows, len(L.dirs))).astype(int)
    ys = {f'w{j}': np.abs(L.values[j]) for j in idx}
    return emit_plot(out_dir, 'L_profile', L.r, ys, 'r', '|L(r,w)|', title='ray transform profile')


def plot_born_decay(norms, out_dir, ratio=None):
    n = np.arange(1, len(norms) + 1)
    ys = {'|W_n f|': np.asarray(norms, dtype=float)}
    if ratio:
        ys['fit'] = norms[0] * ratio ** (n - 1)
    return emit_plot(out_dir, 'born_decay', n, ys, 'n', 'norm', logy=True, title='Born order decay')


def plot_scale_diagnostics(lams, values, out_dir):
    # values: mapping norm name -> values over lams
    return emit_plot(out_dir, 'scale_diagnostics', np.asarray(lams, dtype=float), values, 'lambda', 'norm',
                     title='norms under rescaling')
