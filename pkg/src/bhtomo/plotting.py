"""Figures rendered from the CSV tables of a run directory."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

CLASS_COLORS = {"ES": "tab:green", "DS": "tab:orange", "Unstable": "tab:red"}


def _table(path):
    header, rows = read_csv(path)
    cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
    return header, cols


def _num(values) -> np.ndarray:
    return np.array([float(v) for v in values])


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bogoliubov_scan(cols, path):
    u, q = _num(cols["u"]), _num(cols["q"]).astype(int)
    re, im = _num(cols["re_omega"]), _num(cols["im_omega"])
    fig, (a, b) = plt.subplots(2, 1, sharex=True, figsize=(5, 5))
    for k in np.unique(q):
        s = q == k
        a.plot(u[s], re[s], ".-", ms=3, label=f"q={k}")
        b.plot(u[s], im[s], ".-", ms=3)
    a.axhline(0, color="k", lw=0.5)
    a.set_ylabel(r"Re $\omega$")
    b.set_ylabel(r"Im $\omega$")
    b.set_xlabel("u")
    a.legend(fontsize=7)
    return _save(fig, path)


def plot_stability_diagram(cols, path):
    u = _num(cols["u"])
    phi = _num(cols["phi"]) if cols["phi"][0] != "nan" else None
    fig, ax = plt.subplots(figsize=(5, 4))
    classes = np.array(cols["class"])
    for name, color in CLASS_COLORS.items():
        s = classes == name
        if not s.any():
            continue
        if phi is None:
            ax.scatter(u[s], np.zeros(s.sum()), c=color, s=12, label=name)
        else:
            ax.scatter(phi[s] / np.pi, u[s], c=color, s=12, marker="s", label=name)
    if phi is None:
        ax.set_xlabel("u")
        ax.set_yticks([])
    else:
        ax.set_xlabel(r"$\phi/\pi$")
        ax.set_ylabel("u")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_sp_continuation(cols, path):
    u = _num(cols["u"])
    fig, (a, b) = plt.subplots(1, 2, figsize=(8, 3.5))
    a.plot(u, _num(cols["n_SP"]), ".-")
    a.set_xlabel("u")
    a.set_ylabel(r"$n_{SP}/N$")
    sites = sorted((c for c in cols if c.startswith("p_")), key=lambda c: int(c[2:]))
    dens = np.array([_num(cols[c]) for c in sites])
    for i in np.linspace(0, len(u) - 1, min(len(u), 5)).astype(int):
        b.plot(np.arange(1, len(sites) + 1), dens[:, i], "o-", ms=3, label=f"u={u[i]:.3g}")
    b.set_xlabel("site")
    b.set_ylabel("density")
    b.legend(fontsize=7)
    return _save(fig, path)


def plot_tomography(cols, path):
    E, n = _num(cols["E"]), _num(cols["n_o_mean"])
    S = _num(cols["purity"])
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(E, n, c=S, s=4, cmap="viridis", vmin=0, vmax=1)
    fig.colorbar(sc, ax=ax, label="purity")
    ax.set_xlabel("E")
    ax.set_ylabel(r"$\langle n_o \rangle$")
    return _save(fig, path)


def plot_spectrum(cols, path):
    E = _num(cols["E"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.sort(E), ".", ms=2)
    ax.set_xlabel(r"$\nu$")
    ax.set_ylabel("E")
    return _save(fig, path)


def plot_trajectory(cols, path):
    t = _num(cols["t"])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for c in sorted((c for c in cols if c.startswith("n_")), key=lambda c: int(c[2:])):
        ax.plot(t, _num(cols[c]), lw=0.6, label=c)
    ax.set_xlabel("t")
    ax.set_ylabel("orbital occupation")
    ax.legend(fontsize=7, ncol=2)
    return _save(fig, path)


def plot_ergodicity_map(cols, path):
    x, y = _num(cols["n_o_init"]), _num(cols["n_o_mean"])
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(x, y, "o-", ms=3)
    ax.plot([0, 1], [0, 1], "k:", lw=0.8)
    ax.set_xlabel(r"$n_o(0)/N$")
    ax.set_ylabel(r"$\langle n_o \rangle/N$")
    return _save(fig, path)


def plot_sigma_scan(cols, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(_num(cols["u"]), _num(cols["sigma"]), "o-", ms=3)
    ax.set_xlabel("u")
    ax.set_ylabel(r"$\sigma$")
    return _save(fig, path)


def plot_microcanonical(cols, path):
    u, n, P = _num(cols["u"]), _num(cols["n_o"]), _num(cols["P_E"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for val in np.unique(u):
        s = u == val
        ax.plot(n[s], P[s], lw=1, label=f"u={val:.3g}")
    ax.set_xlabel(r"$n_o$")
    ax.set_ylabel(r"$P^E(n_o)$")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_fingerprint(cols, path):
    x = _num(cols["control_param"])
    fig, (a, b) = plt.subplots(2, 1, sharex=True, figsize=(5, 5))
    a.plot(x, _num(cols["n_max"]), "o-", ms=3)
    b.plot(x, _num(cols["S_max"]), "o-", ms=3, color="tab:purple")
    a.set_ylabel(r"$n_{max}$")
    b.set_ylabel(r"$S_{max}$")
    b.set_xlabel("control parameter")
    return _save(fig, path)


def plot_phonons(cols, path):
    E = _num(cols["E"])
    w = _num(cols["weight"])
    lab = np.array(cols["n_phonons"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in sorted(set(lab)):
        s = lab == name
        ax.scatter(E[s], w[s], s=10, label=f"{name}")
    ax.set_xlabel("E")
    ax.set_ylabel("dominant weight")
    ax.legend(fontsize=7, title="phonons")
    return _save(fig, path)


PLOTTERS = {
    "bogoliubov_scan": plot_bogoliubov_scan,
    "stability_diagram": plot_stability_diagram,
    "sp_continuation": plot_sp_continuation,
    "spectrum": plot_spectrum,
    "tomography": plot_tomography,
    "trajectory": plot_trajectory,
    "ergodicity_map": plot_ergodicity_map,
    "sigma_scan": plot_sigma_scan,
    "microcanonical": plot_microcanonical,
    "fingerprint_scan": plot_fingerprint,
    "phonon_classify": plot_phonons,
}


def render_report(outdir) -> list[Path]:
    """Render one PNG per plottable CSV listed in ``outdir/manifest.json``."""
    outdir = Path(outdir)
    manifest = json.loads((outdir / "manifest.json").read_text())
    made = []
    for art in manifest["artifacts"]:
        plot = PLOTTERS.get(art.get("table"))
        if plot is None or art.get("rows", 0) == 0:
            continue
        _, cols = _table(outdir / art["path"])
        made.append(plot(cols, outdir / (Path(art["path"]).stem + ".png")))
    return made
