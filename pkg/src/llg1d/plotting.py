"""Figures written next to the CSV outputs of the command-line runs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps the PNG bytes reproducible across runs
_PNG_META = {"Software": None}


def _style(ax):
    ax.grid(True, alpha=0.3, linewidth=0.5)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)


def plot_trajectory(path, columns, title=None):
    """Distances, energy and sphere residual against time.

    ``columns`` is the dict returned by :func:`llg1d.io.read_trajectory_csv`
    (or one with the same keys).
    """
    fig, axes = plt.subplots(3, 1, figsize=(6.0, 7.0), sharex=True)
    pids = np.unique(columns["path_id"])
    for pid in pids:
        sel = columns["path_id"] == pid
        t = columns["t"][sel]
        lw = 1.2 if len(pids) == 1 else 0.6
        axes[0].plot(t, columns["dist_h1_minus"][sel], color="C0", lw=lw)
        axes[0].plot(t, columns["dist_h1_plus"][sel], color="C3", lw=lw)
        axes[1].plot(t, columns["energy"][sel], color="C2", lw=lw)
        axes[2].semilogy(t, np.maximum(columns["sphere_residual"][sel], 1e-18), color="C1", lw=lw)
    axes[0].set_ylabel(r"$H^1$ distance")
    axes[0].legend(["to $(-1,0,0)$", "to $(1,0,0)$"], frameon=False, fontsize=8)
    axes[1].set_ylabel("energy")
    axes[2].set_ylabel(r"$\max_x\,||m|-1|$")
    axes[2].set_xlabel("t")
    for ax in axes:
        _style(ax)
    if title:
        axes[0].set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_ensemble(path, summaries, delta=None, rho=None):
    """Histograms of terminal distance to (1,0,0) and of the maximal excursion."""
    d_plus = np.array([s.dist_h1_plus for s in summaries if not s.failed])
    exc = np.array([s.max_excursion for s in summaries if not s.failed])
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
    axes[0].hist(d_plus, bins=40, color="C3", alpha=0.8)
    axes[0].set_xlabel(r"$|m(T)-(1,0,0)|_{H^1}$")
    if delta is not None:
        axes[0].axvline(delta, color="k", ls="--", lw=0.8)
    axes[1].hist(exc, bins=40, color="C0", alpha=0.8)
    axes[1].set_xlabel(r"$\sup_t |m(t)-m_0|_{H^1}$")
    if rho is not None:
        axes[1].axvline(rho, color="k", ls="--", lw=0.8)
    for ax in axes:
        _style(ax)
        ax.set_ylabel("paths")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
