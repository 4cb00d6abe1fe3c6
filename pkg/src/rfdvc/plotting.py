"""Figures written next to the CSV output (PNG, non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

VARIANT_LABELS = {"vc": "VC baseline", "gt": "RFDVC-GT", "ds": "RFDVC-DS"}
VARIANT_COLORS = {"vc": "#7f7f7f", "gt": "#1f77b4", "ds": "#ff7f0e"}

plt.rcParams.update({
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
})


def savings_boxplot(rows, path, relative: dict[int, float] | None = None) -> None:
    """Box plot of per-run savings, grouped by condition and coloured by variant.

    With ``relative`` (row index -> savings against the baseline run) the
    delta variants are plotted against the baseline instead of raw frames.
    """
    groups: dict[tuple[str, str], list[float]] = {}
    for i, (_, r) in enumerate(rows):
        if relative:
            if i not in relative or r.variant == "vc":
                continue
            groups.setdefault((r.condition, r.variant), []).append(relative[i])
        else:
            groups.setdefault((r.condition, r.variant), []).append(r.savings_pct)
    conditions = list(dict.fromkeys(c for c, _ in groups))
    variants = [v for v in VARIANT_LABELS if any(k[1] == v for k in groups)]
    width = 0.8 / max(1, len(variants))

    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(conditions), 3.2))
    for j, v in enumerate(variants):
        pos = [i + (j - (len(variants) - 1) / 2) * width for i in range(len(conditions))]
        data = [groups.get((c, v), []) for c in conditions]
        keep = [(p, d) for p, d in zip(pos, data) if d]
        if not keep:
            continue
        bp = ax.boxplot([d for _, d in keep], positions=[p for p, _ in keep], widths=width * 0.9,
                        patch_artist=True, showfliers=False,
                        medianprops={"color": "black"})
        for box in bp["boxes"]:
            box.set_facecolor(VARIANT_COLORS[v])
            box.set_alpha(0.7)
        ax.plot([], [], "s", color=VARIANT_COLORS[v], label=VARIANT_LABELS[v])
    ax.set_xticks(range(len(conditions)))
    ax.set_xticklabels(conditions)
    ax.set_ylabel("data savings vs baseline [%]" if relative else "data savings vs raw [%]")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def ssim_bler_plot(curves, path, title: str = "") -> None:
    """Mean Rec-frame SSIM against target BLER, one line per variant."""
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    for v in VARIANT_LABELS:
        pts = [(c["bler_target"], c["ssim_rec_mean"]) for c in curves if c["variant"] == v]
        if not pts:
            continue
        xs, ys = zip(*sorted(pts))
        ax.plot(xs, ys, "o-", color=VARIANT_COLORS[v], label=VARIANT_LABELS[v], ms=4)
    ax.set_xlabel("BLER")
    ax.set_ylabel("SSIM (Rec vs CAV)")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
