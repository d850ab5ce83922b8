"""SVG line chart of the bound columns against n."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import CSV_BOUNDS  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "svg.hashsalt": "fgen",
    "svg.fonttype": "none",
}

LABELS = {
    "gen_err": "Generalization error",
    "cmi_oracle": "CMI (oracle)",
    "cmi_oracle_pooled": "CMI (oracle, pooled)",
    "sh_oracle": "CSHI (oracle)",
    "sh_var": "CSHI (var)",
    "sh_worst": "CSHI (worst)",
    "js_oracle": "CJSI (oracle)",
    "baseline_ldcmi": "ld-CMI",
}


def plot_bounds(rows, path, title=None, width=6.0):
    ns = [r["n"] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, width * 0.618))
        err = [r["gen_err"] for r in rows]
        se = [r["gen_err_stderr"] for r in rows]
        ax.errorbar(ns, err, yerr=se, color="black", lw=2, marker="o", ms=4, label=LABELS["gen_err"])
        for col in CSV_BOUNDS:
            ax.plot(ns, [r[col] for r in rows], marker=".", label=LABELS[col])
        ax.set_xscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("value")
        if title:
            ax.set_title(title)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
