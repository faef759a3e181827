"""Figure rendering for the experiment presets.

Kept separate from the CSV path: figures are a convenience view of the same
rows, written as PNG next to the delimited output.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render(preset: str, header: list[str], rows: list[list], path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if preset == "growth":
        m = [r[0] for r in rows]
        mean = [r[3] for r in rows]
        hw = [r[4] for r in rows]
        ax.errorbar(m, mean, yerr=hw, marker="o", label="balanced-round makespan (MC)")
        scale = mean[-1] / math.log(math.log(m[-1]))
        ax.plot(m, [scale * math.log(math.log(v)) for v in m], "--", label="c * log log m")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("machines m")
        ax.set_ylabel("expected makespan")
        ax.legend()
    elif preset == "squaring":
        lam = [r[0] for r in rows]
        emp = [r[1] for r in rows]
        lo = [r[3] for r in rows]
        analytic = [r[4] for r in rows]
        hi = [r[5] for r in rows]
        ax.plot(lam, emp, "o", label="empirical next-round mean")
        ax.plot(lam, analytic, "-", label="lam + exp(-lam) - 1")
        ax.fill_between(lam, lo, hi, alpha=0.2, label="[lam^2/e, lam^2/2]")
        ax.set_xlabel("remaining fraction lam")
        ax.set_ylabel("next-round mean")
        ax.legend()
    elif preset == "policy-compare":
        policies = sorted({r[2] for r in rows})
        ms = sorted({r[0] for r in rows})
        for pol in policies:
            sub = {r[0]: (r[4], r[5]) for r in rows if r[2] == pol}
            ax.errorbar(ms, [sub[m][0] for m in ms], yerr=[sub[m][1] for m in ms],
                        marker="o", label=pol)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("machines m")
        ax.set_ylabel("mean makespan")
        ax.legend()
    elif preset == "xi-trajectory":
        k = [r[0] for r in rows]
        xi = [r[1] for r in rows]
        a = [r[2] for r in rows]
        ax.plot(k, xi, "o-", label="mean remaining load fraction")
        ax.plot(k, a, "s-", label="mean always-available fraction")
        gk = [(r[0], r[3]) for r in rows if r[3] != ""]
        bk = [(r[0], r[4]) for r in rows if r[4] != ""]
        if gk:
            ax.plot([x for x, _ in gk], [y for _, y in gk], "--", label="envelope gamma_k")
        if bk:
            ax.plot([x for x, _ in bk], [y for _, y in bk], ":", label="envelope beta_k")
        ax.set_xlabel("checkpoint k")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
    else:
        raise ValueError(f"no figure defined for preset {preset!r}")
    ax.set_title(preset)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
