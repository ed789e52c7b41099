"""Report emission: machine-parseable key=value files, markdown tables, plots.

Outputs are byte-stable for fixed inputs: keys are sorted, floats use fixed
formatting, and no timestamps enter the files. Significance against the
real-only baseline is marked with an asterisk at p < 0.05.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ..errors import ContractError

P_THRESHOLD = 0.05

# Published full-scale reference optima, kept in reports as documentation
# rows; desk-scale runs are not expected to reproduce them.
SEG_REFERENCE_ROWS = [
    {"name": "full-scale reference (v1-style)", "tau": 0.05, "timestep": 300, "grid": "16x16", "combined": 0.844},
    {"name": "full-scale reference (v2-style)", "tau": 0.05, "timestep": 300, "grid": "16x16", "combined": 0.836},
    {"name": "full-scale reference (text-conditioned baseline)", "tau": 0.5, "timestep": 300, "grid": "32x32", "combined": 0.803},
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _star(p) -> str:
    return " *" if p is not None and p < P_THRESHOLD else ""


def emit_report(
    out_dir: str | Path,
    score_rows: list | None = None,
    fid_curve: list[dict] | None = None,
    seg_table: list[dict] | None = None,
    best_seg: dict | None = None,
) -> dict[str, str]:
    """Write every available artifact; returns {artifact name: path}."""
    if not (score_rows or fid_curve or seg_table):
        raise ContractError("nothing to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, str] = {}

    lines = []
    if score_rows:
        for row in sorted(score_rows, key=lambda r: r.plan.tag):
            d = row.to_dict()
            lines.append(f"auc.{d['tag']}.mean={_fmt(d['mean'])}")
            lines.append(f"auc.{d['tag']}.sd={_fmt(d['sd'])}")
            if d["p_vs_baseline"] is not None:
                lines.append(f"auc.{d['tag']}.p={_fmt(d['p_vs_baseline'])}")
                lines.append(
                    f"auc.{d['tag']}.significant={'yes' if d['p_vs_baseline'] < P_THRESHOLD else 'no'}"
                )
    if fid_curve:
        for entry in fid_curve:
            step = Path(entry["checkpoint"]).stem
            lines.append(f"fid.{step}={_fmt(entry['fid'])}")
        best = min(fid_curve, key=lambda e: e["fid"])
        lines.append(f"fid.best_checkpoint={Path(best['checkpoint']).stem}")
    if seg_table:
        for row in seg_table:
            key = f"seg.tau{row['tau']}.t{row['timestep']}.a{row['anchor_side']}"
            lines.append(f"{key}.mean_dice={_fmt(row['mean_dice'])}")
            lines.append(f"{key}.combined={_fmt(row['combined'])}")
        if best_seg:
            lines.append(
                "seg.best="
                f"tau{best_seg['tau']}.t{best_seg['timestep']}.a{best_seg['anchor_side']}"
            )
    report_path = out_dir / "report.txt"
    report_path.write_text("\n".join(lines) + "\n")
    written["report"] = str(report_path)

    if score_rows:
        md = ["| configuration | N | AUC (mean ± SD) | p vs real-only |", "|---|---|---|---|"]
        for row in sorted(score_rows, key=lambda r: r.plan.tag):
            d = row.to_dict()
            p_txt = _fmt(d["p_vs_baseline"]) if d["p_vs_baseline"] is not None else "-"
            md.append(
                f"| {d['tag']} | {d['n']} | {_fmt(d['mean'])} ± {_fmt(d['sd'])}"
                f"{_star(d['p_vs_baseline'])} | {p_txt} |"
            )
        path = out_dir / "scores.md"
        path.write_text("\n".join(md) + "\n")
        written["scores"] = str(path)

    if fid_curve:
        steps = list(range(len(fid_curve)))
        values = [entry["fid"] for entry in fid_curve]
        labels = [Path(entry["checkpoint"]).stem for entry in fid_curve]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(steps, values, marker="o")
        ax.set_xticks(steps, labels, rotation=45, ha="right")
        ax.set_xlabel("checkpoint")
        ax.set_ylabel("Fréchet distance (lower is better)")
        ax.set_title("Checkpoint selection curve")
        fig.tight_layout()
        path = out_dir / "fid_curve.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written["fid_curve"] = str(path)

    if seg_table:
        md = [
            "| configuration | threshold | timestep | grid | mean Dice | combined |",
            "|---|---|---|---|---|---|",
        ]
        for row in seg_table:
            tag = "best (grid search)" if best_seg is row else "grid point"
            if best_seg and all(row.get(k) == best_seg.get(k) for k in ("tau", "timestep", "anchor_side")):
                tag = "best (grid search)"
            md.append(
                f"| {tag} | {row['tau']} | {row['timestep']} | "
                f"{row['anchor_side']}x{row['anchor_side']} | {_fmt(row['mean_dice'])} | {_fmt(row['combined'])} |"
            )
        for ref in SEG_REFERENCE_ROWS:
            md.append(
                f"| {ref['name']} | {ref['tau']} | {ref['timestep']} | {ref['grid']} | - | {_fmt(ref['combined'])} |"
            )
        path = out_dir / "seg_table.md"
        path.write_text("\n".join(md) + "\n")
        written["seg_table"] = str(path)

    return written
