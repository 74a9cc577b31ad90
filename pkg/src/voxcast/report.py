"""Benchmark report rendering: delimited data plus figures.

Writes bandwidth.csv (one row per one-second window), summary.json and
two PNG figures into the report directory.  Figures use the Agg backend
so reports render on headless machines.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

STYLE = {
    "figure.figsize": (8.0, 4.5),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
}


def write_benchmark_report(report: dict, out_dir) -> list[Path]:
    """Render one benchmark run; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    windows = report.get("windows", [])
    csv_path = out / "bandwidth.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start_s", "bytes", "mbit_per_s"])
        for i, nbytes in enumerate(windows):
            writer.writerow([i, nbytes, f"{8.0 * nbytes / 1e6:.6f}"])
    written.append(csv_path)

    summary_path = out / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump({k: v for k, v in report.items() if k != "windows"}, fh, indent=2)
        fh.write("\n")
    written.append(summary_path)

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ts = range(len(windows))
        mbit = [8.0 * b / 1e6 for b in windows]
        ax.plot(ts, mbit, drawstyle="steps-post", lw=1.2, color="#2c6fb0")
        ax.axhline(report["mean_mbit_s"], color="#444444", ls="--", lw=1.0, label="mean")
        ax.axhline(report["peak_mbit_s"], color="#b03a2e", ls=":", lw=1.0, label="peak")
        ax.set_xlabel("session time [s]")
        ax.set_ylabel("bandwidth [MBit/s]")
        ax.set_title("Streaming bandwidth per one-second window")
        ax.legend(loc="upper right")
        fig.tight_layout()
        band_path = out / "bandwidth.png"
        fig.savefig(band_path)
        plt.close(fig)
        written.append(band_path)

        fig, ax = plt.subplots()
        cum = []
        total = 0
        for b in windows:
            total += b
            cum.append(total / 1e6)
        ax.plot(ts, cum, lw=1.4, color="#1e8449")
        ax.set_xlabel("session time [s]")
        ax.set_ylabel("received [MB]")
        ax.set_title(
            f"Cumulative transfer: {report['blocks_received']} blocks, "
            f"{report['bytes_received'] / 1e6:.1f} MB"
        )
        fig.tight_layout()
        cum_path = out / "cumulative.png"
        fig.savefig(cum_path)
        plt.close(fig)
        written.append(cum_path)

    return written


def write_comparison_report(reports: dict[str, dict], out_dir) -> list[Path]:
    """Compare runs (e.g. compressed vs raw, or scene sizes) side by side."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = out / "comparison.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["run", "mean_mbit_s", "peak_mbit_s", "bytes", "blocks", "bytes_per_block"]
        )
        for name, rep in reports.items():
            blocks = max(rep["blocks_received"], 1)
            writer.writerow(
                [
                    name,
                    f"{rep['mean_mbit_s']:.4f}",
                    f"{rep['peak_mbit_s']:.4f}",
                    rep["bytes_received"],
                    rep["blocks_received"],
                    f"{rep['bytes_received'] / blocks:.1f}",
                ]
            )
    written.append(csv_path)

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        names = list(reports)
        means = [reports[n]["mean_mbit_s"] for n in names]
        peaks = [reports[n]["peak_mbit_s"] for n in names]
        x = range(len(names))
        ax.bar([i - 0.18 for i in x], means, width=0.36, label="mean", color="#2c6fb0")
        ax.bar([i + 0.18 for i in x], peaks, width=0.36, label="peak", color="#b03a2e")
        ax.set_xticks(list(x), names, rotation=15)
        ax.set_ylabel("bandwidth [MBit/s]")
        ax.set_title("Benchmark comparison")
        ax.legend()
        fig.tight_layout()
        cmp_path = out / "comparison.png"
        fig.savefig(cmp_path)
        plt.close(fig)
        written.append(cmp_path)

    return written
