#!/usr/bin/env python3
# csv_plot.py - 시뮬레이션 결과 CSV 저장 및 CSV 기반 정적 그래프

import logging
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from sim_runner import PACKET_COLUMNS, RATE_COLUMNS, ROUND_COLUMNS, TRACE_COLUMNS, latency_ecdf

logger = logging.getLogger("mmwave_ee.csv_plot")

SUMMARY_COLUMNS = ["seed", "drop", "method", "layout", "n_embb", "n_urllc", "t_f_ms", "rounds",
                   "sum_rate_bits", "mean_power_w", "ee_bits_per_j", "beams_utilized", "packets_arrived",
                   "packets_delivered", "arrived_bits", "delivered_bits", "latency_median_ms",
                   "latency_max_ms", "within_1ms", "infeasible_subframes", "qos_violations",
                   "mean_dinkelbach_iters", "solve_s"]

CSV_OPTIONS = {"index": False, "lineterminator": "\n", "float_format": "%.17g", "encoding": "utf-8"}


def _frame(rows, columns):
    return pd.DataFrame(rows, columns=columns)


def write_csv(df, path):
    df.to_csv(path, **CSV_OPTIONS)
    return path


def emit_outputs(records, out_dir, plots=True):
    """trace / packets / summary (+ rounds, embb_rates) CSV 와 그래프 파일 생성

    records 는 (seed, drop) 순으로 정렬된 MetricsRecord 목록. 빈 목록이면 헤더만 쓴다.
    """
    os.makedirs(out_dir, exist_ok=True)
    tables = {
        "trace.csv": _frame([row for rec in records for row in rec.trace], TRACE_COLUMNS),
        "packets.csv": _frame([row for rec in records for row in rec.packets], PACKET_COLUMNS),
        "summary.csv": _frame([rec.summary() for rec in records], SUMMARY_COLUMNS),
        "rounds.csv": _frame([row for rec in records for row in rec.rounds], ROUND_COLUMNS),
        "embb_rates.csv": _frame([row for rec in records for row in rec.embb_rates], RATE_COLUMNS),
    }
    written = {}
    for name, df in tables.items():
        written[name] = write_csv(df, os.path.join(out_dir, name))
    logger.info(f"💾 CSV 저장 완료: {out_dir} ({len(records)}개 드롭)")

    if plots:
        written.update(ResultPlotter.plot_all(out_dir))
    return written


class ResultPlotter:
    """CSV 를 다시 읽어 그리는 정적 그래프 함수들"""

    @staticmethod
    def _save(fig, path):
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return path

    @staticmethod
    def plot_iteration_metric(trace_csv, column, ylabel, path):
        """Dinkelbach 반복별 지표 - 반복 번호별 평균과 개별 라운드 궤적"""
        df = pd.read_csv(trace_csv)
        fig, ax = plt.subplots(figsize=(8, 5))
        if len(df):
            for _, run in df.groupby(["seed", "drop", "subframe", "round"]):
                ax.plot(run["j"], run[column], color="gray", linewidth=0.5, alpha=0.3)
            mean = df.groupby("j")[column].mean()
            ax.plot(mean.index, mean.values, "b-o", linewidth=1.5, label="mean")
            ax.legend()
        ax.set_xlabel("Dinkelbach iteration j")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        return ResultPlotter._save(fig, path)

    @staticmethod
    def plot_ecdf(values, xlabel, title, path, marker=None):
        fig, ax = plt.subplots(figsize=(8, 5))
        points = latency_ecdf(values)
        if points:
            xs, ys = zip(*points)
            ax.step(xs, ys, where="post", color="b", linewidth=1.2)
        if marker is not None:
            ax.axvline(marker, color="r", linestyle="--", linewidth=0.8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("ECDF")
        ax.set_ylim(0.0, 1.02)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        return ResultPlotter._save(fig, path)

    @staticmethod
    def plot_all(out_dir):
        trace_csv = os.path.join(out_dir, "trace.csv")
        packets = pd.read_csv(os.path.join(out_dir, "packets.csv"))
        rates = pd.read_csv(os.path.join(out_dir, "embb_rates.csv"))
        files = {
            "ee_vs_iteration.png": ResultPlotter.plot_iteration_metric(
                trace_csv, "EE", "EE (bits/J)", os.path.join(out_dir, "ee_vs_iteration.png")),
            "rate_vs_iteration.png": ResultPlotter.plot_iteration_metric(
                trace_csv, "R_bits", "sum rate (bits / round)", os.path.join(out_dir, "rate_vs_iteration.png")),
            "power_vs_iteration.png": ResultPlotter.plot_iteration_metric(
                trace_csv, "PC_w", "power (W)", os.path.join(out_dir, "power_vs_iteration.png")),
            "latency_ecdf.png": ResultPlotter.plot_ecdf(
                packets["latency_ms"].to_numpy(dtype=float), "latency (ms)", "URLLC packet latency",
                os.path.join(out_dir, "latency_ecdf.png"), marker=1.0),
            "rate_ecdf.png": ResultPlotter.plot_ecdf(
                rates["rate_bits"].to_numpy(dtype=float), "rate (bits / round)", "eMBB user rate",
                os.path.join(out_dir, "rate_ecdf.png")),
        }
        logger.info(f"📈 그래프 {len(files)}개 저장")
        return files

    @staticmethod
    def plot_sweep(table, axis, column, path):
        """sweep 표: 축 값별 중앙값 (범주형 축은 순서대로)"""
        fig, ax = plt.subplots(figsize=(8, 5))
        if len(table):
            med = table.groupby("value", sort=False)[column].median()
            ax.plot(np.arange(len(med)), med.values, "b-o")
            ax.set_xticks(np.arange(len(med)))
            ax.set_xticklabels([str(v) for v in med.index])
        ax.set_xlabel(axis)
        ax.set_ylabel(f"median {column}")
        ax.grid(True, alpha=0.3)
        return ResultPlotter._save(fig, path)
