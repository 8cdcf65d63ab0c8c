"""Plotly figures for run metrics, latency breakdowns and kappa sweeps"""

from typing import Optional

import pandas as pd
import plotly.graph_objects as go

from src.config.settings import ALGORITHM_LABELS

BACKGROUND = "rgb(20, 24, 54)"
GRID = "rgb(50, 54, 84)"
PALETTE = ["#667eea", "#ff6b6b", "#ffd93d", "#6bcb77", "#4d96ff", "#c77dff"]
TIMING_COMPONENTS = [
    ("t_cast", "Broadcast"),
    ("t_comp", "Computation"),
    ("t_upload", "Upload"),
    ("t_relay", "Relay"),
]


def _dark_layout(fig: go.Figure, title: str, x_title: str, y_title: str, height: int = 500) -> go.Figure:
    fig.update_layout(
        title=dict(text=title, font=dict(size=16, color="white")),
        paper_bgcolor=BACKGROUND,
        plot_bgcolor=BACKGROUND,
        font=dict(color="white"),
        xaxis=dict(title=x_title, showgrid=True, gridcolor=GRID, zeroline=False),
        yaxis=dict(title=y_title, showgrid=True, gridcolor=GRID, zeroline=False),
        height=height,
        hovermode="closest",
        legend=dict(bgcolor="rgba(0,0,0,0)"),
    )
    return fig


def create_accuracy_plot(curves: pd.DataFrame, per_es: bool = False) -> go.Figure:
    """Average test accuracy against simulated time, one line per algorithm.

    Args:
        curves: Rows with algorithm, simulated_time_s, accuracy (and acc_es* columns)
        per_es: Draw one dashed line per edge server instead of the average

    Returns:
        Plotly figure object
    """
    fig = go.Figure()
    for i, (algorithm, group) in enumerate(curves.groupby("algorithm", sort=False)):
        color = PALETTE[i % len(PALETTE)]
        label = ALGORITHM_LABELS.get(algorithm, algorithm)
        group = group.dropna(subset=["accuracy"])
        if per_es:
            for column in [c for c in group.columns if c.startswith("acc_es")]:
                fig.add_trace(go.Scatter(
                    x=group["simulated_time_s"], y=group[column], mode="lines",
                    line=dict(color=color, dash="dot"), name=f"{label} ES{column[len('acc_es'):]}",
                ))
        else:
            fig.add_trace(go.Scatter(
                x=group["simulated_time_s"], y=group["accuracy"], mode="lines+markers",
                line=dict(color=color, width=2), marker=dict(size=4), name=label,
                hovertemplate="t=%{x:.1f} s<br>accuracy %{y:.4f}<extra>" + label + "</extra>",
            ))
    return _dark_layout(fig, "Test Accuracy vs Simulated Time", "Simulated time (s)", "Average test accuracy")


def create_timing_plot(timings: pd.DataFrame) -> go.Figure:
    """Mean per-round latency components for each edge server as stacked bars."""
    means = timings.groupby("es")[[column for column, _ in TIMING_COMPONENTS]].mean()
    fig = go.Figure()
    for i, (column, label) in enumerate(TIMING_COMPONENTS):
        fig.add_trace(go.Bar(
            x=[f"ES{es}" for es in means.index], y=means[column],
            name=label, marker_color=PALETTE[i % len(PALETTE)],
        ))
    fig.update_layout(barmode="stack")
    return _dark_layout(fig, "Mean Per-Round Latency by Edge Server", "Edge server", "Seconds", height=420)


def create_sweep_plot(sweep: pd.DataFrame, time_budget: Optional[float] = None) -> go.Figure:
    """Time to target accuracy per cloud interval; timed-out runs are drawn at the budget."""
    grouped = sweep.groupby("kappa", sort=False)
    kappas, heights, labels, colors = [], [], [], []
    for kappa, group in grouped:
        reached = group["time_to_target_s"].dropna()
        kappas.append(f"κ={kappa}")
        if reached.empty:
            heights.append(time_budget if time_budget is not None else group["simulated_time_s"].max())
            labels.append("Timeout")
            colors.append(PALETTE[1])
        else:
            heights.append(reached.mean())
            labels.append(f"{reached.mean():.0f} s")
            colors.append(PALETTE[0])
    fig = go.Figure(go.Bar(x=kappas, y=heights, text=labels, textposition="outside", marker_color=colors))
    return _dark_layout(fig, "Time to Reach Target Accuracy", "Cloud aggregation interval", "Simulated time (s)")
