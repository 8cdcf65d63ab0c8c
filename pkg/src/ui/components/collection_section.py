"""Sweep and comparison component"""

from pathlib import Path

import pandas as pd
import streamlit as st

from src.core.persistence import COMPARISON_FILE, SUMMARY_FILE, SWEEP_FILE
from src.core.visualization import create_accuracy_plot, create_sweep_plot


def render_collection_section(collection: Path):
    """Render a kappa sweep or an algorithm comparison

    Args:
        collection: Directory holding sweep.csv or comparison.csv
    """
    st.subheader(f"📊 {collection.name}")

    sweep_path = collection / SWEEP_FILE
    if sweep_path.exists():
        sweep = pd.read_csv(sweep_path, dtype={"kappa": str})
        st.plotly_chart(create_sweep_plot(sweep), use_container_width=True)
        st.dataframe(sweep.drop(columns=["run_dir"]), use_container_width=True, hide_index=True)
        return

    comparison = pd.read_csv(collection / COMPARISON_FILE)
    repeats = sorted(comparison["repeat"].unique())
    repeat = st.selectbox("Repeat", repeats) if len(repeats) > 1 else repeats[0]
    st.plotly_chart(
        create_accuracy_plot(comparison[comparison["repeat"] == repeat]),
        use_container_width=True,
    )
    summary_path = collection / SUMMARY_FILE
    if summary_path.exists():
        summary = pd.read_csv(summary_path)
        st.dataframe(summary.drop(columns=["run_dir"]), use_container_width=True, hide_index=True)
