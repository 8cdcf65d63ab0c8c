"""Stats section component"""

import streamlit as st

from src.config.settings import ALGORITHM_LABELS
from src.core.persistence import RunArtifacts


def _card(column, value: str, label: str, extra_class: str = ""):
    with column:
        st.markdown(f"""
        <div class="stat-card {extra_class}">
            <p class="stat-number">{value}</p>
            <p class="stat-label">{label}</p>
        </div>
        """, unsafe_allow_html=True)


def render_stats_section(run: RunArtifacts):
    """Render statistics cards for one run

    Args:
        run: Loaded run artifacts
    """
    manifest = run.manifest
    evaluated = run.metrics.dropna(subset=["accuracy"])
    final_accuracy = f"{evaluated['accuracy'].iloc[-1]:.3f}" if len(evaluated) else "n/a"
    simulated = run.metrics["simulated_time_s"].iloc[-1] if len(run.metrics) else 0.0
    stop_reason = manifest.get("stop_reason", "running")

    col1, col2, col3, col4 = st.columns(4)
    _card(col1, ALGORITHM_LABELS.get(run.algorithm, run.algorithm), "Algorithm")
    _card(col2, f"κ={manifest.get('kappa', '?')}", "Cloud Interval")
    _card(col3, f"{simulated:.0f} s", f"Simulated Time ({len(run.metrics)} rounds)")
    _card(col4, final_accuracy, f"Final Accuracy ({stop_reason})",
          extra_class="timeout" if stop_reason == "timeout" else "")
