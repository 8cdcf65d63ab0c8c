"""Visualization section component"""

import streamlit as st

from src.core.persistence import RunArtifacts
from src.core.visualization import create_accuracy_plot, create_timing_plot


def render_visualization_section(run: RunArtifacts, show_per_es: bool):
    """Render accuracy and latency views for one run

    Args:
        run: Loaded run artifacts
        show_per_es: Draw one accuracy line per edge server
    """
    st.subheader("📈 Training Progress")

    view = st.radio(
        "View",
        options=["Accuracy vs Time", "Latency Breakdown", "Raw Metrics"],
        horizontal=True,
        help="Accuracy is only recorded on evaluation rounds"
    )

    if view == "Accuracy vs Time":
        if run.metrics["accuracy"].notna().any():
            st.plotly_chart(create_accuracy_plot(run.metrics, per_es=show_per_es), use_container_width=True)
        else:
            st.warning("This run has no evaluated rounds yet.")
        cloud_rounds = int(run.metrics["cloud_round"].sum())
        st.caption(f"{cloud_rounds} of {len(run.metrics)} rounds ended with a cloud aggregation.")

    elif view == "Latency Breakdown":
        if run.timings is None or run.timings.empty:
            st.warning("timings.csv is missing for this run.")
        else:
            st.plotly_chart(create_timing_plot(run.timings), use_container_width=True)
            st.markdown("""
            <div class='info-box'>
                <h4>⏱️ How to Read the Latency Bars</h4>
                <ul style='margin-bottom: 0;'>
                    <li><b>Broadcast</b>: Edge server sends its model to the clients it covers</li>
                    <li><b>Computation</b>: Slowest selected client finishing E local epochs</li>
                    <li><b>Upload</b>: Slowest selected client uploading its model</li>
                    <li><b>Relay</b>: Relay clients forwarding the cell model to the neighbouring server</li>
                </ul>
            </div>
            """, unsafe_allow_html=True)

    else:
        st.dataframe(run.metrics, use_container_width=True, hide_index=True)
        if run.selections is not None:
            with st.expander("Client → edge-server selections", expanded=False):
                st.dataframe(run.selections, use_container_width=True, hide_index=True)
