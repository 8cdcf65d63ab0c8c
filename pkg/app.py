"""FedOC Run Inspector - Main Application

A Streamlit dashboard over the artifacts written by ``fedoc-sim``: accuracy against
simulated time, per-server latency, the client topology, and kappa sweeps.
"""

import streamlit as st
from src.core.session_state import initialize_session_state
from src.ui import CUSTOM_CSS
from src.ui.components import (
    render_sidebar,
    render_stats_section,
    render_visualization_section,
    render_topology_section,
    render_collection_section,
    render_protocol_explanation
)


# Page config
st.set_page_config(
    page_title="FedOC Run Inspector",
    page_icon="🛰️",
    layout="wide",
    initial_sidebar_state="expanded"
)

# Apply custom CSS
st.markdown(CUSTOM_CSS, unsafe_allow_html=True)

# Initialize session state
initialize_session_state()


def main():
    """Main application entry point"""
    st.markdown(
        '<h1 class="main-header">🛰️ FedOC Run Inspector</h1>',
        unsafe_allow_html=True
    )
    st.markdown(
        '<p class="sub-header">Multi-server federated learning with overlapping clients: Train → Relay → Aggregate</p>',
        unsafe_allow_html=True
    )

    render_protocol_explanation()

    run, collection, show_per_es = render_sidebar()

    st.divider()

    if run is None and collection is None:
        st.info("Point the sidebar at an output directory containing simulator runs.")
        return

    if run is not None:
        st.header(f"🔎 Run: {run.run_dir.name}")
        render_stats_section(run)
        st.divider()
        render_visualization_section(run, show_per_es)
        st.divider()
        render_topology_section(run)

    if collection is not None:
        st.divider()
        st.header("⚖️ Sweeps & Comparisons")
        render_collection_section(collection)


if __name__ == "__main__":
    main()
