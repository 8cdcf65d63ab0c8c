"""Topology section component"""

import streamlit as st

from src.core.network_visualization import create_chain_graph, create_topology_map
from src.core.persistence import RunArtifacts


def render_topology_section(run: RunArtifacts):
    """Render the client layout and the server chain of one run"""
    st.subheader("🗺️ Topology")
    if run.topology is None:
        st.warning("topology.json is missing for this run.")
        return

    col1, col2 = st.columns([3, 2])
    with col1:
        st.plotly_chart(create_topology_map(run.topology), use_container_width=True)
    with col2:
        st.plotly_chart(create_chain_graph(run.topology), use_container_width=True)
        st.markdown("""
        <div class='info-box'>
            <h4>🔗 Client Roles</h4>
            <ul style='margin-bottom: 0;'>
                <li><b>Local clients</b> sit in a single cell</li>
                <li><b>Overlapping clients</b> sit in two neighbouring cells and train with the faster server</li>
                <li><b>Relay clients</b> (one per overlap) forward the cell model across the boundary</li>
            </ul>
        </div>
        """, unsafe_allow_html=True)
