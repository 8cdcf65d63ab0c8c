"""Protocol explanation component"""

import streamlit as st


def render_protocol_explanation():
    """Render a short walkthrough of one FedOC round"""

    with st.expander("📚 How FedOC Works", expanded=False):
        col1, col2 = st.columns([1, 1])

        with col1:
            st.markdown("""
            ### The Setting

            Edge servers are laid out in a **chain**; each neighbouring pair of cells
            overlaps. Clients in an overlap can reach both servers.

            - **Local clients** train with their own server
            - **Normal overlapping clients** train with whichever server's model arrives first
            - **Relay clients** are one per overlap and carry models between servers

            Without a cloud, each edge server only ever sees its own cell. Relays let
            knowledge travel one hop per round, so after L−1 rounds every server has
            been influenced by every cell.
            """)

        with col2:
            st.markdown("""
            ### One Round

            **📡 1. Broadcast**: every server sends its model to its clients

            **🧠 2. Local training**: E epochs of minibatch SGD on each selected client

            **⬆️ 3. Upload**: local and overlapping clients upload to their server;
            relay clients keep their models

            **🔁 4. Relay**: each relay client merges its own model with the cell
            model of one side and forwards it to the other side

            **☁️ 5. Cloud** (every κ rounds): all models are averaged by data size;
            relays are skipped in cloud rounds

            ---

            💡 **Small κ means frequent, slow cloud rounds; κ = ∞ never uses the cloud.**
            """)
