"""Sidebar component"""

from pathlib import Path

import streamlit as st

from src.core.persistence import list_collections, list_run_dirs, load_run
from src.core.session_state import reset_selection_state


def _relative(path: Path, root: Path) -> str:
    try:
        return str(path.relative_to(root)) or "."
    except ValueError:
        return str(path)


def render_sidebar():
    """Render the sidebar with run and collection pickers

    Returns:
        Tuple of (run_artifacts or None, collection directory or None, show_per_es)
    """
    with st.sidebar:
        st.header("⚙️ Configuration")

        output_root = st.text_input(
            "Output directory",
            st.session_state.output_root,
            help="Directory the simulator writes runs into (FEDOC_OUTPUT_DIR)"
        )
        if output_root != st.session_state.output_root:
            st.session_state.output_root = output_root
            reset_selection_state()
            st.rerun()

        root = Path(output_root)
        runs = list_run_dirs(root)
        collections = list_collections(root)

        st.subheader("📁 Single Run")
        if runs:
            labels = [_relative(r, root) for r in runs]
            choice = st.selectbox("Run", labels, help="Any directory holding a manifest.json")
            run_dir = runs[labels.index(choice)]
            if st.session_state.selected_run != str(run_dir):
                st.session_state.selected_run = str(run_dir)
                st.session_state.run_artifacts = load_run(run_dir)
        else:
            st.info("No runs found. Start one with `fedoc-sim run`.")
            st.session_state.run_artifacts = None

        st.subheader("📊 Sweeps & Comparisons")
        collection = None
        if collections:
            labels = [_relative(c, root) for c in collections]
            choice = st.selectbox("Collection", labels)
            collection = collections[labels.index(choice)]
            st.session_state.selected_collection = str(collection)

        st.divider()
        show_per_es = st.checkbox("Per-edge-server accuracy", value=False)

        if st.button("Reload", use_container_width=True):
            reset_selection_state()
            st.rerun()

    return st.session_state.run_artifacts, collection, show_per_es
