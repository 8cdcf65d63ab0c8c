"""Session state initialization"""

import streamlit as st

from src.config.settings import OUTPUT_DIR


def initialize_session_state():
    """Initialize all session state variables"""
    if 'output_root' not in st.session_state:
        st.session_state.output_root = str(OUTPUT_DIR)
    if 'selected_run' not in st.session_state:
        st.session_state.selected_run = None
    if 'selected_collection' not in st.session_state:
        st.session_state.selected_collection = None
    if 'run_artifacts' not in st.session_state:
        st.session_state.run_artifacts = None


def reset_selection_state():
    """Forget the loaded run when the output root changes"""
    st.session_state.selected_run = None
    st.session_state.selected_collection = None
    st.session_state.run_artifacts = None
