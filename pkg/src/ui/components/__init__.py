"""UI Components package"""

from .sidebar import render_sidebar
from .stats_section import render_stats_section
from .visualization_section import render_visualization_section
from .topology_section import render_topology_section
from .collection_section import render_collection_section
from .protocol_explanation import render_protocol_explanation

__all__ = [
    'render_sidebar',
    'render_stats_section',
    'render_visualization_section',
    'render_topology_section',
    'render_collection_section',
    'render_protocol_explanation'
]
