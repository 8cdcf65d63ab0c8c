"""Topology figures: the cell map and the edge-server chain graph"""

import math
from typing import Dict

import networkx as nx
import plotly.graph_objects as go

from src.core.topology import LC, NOC, ROC, chain_graph, topology_from_dict

BACKGROUND = "rgb(20, 24, 54)"
ROLE_STYLES: Dict[str, dict] = {
    LC: dict(color="#667eea", size=7, symbol="circle", name="Local client"),
    NOC: dict(color="#ffd93d", size=9, symbol="circle", name="Overlapping client"),
    ROC: dict(color="#ff6b6b", size=14, symbol="star", name="Relay client (ROC)"),
}


def _hidden_axes(fig: go.Figure, title: str, height: int) -> go.Figure:
    fig.update_layout(
        title=dict(text=title, font=dict(size=16, color="white")),
        paper_bgcolor=BACKGROUND,
        plot_bgcolor=BACKGROUND,
        font=dict(color="white"),
        xaxis=dict(showgrid=False, zeroline=False, showticklabels=False, showline=False),
        yaxis=dict(showgrid=False, zeroline=False, showticklabels=False, showline=False,
                   scaleanchor="x", scaleratio=1),
        height=height,
        margin=dict(l=20, r=20, t=60, b=20),
        hovermode="closest",
    )
    return fig


def create_topology_map(topology: dict) -> go.Figure:
    """Edge-server disks with clients coloured by role.

    Args:
        topology: Mapping as written to topology.json

    Returns:
        Plotly figure object
    """
    fig = go.Figure()
    radius = topology["cell_radius"]
    for l, (x, y) in enumerate(topology["servers"]):
        angles = [2 * math.pi * i / 96 for i in range(97)]
        fig.add_trace(go.Scatter(
            x=[x + radius * math.cos(a) for a in angles],
            y=[y + radius * math.sin(a) for a in angles],
            mode="lines", line=dict(color="rgba(150, 150, 150, 0.6)", width=1),
            fill="toself", fillcolor="rgba(102, 126, 234, 0.06)",
            hoverinfo="skip", showlegend=False,
        ))

    for role, style in ROLE_STYLES.items():
        members = [c for c in topology["clients"] if c["role"] == role]
        if not members:
            continue
        fig.add_trace(go.Scatter(
            x=[c["position"][0] for c in members],
            y=[c["position"][1] for c in members],
            mode="markers",
            marker=dict(color=style["color"], size=style["size"], symbol=style["symbol"],
                        line=dict(color="white", width=0.5)),
            text=[f"client {c['id']}" for c in members],
            hovertemplate="%{text}<extra>" + style["name"] + "</extra>",
            name=style["name"],
        ))

    fig.add_trace(go.Scatter(
        x=[p[0] for p in topology["servers"]],
        y=[p[1] for p in topology["servers"]],
        mode="markers+text",
        marker=dict(color="white", size=16, symbol="square"),
        text=[f"ES{l + 1}" for l in range(topology["num_servers"])],
        textposition="top center",
        name="Edge server",
    ))
    return _hidden_axes(fig, "Chain Topology", height=520)


def create_chain_graph(topology: dict) -> go.Figure:
    """Server adjacency graph; edges are labelled with the overlap size and ROC id."""
    graph = chain_graph(topology_from_dict(topology))
    pos = {node: data["position"] for node, data in graph.nodes(data=True)}
    if len(pos) > 1 and len({p[0] for p in pos.values()}) == 1:
        pos = nx.spring_layout(graph, seed=42)

    fig = go.Figure()
    for u, v, data in graph.edges(data=True):
        (x0, y0), (x1, y1) = pos[u], pos[v]
        fig.add_trace(go.Scatter(
            x=[x0, x1, None], y=[y0, y1, None], mode="lines",
            line=dict(width=1 + data["overlap"] / 4, color="rgba(150, 150, 150, 0.8)"),
            hoverinfo="none", showlegend=False,
        ))
        fig.add_trace(go.Scatter(
            x=[(x0 + x1) / 2], y=[(y0 + y1) / 2], mode="text",
            text=[f"{data['overlap']} OCs, ROC {data['relay']}"],
            textfont=dict(size=10, color="#ffd93d"), hoverinfo="none", showlegend=False,
        ))
    nodes = list(graph.nodes(data=True))
    fig.add_trace(go.Scatter(
        x=[pos[n][0] for n, _ in nodes], y=[pos[n][1] for n, _ in nodes],
        mode="markers+text",
        marker=dict(size=26, color="#667eea", line=dict(color="white", width=1.5)),
        text=[f"ES{n + 1}" for n, _ in nodes], textposition="middle center",
        hovertext=[f"ES{n + 1}: {d['local']} local clients" for n, d in nodes],
        hovertemplate="%{hovertext}<extra></extra>", showlegend=False,
    ))
    return _hidden_axes(fig, "Edge-Server Chain", height=300)
