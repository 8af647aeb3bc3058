"""
Chain Visualization
Plotly figures of scenes (boxes, centers, crop regions) and refinement traces.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import plotly.graph_objects as go
from plotly.subplots import make_subplots

from .geometry import BBox, ImageRecord
from .partition import ClusterSlice
from .refine import RefineTrace

logger = logging.getLogger(__name__)


def get_layer_color(layer):
    """Return RGB color for a figure layer"""
    colors = {
        'ground_truth': 'rgb(46, 139, 87)',   # Green
        'predictions': 'rgb(220, 20, 60)',    # Crimson
        'crops': 'rgb(70, 130, 180)',         # Steel Blue
    }
    return colors.get(layer, 'rgb(150, 150, 150)')


def create_box_outline(boxes: Sequence[BBox]):
    """
    Closed outlines of boxes as one polyline.

    Boxes are separated by None so plotly draws them as disjoint loops.
    """
    xs: List[Optional[float]] = []
    ys: List[Optional[float]] = []
    for b in boxes:
        xs += [b.x1, b.x2, b.x2, b.x1, b.x1, None]
        ys += [b.y1, b.y1, b.y2, b.y2, b.y1, None]
    return xs, ys


def scene_figure(record: ImageRecord, slices: Optional[Sequence[ClusterSlice]] = None) -> go.Figure:
    """
    Draw one record: ground-truth boxes, prediction boxes with centers
    colored by score, and optional crop regions from two-pass counting.
    Image coordinates keep y growing downwards.
    """
    traces = []

    if record.ground_truth:
        xs, ys = create_box_outline(record.ground_truth)
        traces.append(go.Scatter(
            x=xs, y=ys, mode='lines', name=f'ground truth ({len(record.ground_truth)})',
            line=dict(color=get_layer_color('ground_truth'), width=2), hoverinfo='skip'))

    if record.predictions:
        xs, ys = create_box_outline([d.box for d in record.predictions])
        traces.append(go.Scatter(
            x=xs, y=ys, mode='lines', name='prediction boxes',
            line=dict(color=get_layer_color('predictions'), width=1, dash='dot'), hoverinfo='skip'))
        centers = record.pred_centers()
        scores = [d.score for d in record.predictions]
        traces.append(go.Scatter(
            x=[c.x for c in centers], y=[c.y for c in centers], mode='markers',
            name=f'predictions ({record.n_pred})',
            marker=dict(size=7, color=scores, colorscale='Reds', cmin=0.0, cmax=1.0,
                        colorbar=dict(title='score'), line=dict(color='black', width=0.5)),
            hovertemplate='x: %{x:.1f}<br>y: %{y:.1f}<br>score: %{marker.color:.3f}<extra></extra>'))

    for k, s in enumerate(slices or []):
        r = s.crop_region
        traces.append(go.Scatter(
            x=[r.x1, r.x2, r.x2, r.x1, r.x1], y=[r.y1, r.y1, r.y2, r.y2, r.y1],
            mode='lines', name=f'crop {k}', fill='toself', opacity=0.25,
            line=dict(color=get_layer_color('crops'), width=1)))

    fig = go.Figure(data=traces)
    fig.update_layout(
        title=dict(
            text=f'<b>{record.id}</b><br><sub>{record.width:g} x {record.height:g} px | '
                 f'predicted {record.n_pred} | ground truth {record.n_gt}</sub>',
            x=0.5, xanchor='center'),
        xaxis=dict(title='x (px)', range=[0, record.width], constrain='domain'),
        yaxis=dict(title='y (px)', range=[record.height, 0], scaleanchor='x', scaleratio=1),
        legend=dict(x=0.02, y=0.98, bgcolor='rgba(255, 255, 255, 0.8)', bordercolor='black', borderwidth=1),
        paper_bgcolor='rgb(245, 245, 245)',
    )
    return fig


def trace_figure(trace: RefineTrace, baseline: Optional[RefineTrace] = None) -> go.Figure:
    """
    Loss terms and mean center error per refinement step. A baseline trace
    (for example the lambda_neigh = 0 run) is drawn dashed for comparison.
    """
    fig = make_subplots(rows=2, cols=1, shared_xaxes=True,
                        subplot_titles=('loss terms', 'mean center error (px)'))
    runs = [('', trace, 'solid')]
    if baseline is not None:
        runs.append((' (baseline)', baseline, 'dash'))

    for suffix, run, dash in runs:
        frame = run.to_dataframe()
        for column in ('loc', 'neigh', 'cls'):
            fig.add_trace(go.Scatter(x=frame['step'], y=frame[column], mode='lines',
                                     name=f'{column}{suffix}', line=dict(dash=dash)), row=1, col=1)
        fig.add_trace(go.Scatter(x=frame['step'], y=frame['center_error'], mode='lines',
                                 name=f'center error{suffix}', line=dict(dash=dash, color='black')),
                      row=2, col=1)

    fig.update_yaxes(type='log', row=1, col=1)
    fig.update_xaxes(title_text='step', row=2, col=1)
    fig.update_layout(title=dict(text='<b>Chain refinement</b>', x=0.5, xanchor='center'),
                      paper_bgcolor='rgb(245, 245, 245)')
    return fig


def write_figure(fig: go.Figure, path: Union[str, Path]) -> Path:
    """Write a figure as a standalone HTML file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path), include_plotlyjs='cdn')
    logger.info(f"[SUCCESS] Wrote figure to {path}")
    return path
