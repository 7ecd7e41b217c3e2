"""
Plotly figures built from the CSV stores of a run directory.

Used by ``grwsim plot``; the numerical core never imports this module.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import plotly.graph_objects as go

from src.data.stores import read_summary
from src.utils.field_io import COORDINATE_COLUMNS, read_csv

logger = logging.getLogger(__name__)

COLORS = [
    '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd',
    '#8c564b', '#e377c2', '#7f7f7f', '#bcbd22', '#17becf',
]

AXIS_LABELS = {
    't': 'Time', 'z': 'Elevation z', 'x': 'x', 's': 'Iteration s', 'step': 'Time step',
    'psi': 'Pressure head psi', 'theta': 'Water content theta', 'c': 'Concentration c',
    'q_z': 'Flux q_z', 'q_x': 'Flux q_x', 'head': 'Hydraulic head h', 'correction': '||psi^{s+1} - psi^s||',
    'error': 'Error', 'level': 'Refinement level',
}

LOG_COLUMNS = ('correction', 'error')


def _layout(fig: go.Figure, title: str, x_label: str, y_label: str, log_y: bool = False,
            show_legend: bool = False) -> go.Figure:
    fig.update_layout(
        title={'text': title, 'x': 0.5, 'xanchor': 'center', 'font': {'size': 16, 'color': '#1976d2'}},
        xaxis={'title': x_label, 'showgrid': True, 'gridcolor': '#e0e0e0'},
        yaxis={'title': y_label, 'showgrid': True, 'gridcolor': '#e0e0e0',
               'type': 'log' if log_y else 'linear'},
        plot_bgcolor='white',
        paper_bgcolor='white',
        margin={'l': 60, 'r': 20, 't': 60, 'b': 60},
        showlegend=show_legend,
        legend={'x': 1.02, 'y': 1, 'xanchor': 'left', 'yanchor': 'top',
                'bgcolor': 'rgba(255,255,255,0.8)', 'bordercolor': '#dee2e6', 'borderwidth': 1},
    )
    return fig


def axis_label(column: str) -> str:
    return AXIS_LABELS.get(column, column)


def create_empty_figure(title: str, message: str = 'No data') -> go.Figure:
    fig = _layout(go.Figure(), title, '', '')
    fig.add_annotation(text=message, x=0.5, y=0.5, xref='paper', yref='paper', showarrow=False,
                       font={'size': 14, 'color': '#666666'})
    return fig


def create_series_figure(frame: pd.DataFrame, title: str, x: Optional[str] = None,
                         columns: Optional[Sequence[str]] = None) -> go.Figure:
    """
    Overlay numeric columns of a series table against its first column.

    Requested columns missing from the table are listed in an annotation.
    """
    if frame.empty:
        return create_empty_figure(title)
    x = x or frame.columns[0]
    requested = list(columns) if columns is not None else [c for c in frame.columns if c != x]
    valid = [c for c in requested if c in frame and pd.api.types.is_numeric_dtype(frame[c])]
    missing = [c for c in requested if c not in frame]
    if not valid:
        return create_empty_figure(title, f"Column(s) not found: {', '.join(missing)}" if missing else 'No data')

    fig = go.Figure()
    for i, column in enumerate(valid):
        fig.add_trace(go.Scattergl(
            x=frame[x], y=frame[column], mode='lines+markers' if len(frame) < 50 else 'lines',
            name=column, line={'width': 2, 'color': COLORS[i % len(COLORS)]},
            hovertemplate=f'<b>{column}</b><br>{x}: %{{x:.4g}}<br>value: %{{y:.4e}}<extra></extra>',
        ))
    log_y = any(key in column for column in valid for key in LOG_COLUMNS)
    y_label = axis_label(valid[0]) if len(valid) == 1 else 'Value'
    _layout(fig, title, axis_label(x), y_label, log_y=log_y, show_legend=len(valid) > 1)
    if missing:
        fig.add_annotation(text=f"Missing: {', '.join(missing)}", x=1, y=1, xref='paper', yref='paper',
                           xanchor='right', yanchor='top', showarrow=False,
                           font={'size': 10, 'color': '#ff6b35'})
    return fig


def create_field_figure(frame: pd.DataFrame, column: str, title: Optional[str] = None) -> go.Figure:
    """Heatmap of a 2D field table, or a profile over z for a 1D one."""
    title = title or column
    if column not in frame:
        return create_empty_figure(title, f"Column not found: {column}")
    if 'x' not in frame or frame['x'].nunique() <= 1:
        groups = frame.groupby('t') if 't' in frame else [(None, frame)]
        fig = go.Figure()
        for i, (t, part) in enumerate(groups):
            fig.add_trace(go.Scatter(x=part[column], y=part['z'], mode='lines',
                                     name=column if t is None else f't={t:g}',
                                     line={'width': 2, 'color': COLORS[i % len(COLORS)]}))
        return _layout(fig, title, axis_label(column), axis_label('z'), show_legend='t' in frame)
    grid = frame.pivot_table(index='z', columns='x', values=column)
    fig = go.Figure(go.Heatmap(x=grid.columns, y=grid.index, z=grid.values, colorscale='Viridis',
                               colorbar={'title': column}))
    return _layout(fig, title, axis_label('x'), axis_label('z'))


def run_figures(run_dir: Path) -> Dict[str, go.Figure]:
    """One figure per series table and per field column of a run directory."""
    run_dir = Path(run_dir)
    summary = read_summary(run_dir)
    prefix = summary['data']['scenario'] if summary['success'] else run_dir.name
    figures: Dict[str, go.Figure] = {}
    for path in sorted((run_dir / 'series').glob('*.csv')):
        loaded = read_csv(path)
        if not loaded['success']:
            logger.warning("skipping %s: %s", path, loaded['error'])
            continue
        figures[f'series_{path.stem}'] = create_series_figure(loaded['data'], f'{prefix}: {path.stem}')
    for path in sorted((run_dir / 'fields').glob('*.csv')):
        loaded = read_csv(path)
        if not loaded['success']:
            logger.warning("skipping %s: %s", path, loaded['error'])
            continue
        for column in loaded['columns']:
            if column in COORDINATE_COLUMNS:
                continue
            figures[f'field_{path.stem}_{column}'] = create_field_figure(
                loaded['data'], column, f'{prefix}: {path.stem} {column}')
    return figures


def write_figures(run_dir: Path, out_dir: Optional[Path] = None) -> List[Path]:
    """Render every figure of a run to standalone HTML; returns the written paths."""
    out_dir = Path(out_dir) if out_dir is not None else Path(run_dir) / 'plots'
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fig in run_figures(run_dir).items():
        path = out_dir / f'{name}.html'
        fig.write_html(path, include_plotlyjs='cdn')
        written.append(path)
    logger.info("wrote %d figures to %s", len(written), out_dir)
    return written
