"""
Tests for the run-directory figures.
"""

import pandas as pd
import plotly.graph_objects as go
import pytest

from src.components.figures import (
    axis_label, create_empty_figure, create_field_figure, create_series_figure, run_figures, write_figures,
)


class TestSeriesFigures:
    """Test series figure creation."""

    def test_create_empty_figure(self):
        """Test empty figure creation."""
        fig = create_empty_figure("Test Plot")

        assert isinstance(fig, go.Figure)
        assert fig.layout.title.text == "Test Plot"
        assert fig.layout.title.x == 0.5  # Centered
        assert len(fig.layout.annotations) == 1

    def test_create_series_figure(self):
        """Test one trace per numeric column."""
        frame = pd.DataFrame({'t': [0.0, 1.0, 2.0], 'psi': [1.0, 0.5, 0.2], 'theta': [0.3, 0.2, 0.1]})
        fig = create_series_figure(frame, 'profile')

        assert len(fig.data) == 2
        assert fig.layout.xaxis.title.text == 'Time'
        assert fig.layout.showlegend is True

    def test_log_axis_for_corrections(self):
        frame = pd.DataFrame({'s': [2, 3, 4], 'correction': [1e-2, 1e-4, 1e-6]})
        fig = create_series_figure(frame, 'history')

        assert fig.layout.yaxis.type == 'log'
        assert fig.layout.yaxis.title.text == axis_label('correction')

    def test_missing_columns(self):
        """Test that missing columns are reported in an annotation."""
        frame = pd.DataFrame({'t': [0.0, 1.0], 'psi': [1.0, 0.5]})
        fig = create_series_figure(frame, 'partial', columns=['psi', 'c'])
        assert len(fig.data) == 1
        assert any('c' in a.text for a in fig.layout.annotations)

        empty = create_series_figure(frame, 'none', columns=['c'])
        assert len(empty.data) == 0
        assert 'Column(s) not found' in empty.layout.annotations[0].text

    def test_empty_frame(self):
        fig = create_series_figure(pd.DataFrame(), 'empty')
        assert len(fig.data) == 0


class TestFieldFigures:
    """Test field figure creation."""

    def test_profile(self):
        frame = pd.DataFrame({'z': [0.0, 0.5, 1.0], 'psi': [1.0, 0.5, 0.0]})
        fig = create_field_figure(frame, 'psi')
        assert isinstance(fig.data[0], go.Scatter)

    def test_profiles_over_time(self):
        frame = pd.DataFrame({'t': [1.0, 1.0, 2.0, 2.0], 'z': [0.0, 1.0, 0.0, 1.0], 'theta': [0.1, 0.2, 0.3, 0.4]})
        fig = create_field_figure(frame, 'theta')
        assert len(fig.data) == 2
        assert fig.data[1].name == 't=2'

    def test_heatmap(self):
        frame = pd.DataFrame({'x': [0.0, 0.0, 1.0, 1.0], 'z': [0.0, 1.0, 0.0, 1.0], 'c': [1.0, 2.0, 3.0, 4.0]})
        fig = create_field_figure(frame, 'c')
        assert isinstance(fig.data[0], go.Heatmap)

    def test_unknown_column(self):
        fig = create_field_figure(pd.DataFrame({'z': [0.0]}), 'psi')
        assert len(fig.data) == 0


class TestRunFigures:
    """Test figures of a whole run directory."""

    @pytest.fixture
    def run_dir(self, tmp_path):
        (tmp_path / 'series').mkdir()
        (tmp_path / 'fields').mkdir()
        pd.DataFrame({'s': [2, 3], 'correction': [1e-3, 1e-5]}).to_csv(tmp_path / 'series' / 'history.csv', index=False)
        pd.DataFrame({'iz': [0, 1], 'z': [0.0, 1.0], 'psi': [1.0, 0.0], 'theta': [0.4, 0.3]}).to_csv(
            tmp_path / 'fields' / 'final.csv', index=False)
        return tmp_path

    def test_run_figures(self, run_dir):
        figures = run_figures(run_dir)
        assert set(figures) == {'series_history', 'field_final_psi', 'field_final_theta'}
        # no summary: the directory name is the title prefix
        assert figures['series_history'].layout.title.text.startswith(run_dir.name)

    def test_write_figures(self, run_dir, tmp_path_factory):
        out = tmp_path_factory.mktemp('plots')
        written = write_figures(run_dir, out)
        assert len(written) == 3
        assert all(path.suffix == '.html' and path.exists() for path in written)
