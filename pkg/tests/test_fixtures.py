"""
Tests for the reference tables under fixtures/.
"""

import pytest

from src.data.fixtures import fixture_path, fixture_rows, list_fixtures, load_fixture, read_citation

EXPECTED_COLUMNS = {
    'scenario1d_errors': ['case', 'stage', 'eps_psi', 'eps_theta', 'eps_q'],
    'warrick_errors': ['t', 'theta', 'relative_error'],
    'sander_profile': ['z', 'theta_analytic', 'theta_grw'],
    'mms_flow_2d': ['method', 'l_param', 'level', 'error'],
    'mms_coupled_2d': ['method', 'field', 'velocity_mode', 'level', 'error'],
    'mms_coupled_1d': ['method', 'field', 'velocity_mode', 'level', 'error'],
    'mms_degenerate_1d': ['method', 'field', 'velocity_mode', 'level', 'error'],
    'trench_flow_tpfa': ['soil', 'eps_psi', 'eps_theta', 'eps_qx', 'eps_qz'],
    'trench_coupled_tpfa': ['soil', 'eps_psi', 'eps_c', 'eps_theta', 'eps_qx', 'eps_qz'],
    'numdiff': ['method', 'dx', 'steps', 'peclet', 'eps_dx', 'eps_dz'],
    'recharge_mc': ['method', 'statistic', 'value', 'std'],
}


class TestFixtureFiles:
    """Every shipped table loads with its citation header."""

    def test_all_fixtures_are_listed(self):
        assert set(EXPECTED_COLUMNS) <= set(list_fixtures())

    @pytest.mark.parametrize('name', sorted(EXPECTED_COLUMNS))
    def test_columns_and_citation(self, name):
        loaded = load_fixture(name)
        assert loaded['success'], loaded['error']
        assert list(loaded['data'].columns) == EXPECTED_COLUMNS[name]
        assert len(loaded['data']) > 0
        assert loaded['citation']
        assert loaded['citation'] == read_citation(fixture_path(name))

    def test_missing_fixture_is_reported(self, tmp_path):
        loaded = load_fixture('absent', root=tmp_path)
        assert not loaded['success']
        assert fixture_rows('absent', root=tmp_path) is None


class TestFixtureContents:
    """Spot checks of the reference values."""

    def test_coupled_1d_levels(self):
        rows = fixture_rows('mms_coupled_1d', method='GRW', field='c', velocity_mode='analytical')
        assert rows['level'].tolist() == [1, 2, 3, 4]
        assert rows['error'].iloc[0] == pytest.approx(2.10e-2)

    def test_degenerate_modes(self):
        rows = fixture_rows('mms_degenerate_1d', method='GRW', field='psi')
        assert set(rows['velocity_mode']) == {'analytical', 'approximate', 'extend'}

    def test_flow_2d_tpfa_rows_have_no_l(self):
        rows = fixture_rows('mms_flow_2d', method='TPFA')
        assert rows['l_param'].isna().all()

    def test_errors_decrease_with_refinement(self):
        rows = fixture_rows('mms_coupled_2d', method='GRW', field='psi', velocity_mode='analytical')
        errors = rows.sort_values('level')['error'].tolist()
        assert errors == sorted(errors, reverse=True)

    def test_filter_on_temp_root(self, tmp_path):
        (tmp_path / 'tiny.csv').write_text('# source line\nname,value\na,1\nb,2\n')
        rows = fixture_rows('tiny', root=tmp_path, name='b')
        assert rows['value'].tolist() == [2]
        assert load_fixture('tiny.csv', root=tmp_path)['citation'] == ['source line']
