"""
Tests for configuration resolution.
"""

import pytest

from src.core.errors import ConfigError
from src.data.config import coerce_value, load_config_file, parse_set_option, resolve_config
from src.scenarios.registry import Scenario, ScenarioResult


@pytest.fixture
def scenario():
    desk = {'dx': 0.1, 'l_param': 1.0, 'case': 'homogeneous', 'max_iters': 100, 'record': True,
            'output_times': [1.0, 2.0], 'dt': None}
    return Scenario(name='toy', summary='toy scenario', kind='flow',
                    run=lambda cfg, ctx: ScenarioResult(results={}),
                    presets={'desk': desk, 'paper': {**desk, 'dx': 0.01}})


class TestResolveConfig:
    """Test the preset <- file <- flags <- --set merge."""

    def test_preset_defaults(self, scenario):
        assert resolve_config(scenario)['dx'] == 0.1
        config = resolve_config(scenario, 'paper')
        assert config['dx'] == 0.01
        assert config['preset'] == 'paper'
        assert config['seed'] == 0 and config['jobs'] == 1 and config['levels'] is None

    def test_merge_order(self, scenario, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text('dx: 0.05\nl_param: 2.0\ncase: heterogeneous\n')
        config = resolve_config(scenario, 'desk', str(path), flags={'dx': 0.025, 'case': None},
                                set_values=['l_param=3'])
        assert config['dx'] == 0.025
        assert config['l_param'] == 3.0
        assert isinstance(config['l_param'], float)
        assert config['case'] == 'heterogeneous'

    def test_unknown_key(self, scenario):
        with pytest.raises(ConfigError):
            resolve_config(scenario, set_values=['colour=red'])

    def test_type_mismatch(self, scenario):
        with pytest.raises(ConfigError):
            resolve_config(scenario, flags={'max_iters': 'many'})

    def test_preset_in_file(self, scenario, tmp_path):
        path = tmp_path / 'run.yaml'
        path.write_text('preset: paper\n')
        with pytest.raises(ConfigError):
            resolve_config(scenario, 'desk', str(path))

    def test_unknown_preset(self, scenario):
        with pytest.raises(ConfigError):
            resolve_config(scenario, 'huge')

    @pytest.mark.parametrize('option', ['seed=-1', 'jobs=0', 'levels=0'])
    def test_invalid_common_values(self, scenario, option):
        with pytest.raises(ConfigError):
            resolve_config(scenario, set_values=[option])

    def test_none_default_accepts_anything(self, scenario):
        assert resolve_config(scenario, set_values=['dt=0.5'])['dt'] == 0.5


class TestConfigParsing:
    """Test file loading, --set parsing and coercion."""

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(str(tmp_path / 'absent.yaml'))

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text('dx: [0.1\n')
        with pytest.raises(ConfigError):
            load_config_file(str(path))

    def test_non_mapping(self, tmp_path):
        path = tmp_path / 'list.yaml'
        path.write_text('- 1\n- 2\n')
        with pytest.raises(ConfigError):
            load_config_file(str(path))

    def test_empty_file(self, tmp_path):
        path = tmp_path / 'empty.yaml'
        path.write_text('')
        assert load_config_file(str(path)) == {}

    def test_set_values_are_yaml(self):
        assert parse_set_option('dx=0.05') == ('dx', 0.05)
        assert parse_set_option('scheme=ugrw') == ('scheme', 'ugrw')
        assert parse_set_option('times=[1, 2]') == ('times', [1, 2])
        assert parse_set_option('dt=') == ('dt', None)

    def test_set_without_equals(self):
        with pytest.raises(ConfigError):
            parse_set_option('dx')

    def test_coercion(self):
        assert coerce_value('eps', '1e-6', 0.1) == pytest.approx(1e-6)
        assert coerce_value('n', 4.0, 1) == 4
        assert coerce_value('times', (1, 2), [0.0]) == [1, 2]
        with pytest.raises(ConfigError):
            coerce_value('flag', 1, True)
        with pytest.raises(ConfigError):
            coerce_value('n', 2.5, 1)
