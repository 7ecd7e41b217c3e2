"""
Tests for field and series I/O.
"""

import numpy as np
import pandas as pd
import pytest

from src.core.lattice import Grid
from src.utils.field_io import (
    FIELD_MAGIC, HEADER_DTYPE, field_frame, frame_to_field, history_frame, profile_frame, read_csv,
    read_field_binary, series_frame, write_csv, write_field_binary, write_field_dumps,
)


class TestFrames:
    """Test conversion of fields to tables."""

    def test_field_frame_1d(self):
        grid = Grid.line(0.0, 1.0, 0.5)
        frame = field_frame(grid, {'psi': np.array([1.0, 0.5, 0.0]), 'theta': 0.3})
        assert list(frame.columns) == ['iz', 'z', 'psi', 'theta']
        assert frame['iz'].tolist() == [0, 1, 2]
        assert frame['theta'].tolist() == [0.3] * 3
        assert frame.attrs['grid'] == grid

    def test_field_frame_2d_round_trip(self):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 2.0), 0.5)
        values = np.arange(grid.size, dtype=float).reshape(grid.shape)
        frame = field_frame(grid, {'c': values})
        assert list(frame.columns) == ['ix', 'iz', 'x', 'z', 'c']
        row = frame.iloc[7]
        assert (row['ix'], row['iz']) == (1, 2)
        assert (row['x'], row['z']) == pytest.approx((0.5, 1.0))
        assert np.array_equal(frame_to_field(frame, grid, 'c'), values)
        assert frame_to_field(frame, grid, 'psi') is None

    def test_profile_frame(self):
        grid = Grid.line(0.0, 1.0, 0.5)
        snapshots = {2.0: {'psi': np.ones(3)}, 1.0: {'psi': np.zeros(3), 'theta': np.ones(3)}}
        frame = profile_frame(grid, snapshots, keys=('psi',))
        assert frame['t'].tolist() == [1.0] * 3 + [2.0] * 3
        assert frame.attrs['grid'] == grid
        assert profile_frame(grid, {}).empty

    def test_series_frame_pads(self):
        frame = series_frame({'t': [0.0, 1.0, 2.0], 'dt': [1.0, 1.0]})
        assert len(frame) == 3
        assert np.isnan(frame['dt'].iloc[-1])

    def test_history_frame(self):
        frame = history_frame([[1e-2, 1e-3], [1e-2]])
        assert frame['step'].tolist() == [1, 1, 2]
        assert frame['s'].tolist() == [2, 3, 2]


class TestFiles:
    """Test CSV and binary files."""

    def test_csv(self, tmp_path):
        frame = pd.DataFrame({'z': [0.0, 0.5], 'psi': [1.0 / 3.0, 2.0]})
        path = write_csv(frame, tmp_path / 'nested' / 'profile.csv')
        loaded = read_csv(path)
        assert loaded['success']
        assert loaded['columns'] == ['z', 'psi']
        assert loaded['data']['psi'].iloc[0] == pytest.approx(1.0 / 3.0, rel=1e-9)

    def test_csv_missing(self, tmp_path):
        loaded = read_csv(tmp_path / 'absent.csv')
        assert not loaded['success']
        assert loaded['data'] is None

    def test_binary(self, tmp_path):
        grid = Grid.rectangle((0.0, 1.0), (0.0, 1.0), 0.25)
        values = np.random.default_rng(0).random(grid.shape)
        path = write_field_binary(tmp_path / 'c.bin', grid, values)
        loaded = read_field_binary(path)
        assert loaded['success']
        assert loaded['grid'] == grid
        assert np.array_equal(loaded['data'], values)

    def test_binary_layout(self, tmp_path):
        grid = Grid.line(1.0, 2.0, 0.5, z_up=False)
        path = write_field_binary(tmp_path / 'psi.bin', grid, np.array([1.0, 2.0, 3.0]))
        raw = path.read_bytes()
        assert raw[:8] == FIELD_MAGIC
        assert len(raw) == HEADER_DTYPE.itemsize + 3 * 8
        assert np.frombuffer(raw, dtype='<i8', count=3, offset=8).tolist() == [1, 1, 3]
        assert np.frombuffer(raw, dtype='<f8', count=4, offset=32).tolist() == [0.5, 0.5, 0.0, 1.0]
        assert np.frombuffer(raw, dtype='<i8', count=1, offset=64).tolist() == [0]
        assert np.frombuffer(raw, dtype='<f8', offset=72).tolist() == [1.0, 2.0, 3.0]

    def test_binary_size_check(self, tmp_path):
        grid = Grid.line(0.0, 1.0, 0.25)
        path = write_field_binary(tmp_path / 'bad.bin', grid, np.zeros(3))
        loaded = read_field_binary(path)
        assert not loaded['success']
        assert 'payload' in loaded['error']

    def test_binary_bad_magic(self, tmp_path):
        path = tmp_path / 'other.bin'
        path.write_bytes(b'NOTAFILE' + bytes(HEADER_DTYPE.itemsize))
        loaded = read_field_binary(path)
        assert not loaded['success']
        assert 'magic' in loaded['error']
        assert not read_field_binary(tmp_path / 'absent.bin')['success']

    def test_field_dumps(self, tmp_path):
        grid = Grid.line(0.0, 1.0, 0.5)
        snapshots = {0.0: {'psi': np.zeros(3)}, 0.5: {'psi': np.array([1.0, 2.0, 3.0])}}
        written = write_field_dumps(profile_frame(grid, snapshots, keys=('psi',)), tmp_path, 'profiles')
        assert sorted(p.name for p in written) == ['profiles_psi_t0.5.bin', 'profiles_psi_t0.bin']
        assert read_field_binary(tmp_path / 'profiles_psi_t0.5.bin')['data'].tolist() == [1.0, 2.0, 3.0]
        assert write_field_dumps(pd.DataFrame({'z': [0.0], 'psi': [1.0]}), tmp_path, 'plain') == []
