"""
Field and series I/O utilities for GrwSim.

This module converts lattice fields to tidy pandas tables and writes or reads
them as CSV files or binary dumps. Readers return result dictionaries instead
of raising, so the command line can report unreadable files next to the ones
that loaded.

A binary dump holds one field. All numbers are little-endian:

    magic   8 bytes  b'GRWFLD01'
    ndim    int64    1 or 2
    nx, nz  int64    sites along x (1 for a column) and z
    dx, dz  float64  lattice spacings
    x0, z0  float64  coordinates of site (0, 0)
    z_up    int64    1 when z grows upwards
    payload float64  nx * nz values in ``Grid.shape`` order (C order)
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.core.lattice import Grid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

COORDINATE_COLUMNS = ('t', 'ix', 'iz', 'x', 'z')
FIELD_MAGIC = b'GRWFLD01'
HEADER_DTYPE = np.dtype([
    ('magic', 'S8'), ('ndim', '<i8'), ('nx', '<i8'), ('nz', '<i8'),
    ('dx', '<f8'), ('dz', '<f8'), ('x0', '<f8'), ('z0', '<f8'), ('z_up', '<i8'),
])
PAYLOAD_DTYPE = np.dtype('<f8')


def field_frame(grid: Grid, fields: Mapping[str, np.ndarray]) -> pd.DataFrame:
    """
    Flatten lattice fields into one row per site.

    Args:
        grid: Lattice the fields live on.
        fields: Column name to field array, each shaped like ``grid.shape``.

    Returns:
        DataFrame with index columns (``iz`` or ``ix, iz``), physical
        coordinates (``z`` or ``x, z``) and then the fields. The grid is kept
        in ``frame.attrs['grid']`` for the binary dumps.
    """
    X, Z = grid.mesh()
    indices = np.indices(grid.shape)
    columns: Dict[str, np.ndarray] = {}
    if grid.ndim == 2:
        columns['ix'] = indices[0].ravel()
    columns['iz'] = indices[-1].ravel()
    if grid.ndim == 2:
        columns['x'] = X.ravel()
    columns['z'] = Z.ravel()
    for name, values in fields.items():
        values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
        columns[name] = values.ravel()
    frame = pd.DataFrame(columns)
    frame.attrs['grid'] = grid
    return frame


def profile_frame(grid: Grid, snapshots: Mapping[float, Mapping[str, np.ndarray]],
                  keys: Sequence[str] = ('psi', 'theta', 'q_z')) -> pd.DataFrame:
    """Stack snapshot profiles with a leading ``t`` column."""
    frames = []
    for t in sorted(snapshots):
        snap = snapshots[t]
        frame = field_frame(grid, {k: snap[k] for k in keys if k in snap})
        frame.insert(0, 't', t)
        frames.append(frame)
    if not frames:
        stacked = pd.DataFrame(columns=['t', 'iz', 'z', *keys])
    else:
        stacked = pd.concat(frames, ignore_index=True)
    stacked.attrs['grid'] = grid
    return stacked


def series_frame(columns: Mapping[str, Sequence[float]]) -> pd.DataFrame:
    """Columns of unequal length are padded with NaN."""
    length = max((len(v) for v in columns.values()), default=0)
    padded = {name: list(values) + [np.nan] * (length - len(values)) for name, values in columns.items()}
    return pd.DataFrame(padded)


def history_frame(histories: Sequence[Sequence[float]], name: str = 'correction') -> pd.DataFrame:
    """One row per iteration: time-step index, iteration index s (starting at 2), value."""
    rows = [{'step': k + 1, 's': s + 2, name: value}
            for k, history in enumerate(histories) for s, value in enumerate(history)]
    return pd.DataFrame(rows, columns=['step', 's', name])


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.10g')
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def read_csv(path: PathLike) -> Dict[str, Any]:
    """
    Read a CSV table written by ``write_csv``.

    Returns:
        Dictionary containing:
        - 'success': Boolean indicating if reading was successful
        - 'data': DataFrame, or None on failure
        - 'columns': Column names
        - 'error': Error message if reading failed
    """
    try:
        frame = pd.read_csv(path, comment='#')
        return {'success': True, 'data': frame, 'columns': list(frame.columns), 'error': None}
    except Exception as e:
        return {'success': False, 'data': None, 'columns': [], 'error': str(e)}


def write_field_binary(path: PathLike, grid: Grid, values: np.ndarray) -> Path:
    """Write one field as a header plus little-endian float64 payload."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.array([(FIELD_MAGIC, grid.ndim, grid.nx, grid.nz, grid.dx, grid.dz,
                        grid.x0, grid.z0, int(grid.z_up))], dtype=HEADER_DTYPE)
    payload = np.ascontiguousarray(values, dtype=PAYLOAD_DTYPE)
    with open(path, 'wb') as handle:
        header.tofile(handle)
        payload.tofile(handle)
    return path


def read_field_binary(path: PathLike) -> Dict[str, Any]:
    """
    Read a dump written by ``write_field_binary``.

    Returns:
        Dictionary containing:
        - 'success': Boolean indicating if reading was successful
        - 'grid': Reconstructed Grid, or None
        - 'data': Field array shaped like the grid, or None
        - 'error': Error message if reading failed
    """
    try:
        raw = Path(path).read_bytes()
        if len(raw) < HEADER_DTYPE.itemsize:
            raise ValueError(f"file is shorter than the {HEADER_DTYPE.itemsize}-byte header")
        header = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
        if header['magic'] != FIELD_MAGIC:
            raise ValueError(f"bad magic {header['magic']!r}")
        grid = Grid(dx=float(header['dx']), dz=float(header['dz']), nx=int(header['nx']),
                    nz=int(header['nz']), x0=float(header['x0']), z0=float(header['z0']),
                    z_up=bool(header['z_up']))
        if grid.ndim != int(header['ndim']):
            raise ValueError(f"header says {int(header['ndim'])}D but nx={grid.nx} gives {grid.ndim}D")
        payload = np.frombuffer(raw, dtype=PAYLOAD_DTYPE, offset=HEADER_DTYPE.itemsize)
        if payload.size != grid.size:
            raise ValueError(f"payload holds {payload.size} values, grid expects {grid.size}")
        return {'success': True, 'grid': grid, 'data': payload.reshape(grid.shape).copy(), 'error': None}
    except Exception as e:
        return {'success': False, 'grid': None, 'data': None, 'error': str(e)}


def frame_to_field(frame: pd.DataFrame, grid: Grid, column: str) -> Optional[np.ndarray]:
    """Inverse of ``field_frame`` for one column; None if the row count does not fit the grid."""
    if column not in frame or len(frame) != grid.size:
        return None
    return frame[column].to_numpy(dtype=float).reshape(grid.shape)


def write_field_dumps(frame: pd.DataFrame, directory: PathLike, name: str) -> List[Path]:
    """
    Binary dump of every value column of a field table.

    Files are ``<name>_<column>.bin``, or ``<name>_<column>_t<t>.bin`` per
    snapshot of a profile table. Tables without ``attrs['grid']`` are skipped.
    """
    grid = frame.attrs.get('grid')
    if grid is None:
        return []
    directory = Path(directory)
    groups = frame.groupby('t', sort=True) if 't' in frame else [(None, frame)]
    written = []
    for t, part in groups:
        part = part.reset_index(drop=True)
        suffix = '' if t is None else f'_t{float(t):g}'
        for column in part.columns:
            if column in COORDINATE_COLUMNS:
                continue
            values = frame_to_field(part, grid, column)
            if values is None:
                logger.warning("%s: column '%s' does not fit the grid, no dump written", name, column)
                continue
            written.append(write_field_binary(directory / f'{name}_{column}{suffix}.bin', grid, values))
    return written
