"""
File Formats
CSV schemas, loaders and writers for grids, stations, sensitivities,
inventories, observations, masks and posterior outputs.

Every file starts with `# schema: <id> v1`. Loaders accept CRLF and report
problems as FormatError with the file and 1-based data row; writers emit
comma-separated LF-terminated text with 17 significant digits.
"""

import functools
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from processing.errors import FluxInversionError, FormatError
from processing.model import ObservationSet, SensitivityStack, SpatialGrid, StationSet
from processing.samplers import PosteriorSamples
from outputs.diagnostics import RegionMask, SCORE_COLUMNS

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 'v1'
FLOAT_FORMAT = '%.17g'


@dataclass(frozen=True)
class FileSchema:
    """
    Attributes:
        schema_id: Name written in the `# schema:` line
        columns: Required columns, in order
        units: Column -> unit annotation
        extra_prefix: Prefix of additional numbered columns (grid covariates)
    """
    schema_id: str
    columns: Tuple[str, ...]
    units: Dict[str, str] = field(default_factory=dict)
    extra_prefix: Optional[str] = None

    @property
    def header_line(self) -> str:
        return f'# schema: {self.schema_id} {SCHEMA_VERSION}'

    def check_columns(self, columns: Sequence[str], path: str) -> List[str]:
        """Validate a header, returning any extra numbered columns"""
        columns = list(columns)
        n = len(self.columns)
        if columns[:n] != list(self.columns):
            raise FormatError(f"expected columns {','.join(self.columns)}, got {','.join(columns)}", path)
        extra = columns[n:]
        if extra and self.extra_prefix is None:
            raise FormatError(f"unexpected columns {','.join(extra)}", path)
        expected = [f'{self.extra_prefix}{i}' for i in range(1, len(extra) + 1)] if extra else []
        if extra != expected:
            raise FormatError(f"extra columns must be {','.join(expected)}", path)
        return extra


GRID = FileSchema('grid', ('cell_id', 'lon', 'lat', 'weight'),
                  {'lon': 'degrees', 'lat': 'degrees'}, extra_prefix='x')
STATIONS = FileSchema('stations', ('station_id', 'lon', 'lat'), {'lon': 'degrees', 'lat': 'degrees'})
SENSITIVITIES = FileSchema('sensitivities', ('t', 'station_id', 'cell_id', 'value'), {'value': 'ppb per g/s'})
OBSERVATIONS = FileSchema('observations', ('t', 'station_id', 'value', 'variance'),
                          {'value': 'ppb', 'variance': 'ppb^2'})
INVENTORY = FileSchema('inventory', ('cell_id', 'flux'), {'flux': 'g/s'})
MASKS = FileSchema('masks', ('mask_name', 'cell_id'))
FLUX_SAMPLES = FileSchema('flux_samples', ('draw', 'cell_id', 'value'), {'value': 'g/s'})
PARAM_SAMPLES = FileSchema('param_samples', ('draw', 'name', 'value'))
DRAW_INDEX = FileSchema('draw_index', ('draw', 'chain', 'iteration'))
MOLEFRACTION_TRUTH = FileSchema('molefraction_truth', ('t', 'station_id', 'value'), {'value': 'ppb'})
MOLEFRACTION_SAMPLES = FileSchema('molefraction_samples', ('draw', 't', 'station_id', 'value'), {'value': 'ppb'})
SCORES = FileSchema('scores', tuple(SCORE_COLUMNS))
AGGREGATES = FileSchema('aggregates', ('mask_name', 'unit', 'median', 'lower', 'upper', 'truth'))
FLUX_SUMMARY = FileSchema('flux_summary', ('cell_id', 'median', 'lower', 'upper', 'truth'), {'median': 'g/s'})

SCHEMAS = {s.schema_id: s for s in (
    GRID, STATIONS, SENSITIVITIES, OBSERVATIONS, INVENTORY, MASKS, FLUX_SAMPLES, PARAM_SAMPLES,
    DRAW_INDEX, MOLEFRACTION_TRUTH, MOLEFRACTION_SAMPLES, SCORES, AGGREGATES, FLUX_SUMMARY,
)}

FLUX_SAMPLES_FILE = 'flux_samples.csv'
PARAM_SAMPLES_FILE = 'param_samples.csv'
DRAW_INDEX_FILE = 'draw_index.csv'


def format_guard(func: Callable) -> Callable:
    """Turn any failure inside a loader into a FormatError naming the file"""
    @functools.wraps(func)
    def wrapper(path, *args, **kwargs):
        try:
            return func(path, *args, **kwargs)
        except FormatError:
            raise
        except FluxInversionError as e:
            raise FormatError(str(e), str(path)) from e
        except Exception as e:
            raise FormatError(f"{type(e).__name__}: {e}", str(path)) from e
    return wrapper


@dataclass
class Table:
    """Parsed file: string-valued frame plus its header comments"""
    frame: pd.DataFrame
    conventions: Dict[str, str]
    path: str

    def __len__(self) -> int:
        return len(self.frame)

    def rows(self) -> Iterable[Tuple[int, pd.Series]]:
        for i, (_, row) in enumerate(self.frame.iterrows(), start=1):
            yield i, row

    def text(self, row: int, column: str, value) -> str:
        if not isinstance(value, str) or value.strip() == '':
            raise FormatError(f"missing value in column {column}", self.path, row)
        return value.strip()

    def number(self, row: int, column: str, value) -> float:
        raw = self.text(row, column, value)
        try:
            number = float(raw)
        except ValueError:
            raise FormatError(f"cannot parse {raw!r} in column {column} as a number", self.path, row)
        if not np.isfinite(number):
            raise FormatError(f"non-finite value {raw!r} in column {column}", self.path, row)
        return number

    def integer(self, row: int, column: str, value) -> int:
        raw = self.text(row, column, value)
        try:
            return int(raw)
        except ValueError:
            raise FormatError(f"cannot parse {raw!r} in column {column} as an integer", self.path, row)


def read_table(path: str, schema: FileSchema) -> Table:
    """Read a schema file into strings, validating the schema line and header"""
    path = str(path)
    try:
        with open(path, 'r', encoding='utf-8', newline=None) as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read file: {e}", path)

    lines = text.split('\n')
    conventions = {}
    start = 0
    while start < len(lines) and lines[start].lstrip().startswith('#'):
        comment = lines[start].lstrip()[1:].strip()
        key, _, value = comment.partition(':')
        if value:
            conventions[key.strip()] = value.strip()
        start += 1
    if 'schema' in conventions:
        declared = conventions['schema'].split()
        if declared != [schema.schema_id, SCHEMA_VERSION]:
            raise FormatError(
                f"schema line declares {conventions['schema']!r}, expected '{schema.schema_id} {SCHEMA_VERSION}'",
                path,
            )

    body = '\n'.join(lines[start:])
    if not body.strip():
        raise FormatError("missing header row", path)
    try:
        frame = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False, skipinitialspace=True)
    except Exception as e:
        raise FormatError(f"malformed CSV: {e}", path)
    frame.columns = [str(c).strip() for c in frame.columns]
    schema.check_columns(frame.columns, path)
    return Table(frame, conventions, path)


def write_table(frame: pd.DataFrame, path: str, schema: FileSchema,
                conventions: Optional[Dict[str, str]] = None) -> str:
    """Write a frame with the schema line and optional convention lines"""
    path = str(path)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        fh.write(schema.header_line + '\n')
        for key, value in (conventions or {}).items():
            fh.write(f'# {key}: {value}\n')
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator='\n', na_rep='nan')
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def _no_duplicates(table: Table, keys: List, what: str):
    seen = {}
    for row, key in enumerate(keys, start=1):
        if key in seen:
            raise FormatError(f"duplicate {what} {key} (first seen in row {seen[key]})", table.path, row)
        seen[key] = row


def _lookup(table: Table, row: int, mapping: Dict[str, int], value: str, what: str) -> int:
    if value not in mapping:
        raise FormatError(f"unknown {what} {value!r}", table.path, row)
    return mapping[value]


# ---------------------------------------------------------------- grid


@format_guard
def load_grid(path: str) -> SpatialGrid:
    """Grid with header cell_id,lon,lat,weight,x1[,x2,...]"""
    table = read_table(path, GRID)
    extra = GRID.check_columns(table.frame.columns, table.path)
    if not extra:
        raise FormatError("grid needs at least one covariate column x1", table.path)
    if len(table) == 0:
        raise FormatError("grid has no cells", table.path)
    ids, coords, weights, covariates = [], [], [], []
    for row, rec in table.rows():
        ids.append(table.text(row, 'cell_id', rec['cell_id']))
        coords.append((table.number(row, 'lon', rec['lon']), table.number(row, 'lat', rec['lat'])))
        weight = table.number(row, 'weight', rec['weight'])
        if weight <= 0:
            raise FormatError(f"weight must be positive, got {weight}", table.path, row)
        weights.append(weight)
        covariates.append([table.number(row, c, rec[c]) for c in extra])
    _no_duplicates(table, ids, 'cell id')
    return SpatialGrid(tuple(ids), np.array(coords), np.array(weights), np.array(covariates), tuple(extra))


def write_grid(grid: SpatialGrid, path: str) -> str:
    frame = pd.DataFrame({
        'cell_id': list(grid.cell_ids),
        'lon': grid.coords[:, 0],
        'lat': grid.coords[:, 1],
        'weight': grid.weights,
    })
    for j in range(grid.covariates.shape[1]):
        frame[f'x{j + 1}'] = grid.covariates[:, j]
    return write_table(frame, path, GRID)


# ---------------------------------------------------------------- stations


@format_guard
def load_stations(path: str) -> StationSet:
    table = read_table(path, STATIONS)
    if len(table) == 0:
        raise FormatError("no stations", table.path)
    ids, coords = [], []
    for row, rec in table.rows():
        ids.append(table.text(row, 'station_id', rec['station_id']))
        coords.append((table.number(row, 'lon', rec['lon']), table.number(row, 'lat', rec['lat'])))
    _no_duplicates(table, ids, 'station id')
    return StationSet(tuple(ids), np.array(coords))


def write_stations(stations: StationSet, path: str) -> str:
    frame = pd.DataFrame({
        'station_id': list(stations.station_ids),
        'lon': stations.coords[:, 0],
        'lat': stations.coords[:, 1],
    })
    return write_table(frame, path, STATIONS)


# ---------------------------------------------------------------- sensitivities


@format_guard
def load_sensitivities(path: str, grid: SpatialGrid, stations: StationSet,
                       n_time: Optional[int] = None) -> SensitivityStack:
    """
    Long-format triples t,station_id,cell_id,value with t in 1..T

    Values are weighted sensitivities B_t; absent triples are zero. Without
    n_time, T is the largest t present.
    """
    table = read_table(path, SENSITIVITIES)
    convention = table.conventions.get('convention', 'weighted')
    if convention != 'weighted':
        raise FormatError(f"sensitivities must use the weighted convention, got {convention!r}", table.path)
    cells = grid.index_of()
    stns = stations.index_of()
    triples = {}
    for row, rec in table.rows():
        t = table.integer(row, 't', rec['t'])
        if t < 1 or (n_time is not None and t > n_time):
            raise FormatError(f"t={t} outside 1..{n_time or 'T'}", table.path, row)
        s = _lookup(table, row, stns, table.text(row, 'station_id', rec['station_id']), 'station id')
        c = _lookup(table, row, cells, table.text(row, 'cell_id', rec['cell_id']), 'cell id')
        if (t, s, c) in triples:
            raise FormatError(f"duplicate triple ({t}, {rec['station_id']}, {rec['cell_id']})", table.path, row)
        triples[(t, s, c)] = table.number(row, 'value', rec['value'])
    if n_time is None and 'n_time' in table.conventions:
        n_time = table.integer(0, 'n_time', table.conventions['n_time'])
    if n_time is None:
        if not triples:
            raise FormatError("no triples and no T to size the sensitivities", table.path)
        n_time = max(t for t, _, _ in triples)
    if not triples:
        logger.warning(f"{table.path}: no sensitivity triples, every B_t is zero")
    mats = np.zeros((n_time, stations.n_stations, grid.n_cells))
    for (t, s, c), value in triples.items():
        mats[t - 1, s, c] = value
    return SensitivityStack(mats)


def write_sensitivities(stack: SensitivityStack, grid: SpatialGrid, stations: StationSet, path: str) -> str:
    t_idx, s_idx, c_idx = np.nonzero(stack.matrices)
    frame = pd.DataFrame({
        't': t_idx + 1,
        'station_id': np.array(stations.station_ids, dtype=object)[s_idx],
        'cell_id': np.array(grid.cell_ids, dtype=object)[c_idx],
        'value': stack.matrices[t_idx, s_idx, c_idx],
    })
    return write_table(frame, path, SENSITIVITIES, {'convention': 'weighted', 'n_time': str(stack.n_time)})


# ---------------------------------------------------------------- observations


@format_guard
def load_observations(path: str, stations: Optional[StationSet] = None,
                      n_time: Optional[int] = None) -> ObservationSet:
    """
    Readings t,station_id,value,variance; absent (t, station) pairs are missing

    Without stations, station order is the sorted set of ids in the file;
    without n_time, T is the largest t present.
    """
    table = read_table(path, OBSERVATIONS)
    records = []
    for row, rec in table.rows():
        t = table.integer(row, 't', rec['t'])
        if t < 1 or (n_time is not None and t > n_time):
            raise FormatError(f"t={t} out of range", table.path, row)
        station = table.text(row, 'station_id', rec['station_id'])
        variance = table.number(row, 'variance', rec['variance'])
        if variance <= 0:
            raise FormatError(f"variance must be positive, got {variance}", table.path, row)
        records.append((row, t, station, table.number(row, 'value', rec['value']), variance))
    _no_duplicates(table, [(r[1], r[2]) for r in records], 'reading for (t, station)')

    if stations is None:
        ids = sorted({r[2] for r in records})
        if not ids:
            raise FormatError("no readings and no station list to size the observation set", table.path)
        mapping = {sid: i for i, sid in enumerate(ids)}
        n_stations = len(ids)
    else:
        mapping = stations.index_of()
        n_stations = stations.n_stations
    if n_time is None:
        if not records:
            raise FormatError("no readings and no T to size the observation set", table.path)
        n_time = max(r[1] for r in records)

    station_index = [_lookup(table, r[0], mapping, r[2], 'station id') for r in records]
    return ObservationSet(
        t_index=np.array([r[1] - 1 for r in records], dtype=int),
        station_index=np.array(station_index, dtype=int),
        values=np.array([r[3] for r in records]),
        variances=np.array([r[4] for r in records]),
        n_time=n_time,
        n_stations=n_stations,
    )


def write_observations(obs: ObservationSet, stations: StationSet, path: str) -> str:
    order = np.argsort(obs.slots, kind='stable')
    frame = pd.DataFrame({
        't': obs.t_index[order] + 1,
        'station_id': np.array(stations.station_ids, dtype=object)[obs.station_index[order]],
        'value': obs.values[order],
        'variance': obs.variances[order],
    })
    return write_table(frame, path, OBSERVATIONS)


# ---------------------------------------------------------------- inventory and masks


@format_guard
def load_inventory(path: str, grid: SpatialGrid) -> np.ndarray:
    """Fluxes cell_id,flux covering every grid cell once, all positive"""
    table = read_table(path, INVENTORY)
    cells = grid.index_of()
    flux = np.full(grid.n_cells, np.nan)
    ids = []
    for row, rec in table.rows():
        cid = table.text(row, 'cell_id', rec['cell_id'])
        ids.append(cid)
        value = table.number(row, 'flux', rec['flux'])
        if value <= 0:
            raise FormatError(f"flux must be strictly positive, got {value}", table.path, row)
        flux[_lookup(table, row, cells, cid, 'cell id')] = value
    _no_duplicates(table, ids, 'cell id')
    if np.isnan(flux).any():
        missing = [grid.cell_ids[i] for i in np.flatnonzero(np.isnan(flux))[:5]]
        raise FormatError(f"no flux for cells {', '.join(missing)}", table.path)
    return flux


def write_inventory(flux: np.ndarray, grid: SpatialGrid, path: str) -> str:
    frame = pd.DataFrame({'cell_id': list(grid.cell_ids), 'flux': np.asarray(flux, dtype=float)})
    return write_table(frame, path, INVENTORY)


@format_guard
def load_masks(path: str, grid: SpatialGrid) -> List[RegionMask]:
    table = read_table(path, MASKS)
    cells = grid.index_of()
    members: Dict[str, List[str]] = {}
    for row, rec in table.rows():
        name = table.text(row, 'mask_name', rec['mask_name'])
        cid = table.text(row, 'cell_id', rec['cell_id'])
        _lookup(table, row, cells, cid, 'cell id')
        if cid in members.get(name, []):
            raise FormatError(f"cell {cid!r} listed twice in mask {name!r}", table.path, row)
        members.setdefault(name, []).append(cid)
    return [RegionMask(name, tuple(ids)) for name, ids in members.items()]


def write_masks(masks: Sequence[RegionMask], path: str) -> str:
    rows = [(m.name, cid) for m in masks for cid in m.cell_ids]
    frame = pd.DataFrame(rows, columns=list(MASKS.columns))
    return write_table(frame, path, MASKS)


# ---------------------------------------------------------------- posterior samples


def write_samples(samples: PosteriorSamples, directory: str) -> Dict[str, str]:
    """flux_samples.csv, param_samples.csv and draw_index.csv in a directory"""
    n_draws, n_cells = samples.flux.shape
    draws = np.arange(1, n_draws + 1)
    flux_frame = pd.DataFrame({
        'draw': np.repeat(draws, n_cells),
        'cell_id': np.tile(np.array(samples.cell_ids, dtype=object), n_draws),
        'value': samples.flux.ravel(),
    })
    names = samples.param_names
    param_frame = pd.DataFrame({
        'draw': np.repeat(draws, len(names)),
        'name': np.tile(np.array(names, dtype=object), n_draws),
        'value': np.column_stack([samples.params[n] for n in names]).ravel() if names else np.zeros(0),
    })
    index_frame = pd.DataFrame({'draw': draws, 'chain': samples.chain, 'iteration': samples.iteration})
    paths = {
        'flux': write_table(flux_frame, os.path.join(directory, FLUX_SAMPLES_FILE), FLUX_SAMPLES),
        'params': write_table(param_frame, os.path.join(directory, PARAM_SAMPLES_FILE), PARAM_SAMPLES),
        'index': write_table(index_frame, os.path.join(directory, DRAW_INDEX_FILE), DRAW_INDEX),
    }
    logger.info(f"Wrote {n_draws} posterior draws to {directory}")
    return paths


def _draw_matrix(table: Table, key: str) -> Tuple[List[int], List[str], np.ndarray]:
    entries = {}
    draws, keys = [], []
    for row, rec in table.rows():
        draw = table.integer(row, 'draw', rec['draw'])
        label = table.text(row, key, rec[key])
        if (draw, label) in entries:
            raise FormatError(f"duplicate entry for draw {draw}, {key} {label!r}", table.path, row)
        entries[(draw, label)] = table.number(row, 'value', rec['value'])
        if draw not in draws:
            draws.append(draw)
        if label not in keys:
            keys.append(label)
    if len(entries) != len(draws) * len(keys):
        raise FormatError(f"every draw must list every {key}", table.path)
    draws.sort()
    matrix = np.array([[entries[(d, k)] for k in keys] for d in draws]).reshape(len(draws), len(keys))
    return draws, keys, matrix


@format_guard
def load_samples(directory: str) -> PosteriorSamples:
    """Reload the files written by write_samples"""
    flux_table = read_table(os.path.join(directory, FLUX_SAMPLES_FILE), FLUX_SAMPLES)
    draws, cell_ids, flux = _draw_matrix(flux_table, 'cell_id')
    if not draws:
        raise FormatError("no flux draws", flux_table.path)

    param_table = read_table(os.path.join(directory, PARAM_SAMPLES_FILE), PARAM_SAMPLES)
    params = {}
    if len(param_table):
        param_draws, names, values = _draw_matrix(param_table, 'name')
        if param_draws != draws:
            raise FormatError("parameter draws do not match flux draws", param_table.path)
        params = {name: values[:, j] for j, name in enumerate(names)}

    chain = np.zeros(len(draws), dtype=int)
    iteration = np.array(draws, dtype=int)
    index_path = os.path.join(directory, DRAW_INDEX_FILE)
    if os.path.exists(index_path):
        index_table = read_table(index_path, DRAW_INDEX)
        labels = {}
        for row, rec in index_table.rows():
            labels[index_table.integer(row, 'draw', rec['draw'])] = (
                index_table.integer(row, 'chain', rec['chain']),
                index_table.integer(row, 'iteration', rec['iteration']),
            )
        if sorted(labels) != draws:
            raise FormatError("draw index does not match flux draws", index_table.path)
        chain = np.array([labels[d][0] for d in draws], dtype=int)
        iteration = np.array([labels[d][1] for d in draws], dtype=int)

    return PosteriorSamples(flux=flux, params=params, chain=chain, iteration=iteration,
                            cell_ids=tuple(cell_ids))


# ---------------------------------------------------------------- mole fractions


def write_molefraction_truth(field_true: np.ndarray, stations: StationSet, path: str) -> str:
    """Full simulated Y2, shape (T, n_s)"""
    n_time, n_stations = field_true.shape
    frame = pd.DataFrame({
        't': np.repeat(np.arange(1, n_time + 1), n_stations),
        'station_id': np.tile(np.array(stations.station_ids, dtype=object), n_time),
        'value': np.asarray(field_true, dtype=float).ravel(),
    })
    return write_table(frame, path, MOLEFRACTION_TRUTH)


@format_guard
def load_molefraction_truth(path: str, stations: StationSet) -> np.ndarray:
    table = read_table(path, MOLEFRACTION_TRUTH)
    mapping = stations.index_of()
    entries = {}
    for row, rec in table.rows():
        t = table.integer(row, 't', rec['t'])
        if t < 1:
            raise FormatError(f"t={t} out of range", table.path, row)
        s = _lookup(table, row, mapping, table.text(row, 'station_id', rec['station_id']), 'station id')
        if (t, s) in entries:
            raise FormatError(f"duplicate slot ({t}, {rec['station_id']})", table.path, row)
        entries[(t, s)] = table.number(row, 'value', rec['value'])
    if not entries:
        raise FormatError("empty mole-fraction truth", table.path)
    n_time = max(t for t, _ in entries)
    if len(entries) != n_time * stations.n_stations:
        raise FormatError("mole-fraction truth must cover every (t, station) slot", table.path)
    field_true = np.empty((n_time, stations.n_stations))
    for (t, s), value in entries.items():
        field_true[t - 1, s] = value
    return field_true


def write_molefraction_samples(draws: np.ndarray, slots: np.ndarray, stations: StationSet, path: str) -> str:
    """Y2 draws at time-major slots, shape (n_draws, n_slots)"""
    draws = np.asarray(draws, dtype=float)
    slots = np.asarray(slots, dtype=int)
    n_draws = draws.shape[0]
    n_stations = stations.n_stations
    frame = pd.DataFrame({
        'draw': np.repeat(np.arange(1, n_draws + 1), slots.size),
        't': np.tile(slots // n_stations + 1, n_draws),
        'station_id': np.tile(np.array(stations.station_ids, dtype=object)[slots % n_stations], n_draws),
        'value': draws.ravel(),
    })
    return write_table(frame, path, MOLEFRACTION_SAMPLES)


@format_guard
def load_molefraction_samples(path: str, stations: StationSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        Tuple of (time-major slots, (n_draws, n_slots) draws)
    """
    table = read_table(path, MOLEFRACTION_SAMPLES)
    mapping = stations.index_of()
    frame = table.frame.copy()
    keys = []
    for row, rec in table.rows():
        t = table.integer(row, 't', rec['t'])
        if t < 1:
            raise FormatError(f"t={t} out of range", table.path, row)
        s = _lookup(table, row, mapping, table.text(row, 'station_id', rec['station_id']), 'station id')
        keys.append(str((t - 1) * stations.n_stations + s))
    frame['slot'] = keys
    frame = frame.drop(columns=['t', 'station_id'])
    slot_table = Table(frame, table.conventions, table.path)
    if len(slot_table) == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 0))
    _, slot_labels, draws = _draw_matrix(slot_table, 'slot')
    slots = np.array([int(s) for s in slot_labels], dtype=int)
    order = np.argsort(slots)
    return slots[order], draws[:, order]


# ---------------------------------------------------------------- reports


def write_scores(rows: Sequence[Dict[str, object]], path: str) -> str:
    return write_table(pd.DataFrame(list(rows), columns=SCORE_COLUMNS), path, SCORES)


@format_guard
def load_scores(path: str) -> pd.DataFrame:
    table = read_table(path, SCORES)
    frame = table.frame.copy()
    for column in SCORE_COLUMNS[1:]:
        frame[column] = [float(v) for v in frame[column]]
    return frame


def write_aggregates(frame: pd.DataFrame, path: str) -> str:
    return write_table(frame[list(AGGREGATES.columns)], path, AGGREGATES)


def write_flux_summary(frame: pd.DataFrame, path: str) -> str:
    frame = frame.copy()
    if 'truth' not in frame:
        frame['truth'] = np.nan
    return write_table(frame[list(FLUX_SUMMARY.columns)], path, FLUX_SUMMARY)


# ---------------------------------------------------------------- cumulant example

KERNEL_SLICE = FileSchema('kernel_slice', ('u', 'value'))
CUMULANT2_SLICE = FileSchema('cumulant2_slice', ('u2', 'value'))
CUMULANT3_CROSS_SLICE = FileSchema('cumulant3_cross_slice', ('u2', 'u3', 'value'))
CUMULANT3_AUTO_SLICE = FileSchema('cumulant3_auto_slice', ('s2', 's3', 'value'))
SCHEMAS.update({s.schema_id: s for s in (
    KERNEL_SLICE, CUMULANT2_SLICE, CUMULANT3_CROSS_SLICE, CUMULANT3_AUTO_SLICE,
)})


def write_cumulant_example(example, directory: str) -> Dict[str, str]:
    """Plottable slices at s = 0: kernel row, kappa2(Y2, Y1), kappa3(Y2, Y1, Y1), kappa3(Y2, Y2, Y2)"""
    u = example.u_points
    n = u.size
    first = np.repeat(u, n)
    second = np.tile(u, n)
    paths = {
        'kernel': write_table(pd.DataFrame({'u': u, 'value': example.kernel_at_zero}),
                              os.path.join(directory, 'kernel_s0.csv'), KERNEL_SLICE),
        'k2_21': write_table(pd.DataFrame({'u2': u, 'value': example.k2_21}),
                             os.path.join(directory, 'k2_21_s0.csv'), CUMULANT2_SLICE),
        'k3_211': write_table(pd.DataFrame({'u2': first, 'u3': second, 'value': example.k3_211.ravel()}),
                              os.path.join(directory, 'k3_211_s0.csv'), CUMULANT3_CROSS_SLICE),
        'k3_222': write_table(pd.DataFrame({'s2': first, 's3': second, 'value': example.k3_222.ravel()}),
                              os.path.join(directory, 'k3_222_s0.csv'), CUMULANT3_AUTO_SLICE),
    }
    logger.info(f"Wrote cumulant slices on {n} points to {directory}")
    return paths
