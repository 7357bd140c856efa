"""
Tests for the CSV file formats
Writers and loaders for every schema, plus malformed inputs that must be
reported with the offending file and row
"""

import sys
import os
import inspect
import tempfile
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from data_sources import formats
from outputs.diagnostics import RegionMask
from processing.errors import FormatError
from processing.model import ObservationSet, SensitivityStack, SpatialGrid, StationSet
from processing.samplers import PosteriorSamples


def _grid():
    coords = np.array([[-7.5, 50.5], [-6.5, 50.5], [-7.5, 51.5], [-6.5, 51.5]])
    covariates = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    return SpatialGrid(('a', 'b', 'c', 'd'), coords, np.cos(np.radians(coords[:, 1])), covariates)


def _stations():
    return StationSet(('MHD', 'TAC'), np.array([[-9.9, 53.33], [1.14, 52.52]]))


def _write(path, text):
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        fh.write(text)
    return str(path)


def test_grid_round_trip(tmp_path):
    grid = _grid()
    path = formats.write_grid(grid, tmp_path / 'grid.csv')
    with open(path, encoding='utf-8') as fh:
        assert fh.readline().strip() == '# schema: grid v1'
    loaded = formats.load_grid(path)
    assert loaded.cell_ids == grid.cell_ids
    assert loaded.covariate_names == ('x1', 'x2')
    np.testing.assert_array_equal(loaded.coords, grid.coords)
    np.testing.assert_array_equal(loaded.weights, grid.weights)
    np.testing.assert_array_equal(loaded.covariates, grid.covariates)


def test_grid_accepts_crlf_and_whitespace(tmp_path):
    path = _write(tmp_path / 'grid.csv',
                  '# schema: grid v1\r\ncell_id,lon,lat,weight,x1\r\nA, 0.5, 1.5, 1.0, 1\r\nB,1.5,1.5,1.0,1\r\n')
    grid = formats.load_grid(path)
    assert grid.cell_ids == ('A', 'B')
    np.testing.assert_allclose(grid.coords[0], [0.5, 1.5])


def test_grid_errors(tmp_path):
    header = '# schema: grid v1\ncell_id,lon,lat,weight,x1\n'
    cases = {
        'no_cov': ('# schema: grid v1\ncell_id,lon,lat,weight\nA,0,0,1\n', None),
        'bad_number': (header + 'A,0,0,1,1\nB,east,0,1,1\n', 2),
        'duplicate': (header + 'A,0,0,1,1\nB,1,0,1,1\nA,2,0,1,1\n', 3),
        'weight': (header + 'A,0,0,0,1\n', 1),
        'missing': (header + 'A,,0,1,1\n', 1),
        'infinite': (header + 'A,inf,0,1,1\n', 1),
        'wrong_schema': ('# schema: stations v1\ncell_id,lon,lat,weight,x1\nA,0,0,1,1\n', None),
        'wrong_columns': ('# schema: grid v1\ncell_id,lat,lon,weight,x1\nA,0,0,1,1\n', None),
        'bad_extra': ('# schema: grid v1\ncell_id,lon,lat,weight,x2\nA,0,0,1,1\n', None),
        'empty': ('# schema: grid v1\n', None),
    }
    for name, (text, row) in cases.items():
        path = _write(tmp_path / f'{name}.csv', text)
        with pytest.raises(FormatError) as info:
            formats.load_grid(path)
        assert info.value.path == path, name
        if row is not None:
            assert info.value.row == row, name
    with pytest.raises(FormatError):
        formats.load_grid(tmp_path / 'absent.csv')


def test_stations_round_trip(tmp_path):
    stations = _stations()
    loaded = formats.load_stations(formats.write_stations(stations, tmp_path / 'stations.csv'))
    assert loaded.station_ids == stations.station_ids
    np.testing.assert_array_equal(loaded.coords, stations.coords)
    with pytest.raises(FormatError):
        formats.load_stations(_write(tmp_path / 'empty.csv', '# schema: stations v1\nstation_id,lon,lat\n'))


def test_sensitivities_round_trip_keeps_trailing_zero_steps(tmp_path):
    grid, stations = _grid(), _stations()
    mats = np.zeros((5, 2, 4))
    mats[0, 0, 1] = 0.25
    mats[2, 1, 3] = 1.0 / 3.0
    stack = SensitivityStack(mats)
    path = formats.write_sensitivities(stack, grid, stations, tmp_path / 'sens.csv')
    loaded = formats.load_sensitivities(path, grid, stations)
    assert loaded.n_time == 5
    np.testing.assert_array_equal(loaded.matrices, mats)
    assert formats.load_sensitivities(path, grid, stations, n_time=7).n_time == 7


def test_sensitivities_errors(tmp_path):
    grid, stations = _grid(), _stations()
    header = '# schema: sensitivities v1\nt,station_id,cell_id,value\n'
    with pytest.raises(FormatError) as info:
        formats.load_sensitivities(_write(tmp_path / 'a.csv', header + '1,MHD,a,0.1\n1,MHD,zz,0.2\n'),
                                   grid, stations)
    assert info.value.row == 2
    with pytest.raises(FormatError) as info:
        formats.load_sensitivities(_write(tmp_path / 'b.csv', header + '0,MHD,a,0.1\n'), grid, stations)
    assert info.value.row == 1
    with pytest.raises(FormatError):
        formats.load_sensitivities(_write(tmp_path / 'c.csv', header + '3,MHD,a,0.1\n'), grid, stations, n_time=2)
    with pytest.raises(FormatError):
        formats.load_sensitivities(_write(tmp_path / 'd.csv', header + '1,MHD,a,0.1\n1,MHD,a,0.3\n'),
                                   grid, stations)
    unweighted = '# schema: sensitivities v1\n# convention: raw\nt,station_id,cell_id,value\n1,MHD,a,0.1\n'
    with pytest.raises(FormatError):
        formats.load_sensitivities(_write(tmp_path / 'e.csv', unweighted), grid, stations)


def test_observations_round_trip(tmp_path):
    stations = _stations()
    obs = ObservationSet(np.array([0, 0, 2, 3]), np.array([0, 1, 1, 0]), np.array([1.5, -0.25, 3.0, 1e-7]),
                         np.array([1.0, 2.0, 0.5, 1.0]), 4, 2)
    loaded = formats.load_observations(formats.write_observations(obs, stations, tmp_path / 'obs.csv'),
                                       stations, n_time=4)
    np.testing.assert_array_equal(loaded.slots, obs.slots)
    np.testing.assert_array_equal(loaded.values, obs.values)
    np.testing.assert_array_equal(loaded.variances, obs.variances)
    assert loaded.n_time == 4 and loaded.n_stations == 2


def test_observations_errors(tmp_path):
    stations = _stations()
    header = '# schema: observations v1\nt,station_id,value,variance\n'
    with pytest.raises(FormatError) as info:
        formats.load_observations(_write(tmp_path / 'a.csv', header + '1,MHD,1.0,1.0\n1,MHD,2.0,1.0\n'), stations)
    assert info.value.row == 2
    with pytest.raises(FormatError) as info:
        formats.load_observations(_write(tmp_path / 'b.csv', header + '1,MHD,1.0,-1.0\n'), stations)
    assert info.value.row == 1
    with pytest.raises(FormatError):
        formats.load_observations(_write(tmp_path / 'c.csv', header + '1,JFJ,1.0,1.0\n'), stations)
    with pytest.raises(FormatError):
        formats.load_observations(_write(tmp_path / 'd.csv', header), stations)
    sized = formats.load_observations(_write(tmp_path / 'e.csv', header), stations, n_time=3)
    assert sized.n_readings == 0 and sized.n_slots == 6


def test_inventory_and_masks(tmp_path):
    grid = _grid()
    flux = np.array([1.0, 2.5, 0.125, 3.0])
    np.testing.assert_array_equal(formats.load_inventory(formats.write_inventory(flux, grid, tmp_path / 'inv.csv'),
                                                         grid), flux)
    header = '# schema: inventory v1\ncell_id,flux\n'
    with pytest.raises(FormatError):
        formats.load_inventory(_write(tmp_path / 'short.csv', header + 'a,1\nb,1\nc,1\n'), grid)
    with pytest.raises(FormatError) as info:
        formats.load_inventory(_write(tmp_path / 'neg.csv', header + 'a,1\nb,0\nc,1\nd,1\n'), grid)
    assert info.value.row == 2

    masks = [RegionMask('south', ('a', 'b')), RegionMask('north', ('c', 'd'))]
    loaded = formats.load_masks(formats.write_masks(masks, tmp_path / 'masks.csv'), grid)
    assert loaded == masks
    with pytest.raises(FormatError):
        formats.load_masks(_write(tmp_path / 'bad.csv', '# schema: masks v1\nmask_name,cell_id\nx,zz\n'), grid)


def test_samples_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    samples = PosteriorSamples(
        flux=rng.uniform(size=(6, 4)),
        params={'tau2': rng.uniform(size=6), 'a': rng.uniform(size=6), 'd': rng.uniform(size=6),
                'lambda': rng.normal(size=6)},
        chain=np.array([0, 0, 0, 1, 1, 1]),
        iteration=np.array([15, 20, 25, 15, 20, 25]),
        cell_ids=('a', 'b', 'c', 'd'),
    )
    formats.write_samples(samples, tmp_path)
    loaded = formats.load_samples(tmp_path)
    np.testing.assert_array_equal(loaded.flux, samples.flux)
    assert loaded.cell_ids == samples.cell_ids
    assert loaded.param_names == samples.param_names
    for name in samples.params:
        np.testing.assert_array_equal(loaded.params[name], samples.params[name])
    np.testing.assert_array_equal(loaded.chain, samples.chain)
    np.testing.assert_array_equal(loaded.iteration, samples.iteration)


def test_samples_incomplete_draw(tmp_path):
    samples = PosteriorSamples(np.ones((2, 2)), {}, np.zeros(2, dtype=int), np.arange(1, 3), cell_ids=('a', 'b'))
    paths = formats.write_samples(samples, tmp_path)
    with open(paths['flux'], encoding='utf-8') as fh:
        lines = fh.read().splitlines()
    _write(paths['flux'], '\n'.join(lines[:-1]) + '\n')
    with pytest.raises(FormatError):
        formats.load_samples(tmp_path)


def test_molefraction_round_trip(tmp_path):
    stations = _stations()
    field_true = np.arange(8, dtype=float).reshape(4, 2) - 3.5
    path = formats.write_molefraction_truth(field_true, stations, tmp_path / 'mf_truth.csv')
    np.testing.assert_array_equal(formats.load_molefraction_truth(path, stations), field_true)

    slots = np.array([1, 4, 7])
    draws = np.random.default_rng(1).normal(size=(5, 3))
    path = formats.write_molefraction_samples(draws, slots, stations, tmp_path / 'mf_samples.csv')
    loaded_slots, loaded_draws = formats.load_molefraction_samples(path, stations)
    np.testing.assert_array_equal(loaded_slots, slots)
    np.testing.assert_array_equal(loaded_draws, draws)

    incomplete = '# schema: molefraction_truth v1\nt,station_id,value\n1,MHD,1\n1,TAC,1\n2,MHD,1\n'
    with pytest.raises(FormatError):
        formats.load_molefraction_truth(_write(tmp_path / 'bad.csv', incomplete), stations)


def test_scores_round_trip(tmp_path):
    rows = [{'model': 'variant1', 'flux_rmspe': 0.5, 'flux_mcrps': 0.25, 'mf_rmspe': np.nan, 'mf_mcrps': np.nan}]
    loaded = formats.load_scores(formats.write_scores(rows, tmp_path / 'scores.csv'))
    assert list(loaded.columns) == ['model', 'flux_rmspe', 'flux_mcrps', 'mf_rmspe', 'mf_mcrps']
    assert loaded.loc[0, 'model'] == 'variant1'
    assert loaded.loc[0, 'flux_rmspe'] == 0.5
    assert np.isnan(loaded.loc[0, 'mf_mcrps'])


def test_schema_registry():
    assert {'grid', 'stations', 'sensitivities', 'observations', 'inventory', 'masks',
            'flux_samples', 'param_samples', 'scores'} <= set(formats.SCHEMAS)
    assert formats.GRID.header_line == '# schema: grid v1'


FUZZ_CASES = 1000
JUNK_CELLS = ['abc', 'nan', 'NaN', 'inf', '-inf', '', ' ', '1e999', '--1', '0x1F', '"', '1,2', 'None', '\t']


def _valid_files(directory):
    """One valid file per loader, with the call that reads it back"""
    grid, stations = _grid(), _stations()
    rng = np.random.default_rng(0)
    stack = SensitivityStack(rng.uniform(size=(3, 2, 4)))
    obs = ObservationSet(np.array([0, 1, 2]), np.array([0, 1, 0]), np.array([1.0, 2.0, 3.0]), np.ones(3), 3, 2)
    samples = PosteriorSamples(rng.uniform(size=(3, 4)), {'a': rng.uniform(size=3)}, np.array([0, 0, 1]),
                               np.array([5, 10, 5]), cell_ids=grid.cell_ids)
    sample_paths = formats.write_samples(samples, os.path.join(directory, 'samples'))
    sample_dir = os.path.join(directory, 'samples')

    def path(name):
        return os.path.join(directory, name)

    targets = [
        (formats.write_grid(grid, path('grid.csv')), formats.load_grid),
        (formats.write_stations(stations, path('stations.csv')), formats.load_stations),
        (formats.write_sensitivities(stack, grid, stations, path('sens.csv')),
         lambda p: formats.load_sensitivities(p, grid, stations)),
        (formats.write_observations(obs, stations, path('obs.csv')),
         lambda p: formats.load_observations(p, stations, n_time=3)),
        (formats.write_inventory(np.array([1.0, 2.0, 3.0, 4.0]), grid, path('inv.csv')),
         lambda p: formats.load_inventory(p, grid)),
        (formats.write_masks([RegionMask('south', ('a', 'b'))], path('masks.csv')),
         lambda p: formats.load_masks(p, grid)),
        (formats.write_molefraction_truth(np.ones((3, 2)), stations, path('mf_truth.csv')),
         lambda p: formats.load_molefraction_truth(p, stations)),
        (formats.write_molefraction_samples(np.ones((2, 2)), np.array([1, 4]), stations, path('mf_samples.csv')),
         lambda p: formats.load_molefraction_samples(p, stations)),
        (formats.write_scores([{'model': 'm', 'flux_rmspe': 1.0, 'flux_mcrps': 0.5, 'mf_rmspe': 2.0,
                                'mf_mcrps': 1.0}], path('scores.csv')), formats.load_scores),
    ]
    for sample_file in sample_paths.values():
        targets.append((sample_file, lambda p: formats.load_samples(sample_dir)))
    return targets


def _pick(options, rng):
    return options[int(rng.integers(len(options)))]


def _mutate(data, rng):
    """Apply one random corruption to the bytes of a file"""
    lines = data.split(b'\n')
    kind = int(rng.integers(12))
    if kind == 0:
        return data[:int(rng.integers(len(data) + 1))]
    if kind == 1:
        return b'\n'.join(lines[1:])
    if kind == 2:
        return b'\n'.join(l for l in lines if not l.startswith(b'#') or rng.uniform() < 0.5)
    if kind == 3:
        lines[0] = _pick([b'# schema: grid v2', b'# schema: nonsense v1', b'# schema:', b'#schema grid'], rng)
        return b'\n'.join(lines)
    header = next((i for i, l in enumerate(lines) if l and not l.startswith(b'#')), None)
    data_rows = [i for i, l in enumerate(lines) if header is not None and i > header and l]
    if kind == 4 and header is not None:
        first = lines[header].split(b',')[0]
        lines[header] += b',' + first
        return b'\n'.join(lines)
    if kind == 5 and header is not None:
        columns = lines[header].split(b',')
        rng.shuffle(columns)
        lines[header] = b','.join(columns[:max(1, len(columns) - int(rng.integers(2)))])
        return b'\n'.join(lines)
    if kind in (6, 7) and data_rows:
        i = _pick(data_rows, rng)
        cells = lines[i].split(b',')
        cells[int(rng.integers(len(cells)))] = _pick(JUNK_CELLS, rng).encode()
        lines[i] = b','.join(cells)
        return b'\n'.join(lines)
    if kind == 8 and data_rows:
        i = _pick(data_rows, rng)
        cells = lines[i].split(b',')
        lines[i] = b','.join(cells[:-1] if rng.uniform() < 0.5 else cells + [b'1'])
        return b'\n'.join(lines)
    if kind == 9 and data_rows:
        i = _pick(data_rows, rng)
        lines.insert(i, lines[i])
        return b'\n'.join(lines)
    if kind == 10:
        at = int(rng.integers(len(data) + 1))
        return data[:at] + _pick([b'\xff\xfe', b'\x80', b'\x00', b'\xc3'], rng) + data[at:]
    at = int(rng.integers(max(len(data), 1)))
    return data[:at] + bytes([int(rng.integers(256))]) + data[at + 1:]


def test_loaders_only_raise_format_errors(tmp_path):
    rng = np.random.default_rng(2024)
    targets = _valid_files(str(tmp_path))
    originals = {}
    for path, _ in targets:
        with open(path, 'rb') as fh:
            originals[path] = fh.read()
    rejected = 0
    for _ in range(FUZZ_CASES):
        path, load = targets[int(rng.integers(len(targets)))]
        data = originals[path]
        for _ in range(int(rng.integers(1, 4))):
            data = _mutate(data, rng)
        with open(path, 'wb') as fh:
            fh.write(data)
        try:
            load(path)
        except FormatError as e:
            assert e.path, 'file not named'
            rejected += 1
        finally:
            with open(path, 'wb') as fh:
                fh.write(originals[path])
    assert rejected > FUZZ_CASES // 2
    for path, load in targets:
        load(path)


def run_all_tests():
    """Run every test in this module without pytest"""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith('test_') and callable(obj)]
    print("\n" + "=" * 80)
    print("FILE FORMAT TESTS")
    print("=" * 80)
    for test in tests:
        if 'tmp_path' in inspect.signature(test).parameters:
            with tempfile.TemporaryDirectory() as tmp:
                from pathlib import Path
                test(Path(tmp))
        else:
            test()
        print(f"✓ {test.__name__}")
    print(f"\n{len(tests)} tests passed")


if __name__ == "__main__":
    run_all_tests()
