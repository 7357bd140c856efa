"""
Main Orchestrator for fluxinv
Command-line entry point: simulate an OSSE, run the inversion, score the
posterior and emit the cumulant example
"""

import argparse
import logging
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from data_sources import formats
from data_sources.osse_simulator import (
    OsseConfig,
    OsseSimulator,
    PlumeParams,
    scale_inventory,
    simulate_boxcox_field,
    synth_grid,
    synth_sensitivities,
    synth_stations,
)
from outputs.diagnostics import (
    RegionMask,
    aggregate_table,
    posterior_molefraction,
    score_row,
    summarize_flux,
    whole_domain,
)
from outputs.run_summary import build_run_summary, hash_inputs, write_manifest, write_run_summary
from processing.covariance import DiscrepancyParams, FluxCorrParams
from processing.cumulants import transport_example
from processing.errors import ConfigError, FluxInversionError, FormatError
from processing.model import HierarchicalModel, PriorBounds, SpatialGrid
from processing.samplers import HmcConfig, chain_rng, default_workers, run_gibbs
from run_config import SCHEMA_VERSION, RunConfig, load_run_config

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger('fluxinv')

# draws used by the CRPS estimator
CRPS_MAX_DRAWS = 4000


def configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT,
                        stream=sys.stderr, force=True)


def indicator_masks(grid: SpatialGrid) -> List[RegionMask]:
    """Whole domain plus one mask per 0/1 indicator covariate"""
    masks = [whole_domain(grid)]
    for j, name in enumerate(grid.covariate_names):
        column = grid.covariates[:, j]
        if np.all(np.isin(column, (0.0, 1.0))) and 0 < column.sum() < grid.n_cells:
            masks.append(RegionMask(f'region_{name}', tuple(np.array(grid.cell_ids)[column == 1.0])))
    return masks


class InversionRunner:
    """Wires formats, simulation, model and samplers into one run"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.output_dir = config.resolve_path(config.get('run', 'output_dir'))
        os.makedirs(self.output_dir, exist_ok=True)

    def _out(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _path(self, section: str, key: str) -> Optional[str]:
        value = self.config.get(section, key)
        return self.config.resolve_path(value) if value else None

    def _truth_settings(self) -> Dict[str, object]:
        truth = self.config.section('truth')
        return {
            'theta1': FluxCorrParams(truth['theta11'], truth['theta12']) if truth['spatial'] else None,
            'tau1': truth['tau1'],
            'beta': truth['beta'],
            'lam': truth['lambda'],
        }

    # ------------------------------------------------------------ simulate

    def _grid(self) -> SpatialGrid:
        path = self._path('grid', 'path')
        if path:
            return formats.load_grid(path)
        g = self.config.section('grid')
        return synth_grid(g['nx'], g['ny'], g['lon0'], g['lat0'], g['dlon'], g['dlat'], g.get('split_lat'))

    def _osse_config(self) -> OsseConfig:
        cfg = self.config
        truth = cfg.section('truth')
        disc = cfg.section('discrepancy')
        obs = cfg.section('observation')
        missing = obs.get('missing_slots')
        return OsseConfig(
            discrepancy=DiscrepancyParams(disc['tau2'], disc['a'], disc['d']),
            variance=obs['variance'],
            truth_source=truth['source'],
            truth_path=self._path('truth', 'path'),
            tau1=truth['tau1'],
            beta=tuple(truth['beta']),
            theta11=truth['theta11'],
            theta12=truth['theta12'],
            lam=truth['lambda'],
            spatial=truth['spatial'],
            missing_fraction=obs['missing_fraction'],
            missing_slots=tuple(missing) if missing is not None else None,
            holdout_fraction=obs['holdout_fraction'],
        )

    def _inventory(self, grid: SpatialGrid, truth: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        inv = self.config.section('inventory')
        source = inv['source']
        if source == 'truth':
            inventory = truth.copy()
        elif source == 'boxcox':
            s = self._truth_settings()
            inventory = simulate_boxcox_field(grid, s['theta1'], s['tau1'], s['beta'], s['lam'], rng)
        else:
            path = self.config.resolve_path(self.config.require('inventory', 'path'))
            inventory = formats.load_inventory(path, grid)
        target_mean, target_var = inv.get('target_mean'), inv.get('target_variance')
        if (target_mean is None) != (target_var is None):
            raise ConfigError("target_mean and target_variance go together", 'inventory.target_mean')
        if target_mean is not None:
            inventory = scale_inventory(inventory, target_mean, target_var)
            logger.info(f"Inventory rescaled to mean {target_mean}, variance {target_var}")
        return inventory

    def simulate(self) -> Dict[str, str]:
        """Synthesize (or load) inputs, simulate readings and write everything infer needs"""
        rng = np.random.default_rng(self.config.seed)
        grid = self._grid()
        stations_path = self._path('stations', 'path')
        stations = (formats.load_stations(stations_path) if stations_path
                    else synth_stations(grid, self.config.get('stations', 'count'), rng))

        osse = OsseSimulator(self._osse_config())
        inventory_truth = formats.load_inventory(osse.config.truth_path, grid) if osse.config.truth_source == 'inventory' else None
        truth = osse.true_flux(grid, rng, inventory_truth)

        sens_cfg = self.config.section('sensitivities')
        sens_path = self._path('sensitivities', 'path')
        if sens_path:
            stack = formats.load_sensitivities(sens_path, grid, stations)
        else:
            plume = PlumeParams(**{k: sens_cfg[k] for k in (
                'signal_ppb', 'wind_mean_deg', 'wind_ar', 'wind_sd_deg',
                'plume_length', 'plume_width', 'plume_spread', 'near_field')})
            stack = synth_sensitivities(grid, stations, sens_cfg['T'], rng, plume, typical_flux=float(truth.mean()))

        result = osse.simulate(truth, stations, stack, rng)
        inventory = self._inventory(grid, truth, rng)

        paths = {
            'grid': formats.write_grid(grid, self._out('grid.csv')),
            'stations': formats.write_stations(stations, self._out('stations.csv')),
            'truth_flux': formats.write_inventory(truth, grid, self._out('truth_flux.csv')),
            'inventory': formats.write_inventory(inventory, grid, self._out('inventory.csv')),
            'observations': formats.write_observations(result.observations, stations, self._out('observations.csv')),
            'molefraction_truth': formats.write_molefraction_truth(
                result.molefraction, stations, self._out('molefraction_truth.csv')),
            'masks': formats.write_masks(indicator_masks(grid), self._out('masks.csv')),
        }
        if not sens_path:
            paths['sensitivities'] = formats.write_sensitivities(stack, grid, stations, self._out('sensitivities.csv'))
        resolved = self.config.to_dict()
        resolved['run']['output_dir'] = os.path.basename(self.output_dir)
        resolved['data'] = {'n_time': stack.n_time, 'held_out_slots': int(result.holdout_slots.size)}
        paths['manifest'] = write_manifest(resolved, paths, self._out('manifest.json'))
        logger.info(f"Simulated {result.observations.n_readings} readings over {grid.n_cells} cells")
        return paths

    # ------------------------------------------------------------ infer

    def _bounds(self) -> PriorBounds:
        p = self.config.section('priors')
        return PriorBounds(
            log_inv_tau2=tuple(p['log_inv_tau2']),
            a=tuple(p['a']),
            log_d=tuple(p['log_d']),
            theta11=tuple(p['theta11']),
            theta12=tuple(p['theta12']),
            lam=tuple(p['lambda']),
        )

    def _input_paths(self) -> Dict[str, str]:
        paths = {}
        for key in ('grid', 'stations', 'sensitivities', 'inventory', 'observations'):
            paths[key] = self.config.resolve_path(self.config.require('data', key))
        return paths

    def load_model(self) -> HierarchicalModel:
        paths = self._input_paths()
        grid = formats.load_grid(paths['grid'])
        stations = formats.load_stations(paths['stations'])
        stack = formats.load_sensitivities(paths['sensitivities'], grid, stations, self.config.get('data', 'n_time'))
        observations = formats.load_observations(paths['observations'], stations, stack.n_time)
        inventory = formats.load_inventory(paths['inventory'], grid)
        return HierarchicalModel(grid, stations, stack, observations, inventory,
                                 bounds=self._bounds(), variant=self.config.get('model', 'variant'))

    def infer(self) -> Dict[str, str]:
        """Run the Gibbs sampler and write draws, mole-fraction predictions and the run summary"""
        model = self.load_model()
        m = self.config.section('mcmc')
        hmc = HmcConfig(step_size=m['step_size'], leapfrog_min=m['leapfrog_min'],
                        leapfrog_max=m['leapfrog_max'], adapt_window=m['adapt_window'])
        seed = self.config.seed
        samples = run_gibbs(model, m['chains'], m['iterations'], m['burn_in'], m['thin'], seed, hmc,
                            max_workers=default_workers(), progress_every=m['progress_every'])

        paths = formats.write_samples(samples, self.output_dir)
        unobserved = np.flatnonzero(~model.observations.observed_mask())
        if unobserved.size:
            draws = posterior_molefraction(samples, model, chain_rng(seed, m['chains']), unobserved)
            paths['molefraction_samples'] = formats.write_molefraction_samples(
                draws, unobserved, model.stations, self._out('molefraction_samples.csv'))

        content_hash = hash_inputs(self._input_paths().values(), self.config.source_text)
        records = build_run_summary(samples, model, content_hash, self.config.get('run', 'model_id'))
        paths['summary'] = write_run_summary(records, self._out('run_summary.jsonl'))
        logger.info(f"Kept {samples.n_draws} draws, HMC acceptance per chain "
                    f"{samples.acceptance_rates().round(3).tolist()}")
        return paths


def cmd_simulate(args: argparse.Namespace) -> Dict[str, str]:
    config = load_run_config(args.config, seed=args.seed, output_dir=args.out_dir)
    return InversionRunner(config).simulate()


def cmd_infer(args: argparse.Namespace) -> Dict[str, str]:
    config = load_run_config(args.config, seed=args.seed, output_dir=args.out_dir)
    return InversionRunner(config).infer()


def cmd_diagnose(args: argparse.Namespace) -> Dict[str, str]:
    """Score posterior draws against the truth and summarize regional totals"""
    grid = formats.load_grid(args.grid)
    truth = formats.load_inventory(args.truth, grid)
    samples = formats.load_samples(args.samples)
    if set(samples.cell_ids) != set(grid.cell_ids):
        raise FormatError("posterior draws and grid cover different cells", args.samples)
    order = [samples.cell_ids.index(c) for c in grid.cell_ids]
    samples.flux = samples.flux[:, order]
    samples.cell_ids = grid.cell_ids

    mf_truth = mf_draws = None
    mf_path = os.path.join(args.samples, 'molefraction_samples.csv')
    if args.molefraction_truth and args.stations and os.path.exists(mf_path):
        stations = formats.load_stations(args.stations)
        field_true = formats.load_molefraction_truth(args.molefraction_truth, stations)
        slots, mf_draws = formats.load_molefraction_samples(mf_path, stations)
        if slots.size and slots.max() >= field_true.size:
            raise FormatError("mole-fraction draws reference slots beyond the truth", mf_path)
        mf_truth = field_true.ravel()[slots]

    masks = formats.load_masks(args.masks, grid) if args.masks else [whole_domain(grid)]
    out_dir = args.out_dir or args.samples
    row = score_row(args.model_id, truth, samples.flux, mf_truth, mf_draws, max_draws=CRPS_MAX_DRAWS)
    return {
        'scores': formats.write_scores([row], os.path.join(out_dir, 'scores.csv')),
        'aggregates': formats.write_aggregates(aggregate_table(samples, masks, truth),
                                               os.path.join(out_dir, 'aggregates.csv')),
        'flux_summary': formats.write_flux_summary(summarize_flux(samples, truth),
                                                   os.path.join(out_dir, 'flux_summary.csv')),
    }


def cmd_cumulants_demo(args: argparse.Namespace) -> Dict[str, str]:
    example = transport_example(args.grid_n)
    return formats.write_cumulant_example(example, args.out_dir)


def build_parser() -> argparse.ArgumentParser:
    epilog = f'config schema version {SCHEMA_VERSION} (config/config_schema.json)'
    parser = argparse.ArgumentParser(
        prog='fluxinv',
        description='Bayesian trace-gas flux inversion with a Box-Cox spatial flux model',
        epilog=epilog,
    )
    parser.add_argument('--log-level', default=os.getenv('FLUXINV_LOG_LEVEL', 'INFO'),
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='logging verbosity')
    commands = parser.add_subparsers(dest='command', required=True)

    def run_parser(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text, epilog=epilog)
        sub.add_argument('--config', required=True, help='INI run configuration')
        sub.add_argument('--seed', type=int, help='override [run] seed')
        sub.add_argument('--out-dir', help='override [run] output_dir')
        return sub

    run_parser('simulate', 'simulate an OSSE and write its inputs, truth and readings').set_defaults(func=cmd_simulate)
    run_parser('infer', 'run the MCMC inversion and write posterior draws').set_defaults(func=cmd_infer)

    diag = commands.add_parser('diagnose', help='score posterior draws against the truth', epilog=epilog)
    diag.add_argument('--grid', required=True, help='grid CSV')
    diag.add_argument('--truth', required=True, help='true flux CSV (inventory schema)')
    diag.add_argument('--samples', required=True, help='directory holding flux_samples.csv')
    diag.add_argument('--masks', help='region masks CSV')
    diag.add_argument('--stations', help='stations CSV, for mole-fraction scores')
    diag.add_argument('--molefraction-truth', help='molefraction_truth CSV, for mole-fraction scores')
    diag.add_argument('--model-id', default='model', help='label of the scores row')
    diag.add_argument('--out-dir', help='output directory (defaults to the samples directory)')
    diag.set_defaults(func=cmd_diagnose)

    demo = commands.add_parser('cumulants-demo', help='write cumulant slices of the 1-D example', epilog=epilog)
    demo.add_argument('--grid-n', type=int, default=100, help='number of grid points on [-10, 10]')
    demo.add_argument('--out-dir', required=True, help='output directory')
    demo.set_defaults(func=cmd_cumulants_demo)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit status"""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    start = time.time()
    try:
        paths = args.func(args)
    except FluxInversionError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
    except KeyboardInterrupt:
        logger.warning("Interrupted by user")
        return 130
    for name, path in sorted(paths.items()):
        logger.info(f"  {name}: {path}")
    logger.info(f"{args.command} finished in {time.time() - start:.1f}s")
    return 0


if __name__ == '__main__':
    sys.exit(main())
