"""
MCMC Samplers
Univariate slice sampling, Hamiltonian Monte Carlo with step-size adaptation,
and the blocked Gibbs driver that runs independent chains
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .covariance import DiscrepancyParams
from .errors import (
    ConditioningError,
    DomainError,
    FluxInversionError,
    ImproprietyError,
    ParameterError,
    SamplerError,
)
from .model import (
    DISCREPANCY_COORDS,
    FluxConditional,
    FluxTarget,
    HierarchicalModel,
    log_cond_discrepancy,
    log_cond_fluxparams,
)

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

MAX_STEPS_OUT = 20
MAX_SHRINK = 200
INIT_ATTEMPTS = 100
INIT_JITTER_SD = 0.1

LogDensity = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class HmcConfig:
    """
    HMC settings

    Attributes:
        step_size: Initial leapfrog step size
        leapfrog_min: Smallest number of leapfrog steps per transition
        leapfrog_max: Largest number of leapfrog steps per transition
        adapt_window: Iterations during which the step size adapts
        target_accept: Acceptance probability the adaptation aims for
        accept_band: Range of long-run acceptance regarded as healthy
    """
    step_size: float = 0.01
    leapfrog_min: int = 10
    leapfrog_max: int = 25
    adapt_window: int = 1000
    target_accept: float = 0.65
    accept_band: Tuple[float, float] = (0.3, 0.8)

    def __post_init__(self):
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ParameterError(f"step size must be positive, got {self.step_size}")
        if not (1 <= self.leapfrog_min <= self.leapfrog_max):
            raise ParameterError(f"need 1 <= leapfrog_min <= leapfrog_max, got {self.leapfrog_min}, {self.leapfrog_max}")
        if self.adapt_window < 0:
            raise ParameterError("adaptation window must be non-negative")
        lo, hi = self.accept_band
        if not (0.0 < lo < hi < 1.0):
            raise ParameterError(f"acceptance band must satisfy 0 < lo < hi < 1, got {self.accept_band}")
        if not (0.0 < self.target_accept < 1.0):
            raise ParameterError("target acceptance must lie in (0, 1)")


@dataclass
class ChainState:
    """Mutable state of one chain"""
    flux: np.ndarray
    disc_coords: np.ndarray
    flux_coords: np.ndarray
    step_size: float
    chain: int = 0
    iteration: int = 0

    def discrepancy(self) -> DiscrepancyParams:
        return DiscrepancyParams.from_sampling(self.disc_coords)


@dataclass
class PosteriorSamples:
    """
    Retained draws from all chains, merged by chain index

    Attributes:
        flux: (n_draws, n1) draws of Y1
        params: Parameter name -> (n_draws,) draws; tau2, a and d always,
            then whichever of theta11, theta12, lambda the variant samples
        chain: Chain label per draw
        iteration: Iteration label per draw (1-based)
        hmc_accept: (n_chains, n_iter) per-iteration HMC acceptance indicators
        step_size: Final HMC step size per chain
        cell_ids: Grid cell labels for the flux columns
    """
    flux: np.ndarray
    params: Dict[str, np.ndarray]
    chain: np.ndarray
    iteration: np.ndarray
    hmc_accept: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))
    step_size: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cell_ids: Tuple[str, ...] = ()
    wall_time: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.flux.shape[0]

    @property
    def param_names(self) -> List[str]:
        return list(self.params)

    def acceptance_rates(self) -> np.ndarray:
        if self.hmc_accept.size == 0:
            return np.zeros(0)
        return self.hmc_accept.mean(axis=1)

    def discrepancy(self, draw: int) -> DiscrepancyParams:
        return DiscrepancyParams(
            tau2=float(self.params['tau2'][draw]),
            a=float(self.params['a'][draw]),
            d=float(self.params['d'][draw]),
        )


class HmcResult(NamedTuple):
    accepted: bool
    state: np.ndarray
    log_density: float
    accept_prob: float


def _safe_eval(log_density: LogDensity, x: np.ndarray) -> float:
    try:
        value = float(log_density(x))
    except (ConditioningError, ImproprietyError) as e:
        logger.debug(f"Trial point treated as zero density: {e}")
        return -np.inf
    return value if not np.isnan(value) else -np.inf


def slice_sweep(log_density: LogDensity, current: np.ndarray, widths: np.ndarray,
                rng: np.random.Generator, current_logp: Optional[float] = None,
                max_steps_out: int = MAX_STEPS_OUT,
                max_shrink: int = MAX_SHRINK) -> Tuple[np.ndarray, float]:
    """
    One sweep of univariate stepping-out slice updates in random coordinate order

    Returns:
        Tuple of (new point, its log-density)

    Raises:
        SamplerError: If the current point has no finite density or shrinkage
            does not find a point on the slice
    """
    x = np.array(current, dtype=float)
    widths = np.broadcast_to(np.asarray(widths, dtype=float), x.shape)
    logp = float(log_density(x)) if current_logp is None else float(current_logp)
    if not np.isfinite(logp):
        raise SamplerError("slice sampler started from a point with no finite density",
                           {'point': np.round(x, 6).tolist()})

    for i in rng.permutation(x.size):
        level = logp - rng.exponential()
        x0 = x[i]
        left = x0 - widths[i] * rng.uniform()
        right = left + widths[i]

        trial = x.copy()
        for _ in range(max_steps_out):
            trial[i] = left
            if _safe_eval(log_density, trial) <= level:
                break
            left -= widths[i]
        for _ in range(max_steps_out):
            trial[i] = right
            if _safe_eval(log_density, trial) <= level:
                break
            right += widths[i]

        for attempt in range(max_shrink):
            trial[i] = left + rng.uniform() * (right - left)
            trial_logp = _safe_eval(log_density, trial)
            if trial_logp > level:
                x = trial
                logp = trial_logp
                break
            if trial[i] < x0:
                left = trial[i]
            else:
                right = trial[i]
        else:
            raise SamplerError(
                "slice shrinkage did not find a point on the slice",
                {'coordinate': int(i), 'level': level, 'interval': (left, right), 'attempts': max_shrink},
            )
    return x, logp


def slice_sample_block(log_density: LogDensity, current: np.ndarray, widths: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """Slice-update every coordinate of a block once"""
    return slice_sweep(log_density, current, widths, rng)[0]


def leapfrog(grad: Callable[[np.ndarray], np.ndarray], position: np.ndarray, momentum: np.ndarray,
             step_size: float, n_steps: int,
             support: Optional[Callable[[np.ndarray], bool]] = None) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Leapfrog integration with identity mass

    Returns:
        Tuple of (position, momentum), or None if the trajectory leaves the support
        or reaches a point where the gradient is undefined

    Raises:
        SamplerError: If the gradient is not finite
    """
    x = np.array(position, dtype=float)
    p = np.array(momentum, dtype=float)

    def checked_grad(point: np.ndarray) -> Optional[np.ndarray]:
        try:
            g = np.asarray(grad(point), dtype=float)
        except (DomainError, ImproprietyError) as e:
            logger.debug(f"Leapfrog stopped: {e}")
            return None
        if not np.all(np.isfinite(g)):
            raise SamplerError("non-finite gradient in leapfrog", {'step_size': step_size})
        return g

    g = checked_grad(x)
    if g is None:
        return None
    p = p + 0.5 * step_size * g
    for step in range(n_steps):
        x = x + step_size * p
        if support is not None and not support(x):
            return None
        g = checked_grad(x)
        if g is None:
            return None
        p = p + (step_size if step < n_steps - 1 else 0.5 * step_size) * g
    return x, p


def hmc_step(log_density: LogDensity, grad: Callable[[np.ndarray], np.ndarray], current: np.ndarray,
             cfg: HmcConfig, rng: np.random.Generator, step_size: Optional[float] = None,
             current_logp: Optional[float] = None,
             support: Optional[Callable[[np.ndarray], bool]] = None,
             n_steps: Optional[int] = None) -> HmcResult:
    """
    One HMC transition with a Metropolis correction

    A trajectory that leaves the support, or ends at -inf density, is rejected
    and the current state is returned unchanged.
    """
    current = np.asarray(current, dtype=float)
    eps = cfg.step_size if step_size is None else float(step_size)
    logp0 = float(log_density(current)) if current_logp is None else float(current_logp)
    if not np.isfinite(logp0):
        raise SamplerError("HMC started from a point with no finite density")
    if n_steps is None:
        n_steps = int(rng.integers(cfg.leapfrog_min, cfg.leapfrog_max + 1))

    p0 = rng.standard_normal(current.shape)
    end = leapfrog(grad, current, p0, eps, n_steps, support)
    rejected = HmcResult(False, current, logp0, 0.0)
    if end is None:
        rng.uniform()
        return rejected
    x1, p1 = end
    logp1 = _safe_eval(log_density, x1)
    if not np.isfinite(logp1):
        rng.uniform()
        return rejected

    log_alpha = (logp1 - 0.5 * float(p1 @ p1)) - (logp0 - 0.5 * float(p0 @ p0))
    if np.isnan(log_alpha):
        log_alpha = -np.inf
    accept_prob = float(np.exp(min(0.0, log_alpha)))
    if np.log(rng.uniform()) < log_alpha:
        return HmcResult(True, x1, logp1, accept_prob)
    return HmcResult(False, current, logp0, accept_prob)


def adapt_step_size(cfg: HmcConfig, accept_rate: float, iteration: int,
                    step_size: Optional[float] = None) -> float:
    """
    Robbins-Monro update ln eps += 0.5 t^-0.6 (acc - target) inside the adaptation window

    Outside the window the step size is returned unchanged.
    """
    eps = cfg.step_size if step_size is None else float(step_size)
    if iteration < 1 or iteration > cfg.adapt_window:
        return eps
    rate = 0.5 * iteration ** -0.6
    return float(eps * np.exp(rate * (accept_rate - cfg.target_accept)))


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Independent counter-based stream per chain"""
    return np.random.Generator(np.random.Philox(seed).jumped(chain + 1))


def _uniform_in(lower: np.ndarray, upper: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # open interval: never return the lower bound itself
    return lower + (upper - lower) * (1.0 - rng.uniform(size=lower.shape))


def initialize_chain(model: HierarchicalModel, rng: np.random.Generator,
                     cfg: Optional[HmcConfig] = None, chain: int = 0) -> ChainState:
    """
    Starting state: parameters uniform inside the prior bounds and Y1 a
    lognormally jittered copy of the inventory

    Raises:
        SamplerError: If no start with finite densities is found
    """
    cfg = cfg or HmcConfig()
    disc_lower, disc_upper = model.bounds.arrays(DISCREPANCY_COORDS)
    flux_names = model.free_flux_params
    flux_lower, flux_upper = model.bounds.arrays(flux_names)

    for attempt in range(1, INIT_ATTEMPTS + 1):
        disc_coords = _uniform_in(disc_lower, disc_upper, rng)
        flux_coords = _uniform_in(flux_lower, flux_upper, rng)
        flux = model.inventory * np.exp(INIT_JITTER_SD * rng.standard_normal(model.n_cells))
        try:
            disc = DiscrepancyParams.from_sampling(disc_coords)
            theta1, lam = model.flux_params_from_coords(flux_coords)
            finite = (
                np.isfinite(log_cond_discrepancy(disc, model, flux))
                and np.isfinite(log_cond_fluxparams(theta1, lam, flux, model.inventory, model))
                and np.isfinite(FluxTarget(model, disc, theta1, lam).log_density(flux))
            )
        except (ConditioningError, ImproprietyError, ParameterError) as e:
            logger.debug(f"Chain {chain} start attempt {attempt} failed: {e}")
            finite = False
        if finite:
            return ChainState(flux, disc_coords, flux_coords, cfg.step_size, chain=chain)
        logger.warning(f"Chain {chain}: initial state {attempt} has no finite density, redrawing")
    raise SamplerError(f"chain {chain}: no valid initial state after {INIT_ATTEMPTS} attempts")


def _discrepancy_target(model: HierarchicalModel, flux: np.ndarray) -> LogDensity:
    def target(coords: np.ndarray) -> float:
        disc = model.discrepancy_from_coords(coords)
        if disc is None:
            return -np.inf
        return log_cond_discrepancy(disc, model, flux)
    return target


def _fluxparam_target(model: HierarchicalModel, flux: np.ndarray) -> LogDensity:
    def target(coords: np.ndarray) -> float:
        resolved = model.flux_params_from_coords(coords)
        if resolved is None:
            return -np.inf
        theta1, lam = resolved
        return log_cond_fluxparams(theta1, lam, flux, model.inventory, model)
    return target


def gibbs_iteration(model: HierarchicalModel, state: ChainState, cfg: HmcConfig,
                    rng: np.random.Generator) -> HmcResult:
    """
    One pass over the three blocks: discrepancy parameters (slice), Y1 (HMC),
    flux parameters (slice). Updates state in place.
    """
    state.iteration += 1
    disc_lower, disc_upper = model.bounds.arrays(DISCREPANCY_COORDS)
    state.disc_coords, _ = slice_sweep(
        _discrepancy_target(model, state.flux), state.disc_coords, (disc_upper - disc_lower) / 10.0, rng
    )
    disc = state.discrepancy()

    theta1, lam = model.flux_params_from_coords(state.flux_coords)
    target = FluxTarget(model, disc, theta1, lam, FluxConditional(model, disc))
    result = hmc_step(target.log_density, target.gradient, state.flux, cfg, rng,
                      step_size=state.step_size, support=target.in_support)
    state.flux = result.state
    state.step_size = adapt_step_size(cfg, result.accept_prob, state.iteration, state.step_size)

    names = model.free_flux_params
    if names:
        flux_lower, flux_upper = model.bounds.arrays(names)
        state.flux_coords, _ = slice_sweep(
            _fluxparam_target(model, state.flux), state.flux_coords, (flux_upper - flux_lower) / 10.0, rng
        )
    return result


def retained_iterations(n_iter: int, burn_in: int, thin: int) -> np.ndarray:
    """1-based iterations kept after burn-in and thinning"""
    if thin < 1:
        raise ParameterError(f"thin must be at least 1, got {thin}")
    if burn_in < 0 or n_iter <= burn_in:
        raise ParameterError(f"need n_iter > burn_in >= 0, got n_iter={n_iter}, burn_in={burn_in}")
    kept = np.arange(burn_in + thin, n_iter + 1, thin)
    if kept.size == 0:
        raise ParameterError("schedule retains no draws")
    return kept


def _run_chain(model: HierarchicalModel, chain: int, n_iter: int, burn_in: int, thin: int,
               seed: int, cfg: HmcConfig, progress_every: int) -> Dict[str, np.ndarray]:
    rng = chain_rng(seed, chain)
    state = initialize_chain(model, rng, cfg, chain)
    kept = set(retained_iterations(n_iter, burn_in, thin).tolist())
    names = model.free_flux_params

    flux_draws, disc_draws, flux_param_draws, iters = [], [], [], []
    accepted = np.zeros(n_iter, dtype=bool)
    accept_prob = np.zeros(n_iter)

    for i in range(1, n_iter + 1):
        try:
            result = gibbs_iteration(model, state, cfg, rng)
        except FluxInversionError as e:
            raise SamplerError(
                f"chain {chain} aborted at iteration {i}: {e}",
                {'chain': chain, 'iteration': i, 'step_size': state.step_size},
            ) from e
        accepted[i - 1] = result.accepted
        accept_prob[i - 1] = result.accept_prob
        if i in kept:
            flux_draws.append(state.flux.copy())
            disc = state.discrepancy()
            disc_draws.append((disc.tau2, disc.a, disc.d))
            flux_param_draws.append(state.flux_coords.copy())
            iters.append(i)
        if progress_every and i % progress_every == 0:
            logger.info(
                f"chain {chain} iter {i}/{n_iter} hmc_acc={accepted[:i].mean():.2f} eps={state.step_size:.4g}"
            )

    recent = accept_prob[min(cfg.adapt_window, n_iter - 1):].mean()
    lo, hi = cfg.accept_band
    if not lo <= recent <= hi:
        logger.warning(f"chain {chain}: post-adaptation HMC acceptance {recent:.2f} outside ({lo}, {hi})")

    return {
        'flux': np.array(flux_draws),
        'disc': np.array(disc_draws),
        'flux_params': np.array(flux_param_draws).reshape(len(iters), len(names)),
        'iteration': np.array(iters, dtype=int),
        'accepted': accepted,
        'step_size': state.step_size,
    }


def default_workers() -> int:
    """Worker cap from FLUXINV_THREADS, else the CPU count"""
    env = os.environ.get('FLUXINV_THREADS')
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"Ignoring non-integer FLUXINV_THREADS={env!r}")
    return os.cpu_count() or 1


def run_gibbs(model: HierarchicalModel, n_chains: int, n_iter: int, burn_in: int, thin: int, seed: int,
              cfg: Optional[HmcConfig] = None, max_workers: Optional[int] = None,
              progress_every: int = 500) -> PosteriorSamples:
    """
    Run independent Gibbs chains and merge their retained draws by chain index

    Each chain owns a Philox stream jumped by its index, so results do not
    depend on how many chains run at once.
    """
    cfg = cfg or HmcConfig()
    if n_chains < 1:
        raise ParameterError(f"need at least one chain, got {n_chains}")
    retained_iterations(n_iter, burn_in, thin)
    workers = min(n_chains, max_workers or default_workers())
    logger.info(
        f"Running {n_chains} chains x {n_iter} iterations (burn-in {burn_in}, thin {thin}) "
        f"on {workers} worker(s), variant {model.variant}"
    )

    start = time.time()
    args = [(model, c, n_iter, burn_in, thin, seed, cfg, progress_every) for c in range(n_chains)]
    if workers == 1:
        results = [_run_chain(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chain, *a) for a in args]
            results = [f.result() for f in futures]
    wall_time = time.time() - start

    names = model.free_flux_params
    disc = np.concatenate([r['disc'] for r in results])
    flux_params = np.concatenate([r['flux_params'] for r in results])
    params = {'tau2': disc[:, 0], 'a': disc[:, 1], 'd': disc[:, 2]}
    for j, name in enumerate(names):
        params[name] = flux_params[:, j]

    samples = PosteriorSamples(
        flux=np.concatenate([r['flux'] for r in results]),
        params=params,
        chain=np.concatenate([np.full(r['iteration'].size, c) for c, r in enumerate(results)]),
        iteration=np.concatenate([r['iteration'] for r in results]),
        hmc_accept=np.stack([r['accepted'] for r in results]),
        step_size=np.array([r['step_size'] for r in results]),
        cell_ids=model.grid.cell_ids,
        wall_time=wall_time,
    )
    logger.info(f"Retained {samples.n_draws} draws in {wall_time:.1f}s")
    return samples
