"""Run configuration

A run is described by a single JSON document. Missing blocks and fields take the defaults below;
command-line flags are merged over the document with :func:`apply_overrides`. Every run persists
its effective configuration so it can be reproduced bit for bit.
"""
import copy
import math
from dataclasses import asdict, dataclass, field, fields

from . import const
from .exceptions import ConfigError, InvalidInputError
from .market import MarketParams
from .util import io

__all__ = ['SolverConfig', 'MonteCarloConfig', 'SimulateConfig', 'OracleConfig',
           'ClosedFormConfig', 'RunConfig', 'apply_overrides', 'load_config']

MAX_SEED = 2 ** 64 - 1

POLICY_KINDS = ('optimal', 'exponential', 'constant')


def _positive(name, value, integer=False, optional=False):
    if value is None and optional:
        return
    if integer:
        ok = isinstance(value, int) and not isinstance(value, bool) and value > 0
    else:
        ok = (isinstance(value, (int, float)) and not isinstance(value, bool)
              and math.isfinite(value) and value > 0)
    if not ok:
        raise ConfigError('must be a positive {}, got {!r}'
                          .format('integer' if integer else 'number', value), name)


def _flag(name, value):
    if not isinstance(value, bool):
        raise ConfigError('must be true or false, got {!r}'.format(value), name)


def _policy(name, spec):
    if not isinstance(spec, dict) or spec.get('kind') not in POLICY_KINDS:
        raise ConfigError('policy must be an object with kind in {}'.format(POLICY_KINDS), name)
    if spec['kind'] == 'exponential':
        _positive(name + '.c', spec.get('c'))
    elif spec['kind'] == 'constant':
        _positive(name + '.T', spec.get('T'))


@dataclass
class SolverConfig:
    x_max: float = const.X_MAX
    tol: float = const.ODE_TOL
    grid_points: int = const.GRID_POINTS
    x_series_cutoff: float = None

    def validate(self, prefix='solver'):
        _positive(prefix + '.x_max', self.x_max)
        _positive(prefix + '.tol', self.tol)
        _positive(prefix + '.grid_points', self.grid_points, integer=True)
        _positive(prefix + '.x_series_cutoff', self.x_series_cutoff, optional=True)


@dataclass
class MonteCarloConfig:
    n_paths: int = const.MC_PATHS
    horizon: float = None
    n_steps: int = const.MC_STEPS
    substeps: int = const.MC_SUBSTEPS
    antithetic: bool = True
    block: int = const.MC_BLOCK
    workers: int = None
    drift_compensation: bool = True
    policy: dict = field(default_factory=lambda: {'kind': 'optimal'})
    policies: list = field(default_factory=lambda: [
        {'kind': 'optimal'}] + [{'kind': 'exponential', 'c': c} for c in (0.1, 0.5, 1.0, 2.0)])

    def validate(self, prefix='montecarlo'):
        _positive(prefix + '.n_paths', self.n_paths, integer=True)
        if self.n_paths < 2:
            raise ConfigError('must be >= 2', prefix + '.n_paths')
        _positive(prefix + '.horizon', self.horizon, optional=True)
        _positive(prefix + '.n_steps', self.n_steps, integer=True)
        _positive(prefix + '.substeps', self.substeps, integer=True)
        _positive(prefix + '.block', self.block, integer=True)
        _positive(prefix + '.workers', self.workers, integer=True, optional=True)
        _flag(prefix + '.antithetic', self.antithetic)
        _flag(prefix + '.drift_compensation', self.drift_compensation)
        if self.antithetic and self.n_paths % 2:
            raise ConfigError('must be even with antithetic sampling', prefix + '.n_paths')
        _policy(prefix + '.policy', self.policy)
        if not isinstance(self.policies, list) or len(self.policies) < 2:
            raise ConfigError('must list at least two policies', prefix + '.policies')
        for i, spec in enumerate(self.policies):
            _policy('{}.policies[{}]'.format(prefix, i), spec)


@dataclass
class SimulateConfig:
    horizon: float = None
    n_steps: int = const.MC_STEPS
    substeps: int = const.MC_SUBSTEPS
    stream: int = 0
    drift_compensation: bool = False
    policy: dict = field(default_factory=lambda: {'kind': 'optimal'})

    def validate(self, prefix='simulate'):
        _positive(prefix + '.horizon', self.horizon, optional=True)
        _positive(prefix + '.n_steps', self.n_steps, integer=True)
        _positive(prefix + '.substeps', self.substeps, integer=True)
        if not (isinstance(self.stream, int) and 0 <= self.stream <= MAX_SEED):
            raise ConfigError('must be an unsigned 64-bit integer', prefix + '.stream')
        _flag(prefix + '.drift_compensation', self.drift_compensation)
        _policy(prefix + '.policy', self.policy)


@dataclass
class OracleConfig:
    horizon: float = 40.0
    x_max: float = 8.0
    nx: int = 400
    nt: int = None
    cfl: float = const.ORACLE_CFL
    saved_levels: int = const.ORACLE_SAVED_LEVELS
    x_lo: float = 0.1
    x_hi: float = 5.0

    def validate(self, prefix='oracle'):
        _positive(prefix + '.horizon', self.horizon)
        _positive(prefix + '.x_max', self.x_max)
        _positive(prefix + '.nx', self.nx, integer=True)
        _positive(prefix + '.nt', self.nt, integer=True, optional=True)
        _positive(prefix + '.cfl', self.cfl)
        if self.cfl > 1:
            raise ConfigError('must be <= 1', prefix + '.cfl')
        _positive(prefix + '.saved_levels', self.saved_levels, integer=True)
        if not 0 <= self.x_lo < self.x_hi <= self.x_max:
            raise ConfigError('need 0 <= x_lo < x_hi <= x_max', prefix + '.x_lo')


@dataclass
class ClosedFormConfig:
    y_min: float = 1e-3
    y_max: float = 1e3
    n_y: int = 201
    x_max: float = 10.0
    n_x: int = 201

    def validate(self, prefix='closed_form'):
        for name in ('y_min', 'y_max', 'x_max'):
            _positive('{}.{}'.format(prefix, name), getattr(self, name))
        for name in ('n_y', 'n_x'):
            _positive('{}.{}'.format(prefix, name), getattr(self, name), integer=True)
        if self.y_min >= self.y_max:
            raise ConfigError('must be below y_max', prefix + '.y_min')


BLOCKS = {'solver': SolverConfig, 'montecarlo': MonteCarloConfig, 'simulate': SimulateConfig,
          'oracle': OracleConfig, 'closed_form': ClosedFormConfig}


def _block(name, cls, data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError('must be an object', name)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError('unknown field', '{}.{}'.format(name, unknown[0]))
    block = cls(**copy.deepcopy(data))
    block.validate(name)
    return block


@dataclass
class RunConfig:
    params: MarketParams
    seed: int = 0
    output_dir: str = 'out'
    value_function: str = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    montecarlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    closed_form: ClosedFormConfig = field(default_factory=ClosedFormConfig)

    def to_dict(self):
        d = {'params': self.params.to_dict(), 'seed': self.seed, 'output_dir': self.output_dir,
             'value_function': self.value_function}
        for name in BLOCKS:
            d[name] = asdict(getattr(self, name))
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError('configuration must be a JSON object')
        unknown = sorted(set(d) - {'params', 'seed', 'output_dir', 'value_function'} - set(BLOCKS))
        if unknown:
            raise ConfigError('unknown field', unknown[0])
        if 'params' not in d:
            raise ConfigError('market parameters are required', 'params')
        try:
            params = MarketParams.from_dict(d['params'])
        except KeyError as e:
            raise ConfigError('missing {}'.format(e), 'params') from e
        except (InvalidInputError, TypeError) as e:
            raise ConfigError(str(e), 'params') from e

        seed = d.get('seed', 0)
        if not (isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed <= MAX_SEED):
            raise ConfigError('must be an unsigned 64-bit integer, got {!r}'.format(seed), 'seed')
        output_dir = d.get('output_dir', 'out')
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigError('must be a non-empty path', 'output_dir')
        value_function = d.get('value_function')
        if value_function is not None and not isinstance(value_function, str):
            raise ConfigError('must be a path', 'value_function')

        blocks = {name: _block(name, block_cls, d.get(name)) for name, block_cls in BLOCKS.items()}
        return cls(params=params, seed=seed, output_dir=output_dir,
                   value_function=value_function, **blocks)

    def to_json(self, path):
        io.write_json(path, self.to_dict())


def apply_overrides(document, overrides):
    """Merge dotted-path `overrides` over `document`; ``None`` values are skipped

    :param dict document: configuration mapping (not modified)
    :param dict overrides: e.g. ``{'params.mu': -0.2, 'seed': 3}``
    :rtype: dict
    """
    merged = copy.deepcopy(document)
    for path, value in overrides.items():
        if value is None:
            continue
        node = merged
        *parents, leaf = path.split('.')
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError('must be an object', key)
        node[leaf] = value
    return merged


def load_config(path=None, overrides=None):
    """Read the document at `path` (if any), apply `overrides` and validate

    :rtype: RunConfig
    """
    document = {}
    if path is not None:
        try:
            document = io.read_json(path)
        except FileNotFoundError as e:
            raise ConfigError('configuration file not found: {}'.format(path)) from e
        except ValueError as e:
            raise ConfigError('invalid JSON in {}: {}'.format(path, e)) from e
    return RunConfig.from_dict(apply_overrides(document, overrides or {}))
