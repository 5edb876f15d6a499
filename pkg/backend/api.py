from flask import Flask, jsonify, request
from flask_cors import CORS
import logging
import os
import sys

# Fix imports to work whether running from project root or backend directory
if __name__ == '__main__':
    current_dir = os.path.dirname(os.path.abspath(__file__))
    if current_dir not in sys.path:
        sys.path.insert(0, current_dir)

from errors import ConfigurationError, DomainError, SimulationError
from experiments import PRESETS, resolve_preset, run_experiment
from population import CATEGORIES, STAFF_LEVELS
from scenario import ScenarioConfig, apply_overrides, parse_scenario, scenario_digest, serialize_scenario
from tariff import EvStrategy, ev_charge_table
from store import load_series
from validation import (
    BASS_TOLERANCE_FRACTION, bass_params_for, bass_peak_time, reduced_scenario, validate_reduced_mode, within_tolerance,
)

logging.basicConfig(
    level=os.environ.get('LOG_LEVEL', 'INFO').upper(),
    format='%(asctime)s %(levelname)s %(name)s: %(message)s',
)
logger = logging.getLogger(__name__)

app = Flask(__name__)
CORS(app)

# Replications per request are capped; larger batches belong on the CLI
MAX_API_REPLICATIONS = int(os.environ.get('MAX_API_REPLICATIONS', '20'))
API_WORKERS = int(os.environ.get('SIM_WORKERS', '1'))
# Runs are also appended here when set
DATABASE_URL = os.environ.get('DATABASE_URL')

# ============================================================================
# ERROR HANDLERS
# ============================================================================

@app.errorhandler(ConfigurationError)
def configuration_error(e):
    return jsonify({'error': e.message, 'key': e.key, 'line': e.line}), 400

@app.errorhandler(DomainError)
def domain_error(e):
    return jsonify({'error': str(e), 'key': None, 'line': None}), 400

@app.errorhandler(SimulationError)
def simulation_error(e):
    logger.error("Request failed: %s", e)
    return jsonify({'error': str(e)}), 500

# ============================================================================
# HELPERS
# ============================================================================

def _payload():
    data = request.get_json(silent=True)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError('body', "expected a JSON object")
    return data

def _capped(config):
    """Clamp replications to MAX_API_REPLICATIONS"""
    if config.replications > MAX_API_REPLICATIONS:
        logger.info("Capping replications %d -> %d", config.replications, MAX_API_REPLICATIONS)
        return apply_overrides(config, {'run.replications': str(MAX_API_REPLICATIONS)})
    return config

def _config_from_payload(data):
    config = parse_scenario(data.get('scenario') or '')
    sweep = None
    if data.get('preset'):
        config, sweep = resolve_preset(data['preset'], base=config)

    overrides = data.get('overrides') or {}
    if not isinstance(overrides, dict):
        raise ConfigurationError('overrides', "expected an object of key: value pairs")
    if overrides:
        config = apply_overrides(config, {key: str(value) for key, value in overrides.items()})

    if data.get('sweep'):
        spec = data['sweep']
        if (not isinstance(spec, dict) or not isinstance(spec.get('key'), str)
                or not isinstance(spec.get('values'), list)):
            raise ConfigurationError('sweep', "expected {key, values: [...]}")
        sweep = (spec['key'], [str(v) for v in spec['values']])
    return _capped(config), sweep

# ============================================================================
# ROUTES
# ============================================================================

@app.route('/health', methods=['GET'])
def health():
    return jsonify({'status': 'ok'})

@app.route('/api/presets', methods=['GET'])
def presets():
    """List experiment presets"""
    return jsonify({'presets': [
        {
            'name': p.name,
            'description': p.description,
            'overrides': dict(p.overrides),
            'sweep_key': p.sweep_key,
            'sweep_values': list(p.sweep_values),
        }
        for p in PRESETS.values()
    ]})

@app.route('/api/tariff', methods=['GET'])
def tariff():
    """Charge table plus EV charges under ?ev_strategy= (default same_as_a)"""
    strategy = EvStrategy.parse(request.args.get('ev_strategy', 'same_as_a'))
    config = apply_overrides(ScenarioConfig(), {'tariff.ev_strategy': strategy.format()})
    policy = config.tariff
    return jsonify({
        'levels': list(STAFF_LEVELS),
        'table': {category: list(row) for category, row in zip(CATEGORIES, policy.table)},
        'ev_strategy': strategy.format(),
        'ev_charges': ev_charge_table(policy).tolist(),
    })

@app.route('/api/scenarios/validate', methods=['POST'])
def validate_scenario():
    """Resolve a scenario; 400 with key and line when it is invalid"""
    text = _payload().get('scenario') if request.is_json else request.get_data(as_text=True)
    config = parse_scenario(text or '')
    return jsonify({
        'valid': True,
        'digest': scenario_digest(config),
        'scenario': serialize_scenario(config),
    })

@app.route('/api/runs', methods=['POST'])
def runs():
    """Run a scenario, preset or sweep and return per-arm aggregates"""
    config, sweep = _config_from_payload(_payload())
    result = run_experiment(config, sweep=sweep, workers=API_WORKERS, database_url=DATABASE_URL)
    stats = result.arm_statistics()

    arms = []
    for arm, (_, row) in zip(result.arms, stats.iterrows()):
        arms.append({
            'sweep_value': arm.value,
            'digest': arm.digest,
            'replications': int(row['replications']),
            'mean_final_ev_count': float(row['mean_final_ev_count']),
            'std_final_ev_count': float(row['std_final_ev_count']),
            'sem_final_ev_count': float(row['sem_final_ev_count']),
            'final_counts': arm.summary.final_counts.tolist(),
            'aggregate': arm.summary.aggregate_frame().to_dict(orient='records'),
        })
    return jsonify({
        'digest': scenario_digest(config),
        'sweep_key': result.sweep_key,
        'arms': arms,
    })

@app.route('/api/series', methods=['GET'])
def stored_series():
    """Series rows saved by earlier runs, filtered by ?digest= and ?replication="""
    if not DATABASE_URL:
        return jsonify({'error': 'no database configured'}), 404
    try:
        frame = load_series(DATABASE_URL)
    except ValueError:
        # table not created yet
        return jsonify({'error': 'no stored runs'}), 404

    digest = request.args.get('digest')
    if digest:
        frame = frame[frame['digest'] == digest]
    if 'replication' in request.args:
        try:
            replication = int(request.args['replication'])
        except ValueError:
            raise ConfigurationError('replication', f"expected an integer, got {request.args['replication']!r}")
        frame = frame[frame['replication'] == replication]
    return jsonify({'rows': len(frame), 'series': frame.to_dict(orient='records')})

@app.route('/api/validation/bass', methods=['GET'])
def validation_bass():
    """Reduced-mode comparison against the Bass oracle"""
    overrides = {}
    for key, arg in (('run.replications', 'replications'), ('run.horizon_days', 'horizon_days'),
                     ('run.base_seed', 'seed')):
        if arg in request.args:
            overrides[key] = request.args[arg]
    config = _capped(apply_overrides(ScenarioConfig(), overrides))

    frame = validate_reduced_mode(config, workers=API_WORKERS)
    params = bass_params_for(reduced_scenario(config))
    return jsonify({
        'p': params.p,
        'q': params.q,
        'n_total': params.n_total,
        'peak_time_years': bass_peak_time(params) if params.p > 0 else None,
        'replications': config.replications,
        'deviation': float(frame['abs_deviation'].max()) if len(frame) else 0.0,
        'tolerance': BASS_TOLERANCE_FRACTION * params.n_total,
        'passed': within_tolerance(frame, params.n_total),
        'trajectory': frame.to_dict(orient='records'),
    })

if __name__ == '__main__':
    port = int(os.environ.get('PORT', 5000))
    app.run(host='0.0.0.0', port=port)
