from flask import Flask, request, jsonify
from flask_cors import CORS
from flask_limiter import Limiter
from flask_limiter.util import get_remote_address

import settings
from experiment_harness import SweepSpec, learn_all_neighborhoods, run_sweep, score
from ggm_errors import ConfigurationError, DimensionError, GgmError
from model_zoo import (
    GgmModel,
    ParamBox,
    build_named,
    check_degree_bound,
    check_eigenvalue_bounds,
    check_scalability,
    check_walk_summable,
    degree_summary,
    generate_random_walk_summable,
)
from run_ledger import RunLedger
from sampler import draw, empirical_covariance

service_logger = settings.get_logger('ggm_service')

app = Flask(__name__)
CORS(app, origins=settings.CORS_ORIGINS)
limiter = Limiter(app=app, key_func=get_remote_address)

LEARN_ALGORITHMS = ('mit', 'mit-symmetric', 'baseline', 'baseline-symmetric',
                    'threshold-forward', 'threshold', 'threshold-oracle')


def get_ledger() -> RunLedger:
    """Ledger at the configured path (app.config['RESULTS_DB'] overrides GGM_RESULTS_DB)"""
    return RunLedger(app.config.get('RESULTS_DB', settings.RESULTS_DB))


def check_dimension(n):
    if n is None or int(n) < 1:
        raise DimensionError('n must be a positive integer')
    if int(n) > settings.MAX_SERVICE_DIM:
        raise DimensionError(f'n={n} exceeds the service limit of {settings.MAX_SERVICE_DIM}')
    return int(n)


def parse_box(data):
    if not data:
        return None
    try:
        return ParamBox.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f'invalid param_box: {e}')


def parse_model(doc):
    if not isinstance(doc, dict):
        raise ConfigurationError('model document required')
    check_dimension(doc.get('n'))
    return GgmModel.from_document(doc)


def error_response(e, action):
    """GgmError -> 400 with its message; anything else -> 500 with a generic one"""
    if isinstance(e, GgmError):
        service_logger.info(f"{action} rejected: {e}")
        return jsonify({'success': False, 'message': str(e)}), 400
    service_logger.error(f"{action} failed: {e}")
    return jsonify({'success': False, 'message': f'{action} failed'}), 500


@app.route('/')
def index():
    return "GGM structure learning service is running!"


@app.route('/api/models/generate', methods=['POST'])
@limiter.limit(settings.RATE_LIMIT)
def generate_model():
    """Build a named or random model"""
    try:
        data = request.get_json(silent=True) or {}
        topology = data.get('topology')
        box = parse_box(data.get('param_box'))

        if topology == 'random':
            n = check_dimension(data.get('n'))
            if box is None:
                return jsonify({'success': False, 'message': 'random models need param_box'}), 400
            model = generate_random_walk_summable(n, box, bool(data.get('triangle_free', False)),
                                                  seed=int(data.get('seed', 0)))
        elif topology in ('chain', 'star', 'grid', 'diamond'):
            size = data.get('side') if topology == 'grid' else data.get('n', 4)
            if size is None:
                return jsonify({'success': False, 'message': 'grid models need side'}), 400
            check_dimension(int(size) ** 2 if topology == 'grid' else size)
            model = build_named(topology, int(size), float(data.get('edge_weight', 0.2)),
                                float(data.get('diag', 1.0)), bool(data.get('random_weights', False)),
                                data.get('seed'), box)
        else:
            return jsonify({'success': False, 'message': 'topology must be chain, star, grid, diamond or random'}), 400

        return jsonify({'success': True, 'model': model.to_document(), 'summary': degree_summary(model)})

    except Exception as e:
        return error_response(e, 'Model generation')


@app.route('/api/models/validate', methods=['POST'])
def validate_model():
    """Walk-summability, degree, eigenvalue and scalability checks"""
    try:
        data = request.get_json(silent=True) or {}
        model = parse_model(data.get('model'))
        box = parse_box(data.get('param_box')) or model.param_box
        alpha = float(data.get('alpha', box.alpha if box else 1.0))
        walk_ok, norm = check_walk_summable(model, alpha)

        result = {'success': True, 'walk_summable': bool(walk_ok), 'norm': norm,
                  'summary': degree_summary(model)}
        if box is not None:
            report = check_eigenvalue_bounds(model, box)
            result.update({
                'degree_bound': check_degree_bound(model, box),
                'scalable': check_scalability(box),
                'eigenvalues': {'j_low': report.j_low, 'j_high': report.j_high,
                                'sigma_low': report.sigma_low, 'sigma_high': report.sigma_high,
                                'ok': report.ok},
            })
        return jsonify(result)

    except Exception as e:
        return error_response(e, 'Model validation')


@app.route('/api/learn', methods=['POST'])
@limiter.limit(settings.RATE_LIMIT)
def learn():
    """Estimate every neighborhood of a model from its exact covariance or fresh samples"""
    try:
        data = request.get_json(silent=True) or {}
        model = parse_model(data.get('model'))
        algorithm = data.get('algo', 'mit')
        if algorithm not in LEARN_ALGORITHMS:
            return jsonify({'success': False, 'message': f'algo must be one of {", ".join(LEARN_ALGORITHMS)}'}), 400

        if data.get('exact', False):
            view = model.view()
        else:
            count = data.get('count')
            if not count:
                return jsonify({'success': False, 'message': 'count required unless exact is set'}), 400
            view = empirical_covariance(draw(model, int(count), int(data.get('seed', 0))))

        estimates, failures = learn_all_neighborhoods(model, view, algorithm, data.get('options') or {})
        metrics = score(model, estimates, failed_nodes=failures.keys())
        return jsonify({
            'success': True,
            'algorithm': algorithm,
            'neighborhoods': [list(e.members) for e in estimates],
            'failed_nodes': {str(i): msg for i, msg in sorted(failures.items())},
            'success_rate': metrics.success_rate,
            'accuracy': metrics.accuracy,
        })

    except Exception as e:
        return error_response(e, 'Learning')


@app.route('/api/sweep', methods=['POST'])
@limiter.limit(settings.RATE_LIMIT)
def sweep():
    """Run a sweep spec inline and store its records in the ledger"""
    try:
        spec = SweepSpec.from_dict(request.get_json(silent=True) or {})
        for cell in spec.cells:
            check_dimension(cell.side ** 2 if cell.generator == 'grid' else (cell.n or 4))
        records = run_sweep(spec, workers=1, ledger=get_ledger())
        return jsonify({'success': True, 'records': [r.to_dict() for r in records]})

    except Exception as e:
        return error_response(e, 'Sweep')


@app.route('/api/ledger/records', methods=['GET'])
def ledger_records():
    """Stored experiment records with filters"""
    try:
        limit = int(request.args.get('limit', 100))
        offset = int(request.args.get('offset', 0))
        sample_count = request.args.get('sample_count')
        result = get_ledger().get_records(
            limit=limit, offset=offset,
            generator=request.args.get('generator'),
            algorithm=request.args.get('algorithm'),
            sample_count=int(sample_count) if sample_count is not None else None,
        )
        return jsonify({'success': True, **result})

    except ValueError:
        return jsonify({'success': False, 'message': 'limit, offset and sample_count must be integers'}), 400
    except Exception as e:
        return error_response(e, 'Ledger query')


@app.route('/api/ledger/summary', methods=['GET'])
def ledger_summary():
    try:
        return jsonify({'success': True, 'summary': get_ledger().get_summary()})
    except Exception as e:
        return error_response(e, 'Ledger summary')


if __name__ == '__main__':
    print("GGM structure learning service starting...")
    print(f"Results ledger: {settings.RESULTS_DB}")
    app.run(debug=True, host='0.0.0.0', port=5000)
