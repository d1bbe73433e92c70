"""
Command-line entry point.

    python cli.py generate --topology random --n 20 --triangle-free --alpha 0.4 \
        --a 0.01 --b 0.28 --dmin 1 --dmax 1 --delta 10 --seed 7 --out model.json
    python cli.py sample --model model.json --count 100000 --seed 1 --out samples.bin
    python cli.py learn --algo threshold --model model.json --exact --out estimate.json
    python cli.py sweep --spec sweep.json --out results.csv --no-walltime
    python cli.py score --truth model.json --estimate estimate.json

Library errors exit with status 2 and a one-line message on stderr.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import settings
from experiment_harness import (
    emit_results,
    learn_all_neighborhoods,
    load_estimates,
    load_sweep_spec,
    run_sweep,
    save_estimates,
    score,
)
from ggm_errors import ConfigurationError, GgmError
from model_zoo import (
    TOPOLOGIES,
    ParamBox,
    build_named,
    degree_summary,
    generate_random_walk_summable,
    load_model,
    save_model,
)
from run_ledger import RunLedger
from sampler import draw, empirical_covariance, load_samples, save_samples

cli_logger = settings.get_logger('ggm_cli')

LEARN_ALGORITHMS = {'mit': 'mit', 'threshold': 'threshold', 'baseline': 'baseline'}


def _param_box(args) -> Optional[ParamBox]:
    if args.alpha is None:
        return None
    try:
        return ParamBox(args.alpha, args.a, args.b, args.dmin, args.dmax, args.delta)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid parameter box: {e}")


def cmd_generate(args) -> int:
    box = _param_box(args)
    if args.topology == 'random':
        if box is None:
            raise ConfigurationError("random models need --alpha, --a, --b, --dmin, --dmax and --delta")
        model = generate_random_walk_summable(args.n, box, args.triangle_free, seed=args.seed)
    else:
        size = args.side if args.topology == 'grid' else args.n
        if size is None and args.topology != 'diamond':
            raise ConfigurationError(f"{args.topology} needs --n (or --side for grid)")
        model = build_named(args.topology, size or 4, args.edge_weight, args.diag,
                            args.random_weights, args.seed, box)
    save_model(model, args.out)
    print(json.dumps(degree_summary(model)))
    return 0


def cmd_sample(args) -> int:
    model = load_model(args.model)
    save_samples(draw(model, args.count, args.seed), args.out)
    return 0


def cmd_learn(args) -> int:
    model = load_model(args.model)
    if args.exact == bool(args.samples):
        raise ConfigurationError("learn needs exactly one of --exact and --samples")
    view = model.view() if args.exact else empirical_covariance(load_samples(args.samples))
    if view.n != model.n:
        raise ConfigurationError(f"samples have n={view.n}, model has n={model.n}")
    algorithm = LEARN_ALGORITHMS[args.algo]
    if args.oracle:
        if args.algo != 'threshold':
            raise ConfigurationError("--oracle applies to the threshold learner only")
        algorithm = 'threshold-oracle'
    options = {'epsilon': args.epsilon, 'nu': args.nu, 'tau_p': args.tau_p,
               'epsilon_f': args.epsilon_f, 'epsilon_s': args.epsilon_s,
               'triangle_free': args.triangle_free}
    ledger = RunLedger() if args.ledger else None
    estimates, failures = learn_all_neighborhoods(model, view, algorithm, options, ledger=ledger)
    save_estimates(estimates, model.n, algorithm, args.out)
    metrics = score(model, estimates, failed_nodes=failures.keys())
    print(json.dumps({'success_rate': metrics.success_rate, 'accuracy': metrics.accuracy,
                      'failed_nodes': sorted(failures)}))
    return 0


def cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.spec)
    ledger = RunLedger() if args.ledger else None
    records = run_sweep(spec, workers=args.workers, ledger=ledger)
    fmt = 'json' if args.out.endswith('.json') else 'csv'
    emit_results(records, args.out, fmt=fmt, include_walltime=not args.no_walltime)
    return 0


def cmd_score(args) -> int:
    truth = load_model(args.truth)
    estimates = load_estimates(args.estimate)
    if len(estimates) != truth.n:
        raise ConfigurationError(f"estimate has {len(estimates)} nodes, truth has {truth.n}")
    metrics = score(truth, estimates)
    print(json.dumps({'success_rate': metrics.success_rate, 'accuracy': metrics.accuracy}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ggm', description='Gaussian graphical model structure learning')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('generate', help='build a named or random model')
    gen.add_argument('--topology', choices=TOPOLOGIES + ('random',), required=True)
    gen.add_argument('--n', type=int)
    gen.add_argument('--side', type=int)
    gen.add_argument('--triangle-free', action='store_true')
    gen.add_argument('--alpha', type=float)
    gen.add_argument('--a', type=float)
    gen.add_argument('--b', type=float)
    gen.add_argument('--dmin', type=float, default=1.0)
    gen.add_argument('--dmax', type=float, default=1.0)
    gen.add_argument('--delta', type=int, default=1)
    gen.add_argument('--edge-weight', type=float, default=0.2)
    gen.add_argument('--diag', type=float, default=1.0)
    gen.add_argument('--random-weights', action='store_true')
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--out', required=True)
    gen.set_defaults(func=cmd_generate)

    smp = sub.add_parser('sample', help='draw samples from a model file')
    smp.add_argument('--model', required=True)
    smp.add_argument('--count', type=int, required=True)
    smp.add_argument('--seed', type=int, default=0)
    smp.add_argument('--out', required=True)
    smp.set_defaults(func=cmd_sample)

    lrn = sub.add_parser('learn', help='estimate every neighborhood')
    lrn.add_argument('--algo', choices=sorted(LEARN_ALGORITHMS), required=True)
    lrn.add_argument('--model', required=True)
    lrn.add_argument('--samples')
    lrn.add_argument('--exact', action='store_true')
    lrn.add_argument('--oracle', action='store_true')
    lrn.add_argument('--triangle-free', action='store_true')
    lrn.add_argument('--epsilon', type=float)
    lrn.add_argument('--nu', type=float, default=0.5)
    lrn.add_argument('--tau-p', type=float)
    lrn.add_argument('--epsilon-f', type=float)
    lrn.add_argument('--epsilon-s', type=float)
    lrn.add_argument('--ledger', action='store_true', help='log learner events to GGM_RESULTS_DB')
    lrn.add_argument('--out', required=True)
    lrn.set_defaults(func=cmd_learn)

    swp = sub.add_parser('sweep', help='run a sweep spec')
    swp.add_argument('--spec', required=True)
    swp.add_argument('--out', required=True)
    swp.add_argument('--no-walltime', action='store_true')
    swp.add_argument('--workers', type=int)
    swp.add_argument('--ledger', action='store_true', help='store records in GGM_RESULTS_DB')
    swp.set_defaults(func=cmd_sweep)

    scr = sub.add_parser('score', help='score an estimate file against a model')
    scr.add_argument('--truth', required=True)
    scr.add_argument('--estimate', required=True)
    scr.set_defaults(func=cmd_score)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL, logging.INFO),
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GgmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as e:
        cli_logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
