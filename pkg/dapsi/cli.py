"""
Command-line entry point: run a protocol, ingest IP blocklists, or sweep
parameters for a benchmark table.

    python -m dapsi run --protocol intpsi --in-a a.txt --in-b b.txt --d 3
    python -m dapsi run --protocol hampsi --role bob --listen :9470 --dealer 127.0.0.1:9471 --in-b b.txt
    python -m dapsi ingest-ips blocklist.txt --out blocklist.bin
    python -m dapsi bench --protocol intpsi --sweep d --values 2,4,8,16 --n 200 --out bench.csv
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from dapsi import config
from dapsi.exceptions import ConfigError, DapsiError, InputFormatError, ProtocolViolation
from dapsi.models.params import HamParams, IntParams, RunConfig
from dapsi.services.hamming import (
    ham_psi,
    ham_psi_sample,
    run_hampsi_alice,
    run_hampsi_bob,
    run_sample_alice,
    run_sample_bob,
)
from dapsi.services.intpsi import int_psi, run_intpsi_alice, run_intpsi_bob
from dapsi.services.ole import run_dealer
from dapsi.services.psi_backend import get_backend
from dapsi.utils.bits import bits_to_str, flip_random, random_bits
from dapsi.utils.field import get_field
from dapsi.utils.ip_parser import load_bit_vectors, load_int_set, parse_ip_list, write_int_set
from dapsi.utils.randomness import spawn_rngs
from dapsi.utils.transport import (
    Channel,
    Tag,
    Transcript,
    connect,
    listen,
    parse_address,
    phase_report,
)

logger = logging.getLogger(__name__)

HAM_ROLES = ('alice', 'bob', 'dealer')
INT_ROLES = ('alice', 'bob')
_ROLE_BYTES = {b'A': 'alice', b'B': 'bob'}

# Flag name -> RunConfig field
RUN_FIELDS = ['protocol', 'role', 'd', 'fpr', 'ell', 'T', 't', 'mask_weight', 'L', 'inclusive', 'naive',
              'release', 'backend', 'ahe_group', 'compute_cap', 'listen', 'connect', 'dealer', 'seed',
              'in_a', 'in_b', 'out']
_BOOL_FIELDS = {'inclusive', 'naive', 'release'}


def setup_logging(level: str = config.LOG_LEVEL) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=config.LOG_FORMAT)


def _file_settings(path: Optional[str]) -> Dict[str, Any]:
    """key=value file read with python-dotenv; keys may use dashes or underscores."""
    if not path:
        return {}
    if not Path(path).exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    out = {}
    for key, value in dotenv_values(path).items():
        name = key.strip().replace('-', '_')
        if name not in RUN_FIELDS:
            raise ConfigError(f"Unknown config key {key!r}")
        if name in _BOOL_FIELDS and isinstance(value, str):
            value = value.strip().lower() in ('1', 'true', 'yes', 'on')
        out[name] = value
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Config-file values overridden by every flag given on the command line."""
    settings = _file_settings(args.config)
    for name in RUN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    try:
        return RunConfig(**settings)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


# Output files

def write_matches(path: Path, rows: Sequence[Tuple], columns: Sequence[str] = ('a', 'b')) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows), columns=list(columns)).to_csv(path, index=False)


def write_phase_reports(out: Path, transcripts: Dict[str, Transcript]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for role, transcript in transcripts.items():
        phase_report(transcript).to_csv(out / f'phases_{role}.csv', index=False)


def _ham_rows(pairs: Sequence[Tuple[int, int]], vectors: Dict[Tuple[int, int], np.ndarray]) -> List[Tuple]:
    return [(i, j, bits_to_str(vectors[(i, j)]) if (i, j) in vectors else '') for i, j in pairs]


# Two-process wiring

def _dealer_link(address: str, role: str, transcript: Transcript) -> Channel:
    """Connect to the dealer and announce the role before counting bytes."""
    host, port = parse_address(address)
    channel = connect(host, port)
    channel.send(Tag.HELLO, role[0].upper().encode('ascii'))
    channel.transcript = transcript
    return channel


def _accept_parties(address: str, transcript: Transcript) -> Dict[str, Channel]:
    host, port = parse_address(address)
    channels = {}
    for channel in listen(host, port, count=2):
        _, payload = channel.expect(Tag.HELLO)
        role = _ROLE_BYTES.get(payload)
        if role is None or role in channels:
            raise ProtocolViolation(f"Unexpected dealer greeting {payload!r}")
        channel.transcript = transcript
        channels[role] = channel
    return channels


def _peer_link(cfg: RunConfig, transcript: Transcript) -> Channel:
    if cfg.role == 'alice':
        host, port = parse_address(cfg.connect)
        return connect(host, port, transcript)
    host, port = parse_address(cfg.listen)
    return listen(host, port, 1, [transcript])[0]


def _run_networked(cfg: RunConfig) -> Tuple[List[Tuple], Dict[str, Transcript], Sequence[str]]:
    roles = INT_ROLES if cfg.protocol == 'intpsi' else HAM_ROLES
    rng = spawn_rngs(cfg.seed, roles).get(cfg.role)
    transcript = Transcript(cfg.role)
    field = get_field(config.FIELD_MODULUS)

    if cfg.role == 'dealer':
        parties = _accept_parties(cfg.listen, transcript)
        run_dealer(parties['alice'], parties['bob'], field)
        return [], {'dealer': transcript}, ('a', 'b')

    vectors_path = cfg.in_a if cfg.role == 'alice' else cfg.in_b
    dealer = _dealer_link(cfg.dealer, cfg.role, transcript) if cfg.protocol != 'intpsi' else None
    peer = _peer_link(cfg, transcript)
    try:
        if cfg.protocol == 'intpsi':
            values = load_int_set(vectors_path)
            runner = run_intpsi_alice if cfg.role == 'alice' else run_intpsi_bob
            pairs = runner(peer, values, cfg.int_params(), get_backend(cfg.backend), rng, cfg.naive)
            return pairs, {cfg.role: transcript}, ('a', 'b')

        vectors = load_bit_vectors(vectors_path)
        columns = ('a', 'b', 'b_vector')
        if cfg.protocol == 'hampsi':
            params = cfg.ham_params(vectors[0].size)
            if cfg.role == 'alice':
                report = run_hampsi_alice(peer, dealer, vectors, params, rng, cfg.release)
            else:
                released = run_hampsi_bob(peer, dealer, vectors, params, rng)
                return [(i, j, '') for i, j in released], {cfg.role: transcript}, columns
        elif cfg.role == 'alice':
            report = run_sample_alice(peer, dealer, vectors, cfg.T, cfg.t, field, cfg.compute_cap, cfg.release)
        else:
            released = run_sample_bob(peer, dealer, vectors, cfg.T, cfg.t, cfg.mask_weight, rng, field)
            return [(i, j, '') for i, j in released], {cfg.role: transcript}, columns
        found = report.released if cfg.release else report.hits
        rows = [(m.alice_index, m.bob_index, bits_to_str(m.vector) if m.vector is not None else '')
                for m in found]
        return rows, {cfg.role: transcript}, columns
    finally:
        peer.close()
        if dealer is not None:
            dealer.close()


def _run_local(cfg: RunConfig) -> Tuple[List[Tuple], Dict[str, Transcript], Sequence[str]]:
    if cfg.protocol == 'intpsi':
        result = int_psi(load_int_set(cfg.in_a), load_int_set(cfg.in_b), cfg.int_params(),
                         cfg.backend, cfg.seed, cfg.naive)
        return result.pairs, result.transcripts, ('a', 'b')

    alice_vectors = load_bit_vectors(cfg.in_a)
    bob_vectors = load_bit_vectors(cfg.in_b)
    if not alice_vectors or not bob_vectors:
        raise InputFormatError("Both vector files must hold at least one vector")
    if cfg.protocol == 'hampsi':
        result = ham_psi(alice_vectors, bob_vectors, cfg.ham_params(alice_vectors[0].size),
                         cfg.seed, cfg.release)
    else:
        result = ham_psi_sample(alice_vectors, bob_vectors, cfg.T, cfg.t, cfg.mask_weight,
                                seed=cfg.seed, compute_cap=cfg.compute_cap, release=cfg.release)
    found = result.matches if cfg.release else [(m.alice_index, m.bob_index) for m in result.hits]
    released = {(m.alice_index, m.bob_index): m.vector for m in result.hits if m.vector is not None}
    return _ham_rows(found, released), result.transcripts, ('a', 'b', 'b_vector')


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    logger.info("Running %s as %s (seed %d)", cfg.protocol, cfg.role, cfg.seed)
    start = time.perf_counter()
    if cfg.role == 'both':
        rows, transcripts, columns = _run_local(cfg)
    else:
        rows, transcripts, columns = _run_networked(cfg)
    out = Path(cfg.out)
    if cfg.role != 'dealer':
        write_matches(out / 'matches.csv', rows, columns)
    write_phase_reports(out, transcripts)
    logger.info("%d match(es) in %.2fs; results in %s", len(rows), time.perf_counter() - start, out)
    return config.EXIT_CODES['ok']


def cmd_ingest_ips(args: argparse.Namespace) -> int:
    values = parse_ip_list(args.path)
    out = Path(args.out) if args.out else Path(args.path).with_suffix('.bin')
    count = write_int_set(out, values)
    logger.info("Wrote %d integers to %s", count, out)
    return config.EXIT_CODES['ok']


# Benchmarks

def _int_workload(n: int, params: IntParams, rng: np.random.Generator) -> Tuple[List[int], List[int]]:
    top = 1 << params.max_bit_len
    alice = [int(x) for x in rng.integers(0, top, size=n, dtype=np.uint64)]
    offsets = rng.integers(-2 * params.threshold, 2 * params.threshold + 1, size=n)
    bob = [int(min(top - 1, max(0, a + int(o)))) for a, o in zip(alice, offsets)]
    return alice, bob


def _ham_workload(n: int, params: HamParams, rng: np.random.Generator) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    alice = [random_bits(params.vector_len, rng) for _ in range(n)]
    bob = [flip_random(a, min(params.threshold, params.vector_len), rng) for a in alice]
    return alice, bob


def _sweep_field(sweep: str, fields: Dict[str, str]) -> str:
    if sweep not in fields:
        raise ConfigError(f"Cannot sweep {sweep!r} here; choose from {sorted(fields)}")
    return fields[sweep]


def bench_intpsi(value: int, sweep: str, args: argparse.Namespace) -> Dict[str, Any]:
    fields = {'threshold': args.d, 'max_bit_len': args.L}
    fields[_sweep_field(sweep, {'d': 'threshold', 'L': 'max_bit_len'})] = value
    params = IntParams(**fields)
    alice, bob = _int_workload(args.n, params, np.random.default_rng(args.seed))
    start = time.perf_counter()
    result = int_psi(alice, bob, params, args.backend, args.seed)
    elapsed = time.perf_counter() - start
    baseline = int_psi(alice, bob, params, args.backend, args.seed, naive=True)
    return {'bytes': result.transcripts['alice'].total_bytes,
            'baseline_bytes': baseline.transcripts['alice'].total_bytes,
            'wall_time': elapsed, 'matches': len(result.pairs)}


def bench_hampsi(value: int, sweep: str, args: argparse.Namespace) -> Dict[str, Any]:
    fields = {'vector_len': args.ell, 'threshold': args.d, 'fpr': args.fpr, 'ahe_group': args.ahe_group}
    fields[_sweep_field(sweep, {'d': 'threshold', 'ell': 'vector_len'})] = value
    params = HamParams(**fields)
    alice, bob = _ham_workload(args.n, params, np.random.default_rng(args.seed))
    start = time.perf_counter()
    result = ham_psi(alice, bob, params, args.seed)
    elapsed = time.perf_counter() - start
    transcript = result.transcripts['alice']
    return {'bytes': transcript.total_bytes, 'recon_bytes': transcript.bytes_for('recon'),
            'wall_time': elapsed, 'matches': len(result.matches)}


BENCHMARKS: Dict[str, Callable[[int, str, argparse.Namespace], Dict[str, Any]]] = {
    'intpsi': bench_intpsi,
    'hampsi': bench_hampsi,
}


def cmd_bench(args: argparse.Namespace) -> int:
    values = [int(v) for v in args.values.split(',') if v.strip()] if args.values else []
    runner = BENCHMARKS[args.protocol]
    rows = []
    for value in values:
        logger.info("bench %s: %s=%d", args.protocol, args.sweep, value)
        rows.append({'protocol': args.protocol, 'param': args.sweep, 'value': value,
                     **runner(value, args.sweep, args)})
    columns = ['protocol', 'param', 'value', 'bytes', 'baseline_bytes', 'recon_bytes', 'wall_time', 'matches']
    table = pd.DataFrame(rows, columns=columns)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False)
    if args.plot and rows:
        write_bench_chart(table, Path(args.plot))
    logger.info("Wrote %d benchmark row(s) to %s", len(rows), out)
    return config.EXIT_CODES['ok']


def write_bench_chart(table: pd.DataFrame, path: Path) -> None:
    import plotly.express as px

    long = table.melt(id_vars=['value'], value_vars=['bytes', 'baseline_bytes', 'recon_bytes'],
                      var_name='series', value_name='transferred').dropna()
    fig = px.line(long, x='value', y='transferred', color='series', markers=True,
                  title=f"{table['protocol'].iloc[0]}: bytes vs {table['param'].iloc[0]}")
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(path))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='dapsi', description="Distance-aware private set intersection")
    parser.add_argument('--log-level', default=config.LOG_LEVEL)
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help="Run a protocol in-process or as one networked role")
    run.add_argument('--config', help="key=value file; flags override it")
    run.add_argument('--protocol', choices=config.PROTOCOLS)
    run.add_argument('--role', choices=config.ROLES)
    run.add_argument('--d', '--threshold', dest='d', type=int)
    run.add_argument('--fpr', type=float)
    run.add_argument('--ell', type=int)
    run.add_argument('--T', dest='T', type=int)
    run.add_argument('--t', dest='t', type=int)
    run.add_argument('--mask-weight', dest='mask_weight', type=int)
    run.add_argument('--L', dest='L', type=int)
    run.add_argument('--inclusive', action='store_const', const=True)
    run.add_argument('--naive', action='store_const', const=True, help="Full-window baseline augmentation")
    run.add_argument('--no-release', dest='release', action='store_const', const=False)
    run.add_argument('--backend', choices=config.BACKENDS)
    run.add_argument('--ahe-group', dest='ahe_group')
    run.add_argument('--compute-cap', dest='compute_cap', type=int)
    run.add_argument('--listen')
    run.add_argument('--connect')
    run.add_argument('--dealer')
    run.add_argument('--seed', type=int)
    run.add_argument('--in-a', dest='in_a')
    run.add_argument('--in-b', dest='in_b')
    run.add_argument('--out')
    run.set_defaults(handler=cmd_run)

    ingest = sub.add_parser('ingest-ips', help="Convert a dotted-quad list to an integer-set file")
    ingest.add_argument('path')
    ingest.add_argument('--out')
    ingest.set_defaults(handler=cmd_ingest_ips)

    bench = sub.add_parser('bench', help="Parameter sweep written as CSV")
    bench.add_argument('--protocol', choices=sorted(BENCHMARKS), default='intpsi')
    bench.add_argument('--sweep', choices=['d', 'ell', 'L'], default='d')
    bench.add_argument('--values', default='', help="Comma-separated sweep values")
    bench.add_argument('--n', type=int, default=100)
    bench.add_argument('--d', type=int, default=config.DEFAULT_INT_PARAMS['threshold'])
    bench.add_argument('--L', dest='L', type=int, default=config.DEFAULT_INT_PARAMS['max_bit_len'])
    bench.add_argument('--ell', type=int, default=config.DEFAULT_HAM_PARAMS['vector_len'])
    bench.add_argument('--fpr', type=float, default=config.DEFAULT_HAM_PARAMS['fpr'])
    bench.add_argument('--ahe-group', dest='ahe_group', default=config.AHE_GROUP)
    bench.add_argument('--backend', choices=config.BACKENDS, default='dh')
    bench.add_argument('--seed', type=int, default=0)
    bench.add_argument('--out', default=str(config.OUTPUT_DIR / 'bench.csv'))
    bench.add_argument('--plot', help="Also write an HTML chart here")
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except InputFormatError as e:
        where = f" (line {e.line_number})" if e.line_number else ''
        logger.error("Input error%s: %s", where, e)
        return config.EXIT_CODES['io']
    except (ConfigError, ValidationError) as e:
        logger.error("Configuration error: %s", e)
        return config.EXIT_CODES['config']
    except DapsiError as e:
        logger.error("Protocol aborted: %s", e)
        return config.EXIT_CODES['protocol']
    except OSError as e:
        logger.error("I/O error: %s", e)
        return config.EXIT_CODES['io']
    except ValueError as e:
        logger.error("Invalid parameters: %s", e)
        return config.EXIT_CODES['config']


if __name__ == '__main__':
    sys.exit(main())
