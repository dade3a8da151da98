import pandas as pd
import pytest

from dapsi.cli import main
from dapsi.exceptions import InputFormatError
from dapsi.models.params import HamParams
from dapsi.services.hamming import ham_psi
from dapsi.utils.ip_parser import load_bit_vectors, parse_ip_list, read_int_set
from dapsi.utils.transport import phase_report, run_session

ALICE_VECTORS = ['0000000000000000', '1111111100000000']
BOB_VECTORS = ['0101010101010101', '1111111100000001']


@pytest.fixture
def int_inputs(tmp_path):
    a, b = tmp_path / 'a.txt', tmp_path / 'b.txt'
    a.write_text('10\n500\n')
    b.write_text('12\n# neighbours of nothing\n900\n')
    return a, b


@pytest.fixture
def vector_inputs(tmp_path):
    a, b = tmp_path / 'a_vectors.txt', tmp_path / 'b_vectors.txt'
    a.write_text('\n'.join(ALICE_VECTORS) + '\n')
    b.write_text('\n'.join(BOB_VECTORS) + '\n')
    return a, b


def _run(*args):
    return main(['run', *map(str, args)])


def test_intpsi_run_writes_matches(int_inputs, tmp_path):
    a, b = int_inputs
    out = tmp_path / 'out'
    assert _run('--protocol', 'intpsi', '--in-a', a, '--in-b', b, '--d', 3, '--backend', 'oracle', '--out', out) == 0
    assert (out / 'matches.csv').read_text().splitlines() == ['a,b', '10,12']
    report = pd.read_csv(out / 'phases_alice.csv')
    assert set(report['phase']) == {'psi', 'match'}


def test_same_seed_same_outputs(int_inputs, tmp_path):
    a, b = int_inputs
    for name in ('first', 'second'):
        assert _run('--protocol', 'intpsi', '--in-a', a, '--in-b', b, '--d', 3, '--seed', 7,
                    '--out', tmp_path / name) == 0
    for file in ('matches.csv', 'phases_alice.csv', 'phases_bob.csv'):
        assert (tmp_path / 'first' / file).read_bytes() == (tmp_path / 'second' / file).read_bytes()


def test_config_file_is_overridden_by_flags(int_inputs, tmp_path):
    a, b = int_inputs
    settings = tmp_path / 'run.env'
    settings.write_text(f'protocol=intpsi\nd=1\nbackend=oracle\nin-a={a}\nin_b={b}\n')
    assert _run('--config', settings, '--out', tmp_path / 'strict') == 0
    assert (tmp_path / 'strict' / 'matches.csv').read_text().splitlines() == ['a,b']
    assert _run('--config', settings, '--d', 3, '--out', tmp_path / 'loose') == 0
    assert (tmp_path / 'loose' / 'matches.csv').read_text().splitlines() == ['a,b', '10,12']


def test_ingest_ips(tmp_path):
    src = tmp_path / 'blocklist.txt'
    src.write_text('10.0.0.1\n0.0.0.0\n\n255.255.255.255\n10.0.0.1  # duplicate\n')
    out = tmp_path / 'blocklist.bin'
    assert main(['ingest-ips', str(src), '--out', str(out)]) == 0
    assert read_int_set(out) == [0, 167772161, 4294967295]


def test_ingest_reports_bad_line(tmp_path):
    src = tmp_path / 'bad.txt'
    src.write_text('1.2.3.4\n# comment\n1.2.3.999\n')
    assert main(['ingest-ips', str(src), '--out', str(tmp_path / 'bad.bin')]) == 3
    with pytest.raises(InputFormatError) as err:
        parse_ip_list(src)
    assert err.value.line_number == 3


def test_bench_without_values_writes_header(tmp_path):
    out = tmp_path / 'bench.csv'
    assert main(['bench', '--values', '', '--out', str(out)]) == 0
    assert out.read_text().strip() == 'protocol,param,value,bytes,baseline_bytes,recon_bytes,wall_time,matches'


def test_bench_intpsi_sweep(tmp_path):
    out = tmp_path / 'bench.csv'
    assert main(['bench', '--protocol', 'intpsi', '--sweep', 'd', '--values', '2,4', '--n', '20',
                 '--L', '16', '--out', str(out)]) == 0
    table = pd.read_csv(out)
    assert list(table['value']) == [2, 4]
    assert table['recon_bytes'].isna().all()
    assert table.loc[1, 'baseline_bytes'] > table.loc[1, 'bytes']


def test_exit_codes(int_inputs, vector_inputs, tmp_path):
    a, b = int_inputs
    out = tmp_path / 'out'
    assert _run('--protocol', 'intpsi', '--in-a', a, '--out', out) == 2
    assert _run('--protocol', 'intpsi', '--in-a', tmp_path / 'missing.txt', '--in-b', b, '--out', out) == 3
    settings = tmp_path / 'bad.env'
    settings.write_text('protocol=intpsi\ncolour=blue\n')
    assert _run('--config', settings, '--out', out) == 2
    va, vb = vector_inputs
    assert _run('--protocol', 'hampsi-sample', '--in-a', va, '--in-b', vb, '--T', 4, '--t', 2,
                '--mask-weight', 4, '--compute-cap', 1, '--out', out) == 4


def test_hampsi_run(vector_inputs, tmp_path):
    a, b = vector_inputs
    out = tmp_path / 'out'
    assert _run('--protocol', 'hampsi', '--in-a', a, '--in-b', b, '--d', 1, '--fpr', 0.25,
                '--ahe-group', 'modp768', '--seed', 3, '--out', out) == 0
    matches = pd.read_csv(out / 'matches.csv', dtype=str)
    assert matches.values.tolist() == [['1', '1', BOB_VECTORS[1]]]
    assert (out / 'phases_dealer.csv').exists()


def test_networked_roles_match_in_process_bytes(vector_inputs, tmp_path, free_port):
    """Three processes' worth of CLI roles over loopback TCP count what the in-process run counts."""
    a, b = vector_inputs
    bob_addr, dealer_addr = f'127.0.0.1:{free_port()}', f'127.0.0.1:{free_port()}'
    common = ['--protocol', 'hampsi', '--d', 1, '--fpr', 0.25, '--ahe-group', 'modp768', '--seed', 5]
    codes = run_session({
        'dealer': lambda: _run(*common, '--role', 'dealer', '--listen', dealer_addr, '--out', tmp_path / 'dealer'),
        'bob': lambda: _run(*common, '--role', 'bob', '--listen', bob_addr, '--dealer', dealer_addr,
                            '--in-b', b, '--out', tmp_path / 'bob'),
        'alice': lambda: _run(*common, '--role', 'alice', '--connect', bob_addr, '--dealer', dealer_addr,
                              '--in-a', a, '--out', tmp_path / 'alice'),
    })
    assert codes == {'dealer': 0, 'bob': 0, 'alice': 0}

    params = HamParams(vector_len=16, threshold=1, fpr=0.25, ahe_group='modp768')
    local = ham_psi(load_bit_vectors(a), load_bit_vectors(b), params, seed=5)
    keys = ['phase', 'dir']
    measured = pd.read_csv(tmp_path / 'alice' / 'phases_alice.csv').sort_values(keys).reset_index(drop=True)
    expected = phase_report(local.transcripts['alice']).sort_values(keys).reset_index(drop=True)
    pd.testing.assert_frame_equal(measured, expected, check_dtype=False)

    released = pd.read_csv(tmp_path / 'alice' / 'matches.csv', dtype=str)
    assert released[['a', 'b']].values.tolist() == [['1', '1']]
