"""
Demo script for the Distance-Aware PSI toolkit.
This script runs each protocol on the sample data in data/.
"""

from pathlib import Path

import numpy as np

from dapsi.models.params import HamParams, IntParams, ReconParams
from dapsi.services.hamming import ham_psi, ham_psi_sample
from dapsi.services.intpsi import int_psi
from dapsi.services.setrecon import map_bitvector, observe_recon, one_sided_set_recon, prop2_attack
from dapsi.utils.bits import bits_to_str, flip_random, hamming_distance, random_bits
from dapsi.utils.field import default_field
from dapsi.utils.ip_parser import format_ipv4, load_bit_vectors, parse_ip_list
from dapsi.utils.transport import phase_report

SAMPLE_DATA_DIR = Path("data")


def show_phases(transcripts):
    for role, transcript in transcripts.items():
        print(f"  {role}: {transcript.total_bytes} bytes")
        print(phase_report(transcript).to_string(index=False))


def run_set_reconciliation():
    """One-sided set reconciliation on two 32-bit vectors."""
    print("\nSet reconciliation (d = 3)...")
    rng = np.random.default_rng(1)
    params = ReconParams.plain(32, 3, default_field())
    a = random_bits(32, rng)
    for distance in (2, 5):
        b = flip_random(a, distance, rng)
        diff = one_sided_set_recon(map_bitvector(a), map_bitvector(b), params, rng)
        if diff is None:
            print(f"✗ HD {distance}: no output, the difference is above the threshold")
        else:
            print(f"✓ HD {distance}: Alice learned {sorted(diff)}")

    short = ReconParams.plain(12, 3, default_field())
    a, b = a[:12], flip_random(a[:12], 3, rng)
    transcript = observe_recon(map_bitvector(a), map_bitvector(b), short, rng)
    result = prop2_attack(transcript, map_bitvector(a), short)
    status = 'ambiguous' if result.ambiguous else 'recovered'
    print(f"✓ Unblinded transcript: Bob's vector {status} ({result.consistent_count} consistent)")


def run_intpsi():
    """Integer PSI over the sample IP lists."""
    print("\nInteger PSI on IPv4 lists (|a - b| < 8)...")
    alice = parse_ip_list(SAMPLE_DATA_DIR / "alice_ips.txt")
    bob = parse_ip_list(SAMPLE_DATA_DIR / "bob_ips.txt")
    params = IntParams(threshold=8, max_bit_len=32)
    result = int_psi(alice, bob, params, backend='dh', seed=7)
    for a, b in result.pairs:
        print(f"✓ {format_ipv4(a)} ~ {format_ipv4(b)}")
    baseline = int_psi(alice, bob, params, backend='dh', seed=7, naive=True)
    print(f"Strings: {result.alice_strings} (cover) vs {baseline.alice_strings} (full window)")
    show_phases(result.transcripts)


def run_hampsi():
    """HamPSI and the subsampling variant over the sample bit vectors."""
    alice = load_bit_vectors(SAMPLE_DATA_DIR / "alice_vectors.txt")
    bob = load_bit_vectors(SAMPLE_DATA_DIR / "bob_vectors.txt")

    print("\nHamPSI (d = 2, fpr = 0.25)...")
    params = HamParams(vector_len=alice[0].size, threshold=2, fpr=0.25, ahe_group='modp768')
    result = ham_psi(alice, bob, params, seed=3)
    for (i, j), (_, b) in zip(result.matches, result.pairs):
        print(f"✓ Alice[{i}] ~ Bob[{j}] = {bits_to_str(b)} (HD {hamming_distance(alice[i], b)})")
    for i, j in result.rejected:
        print(f"✗ Bob refused to release Bob[{j}] for Alice[{i}]")
    show_phases(result.transcripts)

    print("\nHamPSI by subsampling (T = 8, t = 3)...")
    sampled = ham_psi_sample(alice, bob, 8, 3, 4, seed=3)
    for i, j in sampled.matches:
        print(f"✓ Alice[{i}] ~ Bob[{j}] (HD {hamming_distance(alice[i], bob[j])})")


def main():
    """Main demo function."""
    print("Distance-Aware PSI - Demo")
    print("=" * 50)

    run_set_reconciliation()
    run_intpsi()
    run_hampsi()

    print("\n" + "=" * 80)
    print("Demo completed successfully!")
    print("Run a protocol from the command line with: python -m dapsi run --help")
    print("=" * 80)


if __name__ == "__main__":
    main()
