"""
Configuration for the Distance-Aware PSI toolkit.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent

# Field Configuration
FIELD_MODULUS = int(os.getenv('DAPSI_FIELD_MODULUS', str(2**127 - 1)))
ELEMENT_BYTES = 16

# Homomorphic Encryption Configuration
AHE_GROUP = os.getenv('DAPSI_AHE_GROUP', 'modp2048')
AHE_MSG_BITS = int(os.getenv('DAPSI_AHE_MSG_BITS', 24))

# Search / Enumeration Limits
EXP_COMPUTE_CAP = int(os.getenv('DAPSI_EXP_COMPUTE_CAP', 200000))
ATTACK_MAX_LEN = int(os.getenv('DAPSI_ATTACK_MAX_LEN', 16))

# Transport Configuration
MAX_FRAME_SIZE = int(os.getenv('DAPSI_MAX_FRAME_SIZE', 64 * 1024 * 1024))  # 64MiB
CHANNEL_TIMEOUT = float(os.getenv('DAPSI_CHANNEL_TIMEOUT', 600))
BOB_HOST = os.getenv('DAPSI_BOB_HOST', '127.0.0.1')
BOB_PORT = int(os.getenv('DAPSI_BOB_PORT', 9470))
DEALER_HOST = os.getenv('DAPSI_DEALER_HOST', '127.0.0.1')
DEALER_PORT = int(os.getenv('DAPSI_DEALER_PORT', 9471))

# Output Configuration
OUTPUT_DIR = Path(os.getenv('DAPSI_OUTPUT_DIR', BASE_DIR / "output"))

# Logging Configuration
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

# Default Protocol Parameters
DEFAULT_HAM_PARAMS = {
    'vector_len': 256,
    'threshold': 8,
    'fpr': 0.1,
}

DEFAULT_INT_PARAMS = {
    'threshold': 3,
    'max_bit_len': 32,
    'inclusive': False,
}

DEFAULT_SAMPLE_PARAMS = {
    'sample_size': 16,
    'match_count': 2,
    'mask_weight': 8,
}

# CLI Exit Codes
EXIT_CODES = {
    'ok': 0,
    'config': 2,
    'io': 3,
    'protocol': 4,
}

# Supported Choices
PROTOCOLS = ['intpsi', 'hampsi', 'hampsi-sample']
ROLES = ['alice', 'bob', 'both', 'dealer']
BACKENDS = ['oracle', 'dh']
