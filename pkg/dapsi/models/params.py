"""
Parameter blocks for the protocols and the command-line run configuration.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import ceil
from pathlib import Path
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dapsi import config
from dapsi.services.crypto import ModpGroup, PrfKey, get_group
from dapsi.utils.bits import as_bits
from dapsi.utils.field import PrimeField, get_field


class HamParams(BaseModel):
    """Hamming DA-PSI parameters: vector length, threshold d and target FPR."""
    model_config = ConfigDict(frozen=True)

    vector_len: int = Field(gt=0)
    threshold: int = Field(gt=0)
    fpr: float = Field(gt=0, lt=0.5)
    ahe_group: str = config.AHE_GROUP
    msg_bits: int = Field(default=config.AHE_MSG_BITS, ge=8, le=32)
    modulus: int = config.FIELD_MODULUS

    @model_validator(mode='after')
    def _check_threshold(self) -> 'HamParams':
        if not 2 * self.threshold < self.vector_len:
            raise ValueError(f"threshold {self.threshold} must be below vector_len/2 ({self.vector_len}/2)")
        get_group(self.ahe_group)
        return self

    @property
    def n_bins(self) -> int:
        """ceil(2 d^2 / fpr)."""
        return ceil(Fraction(2 * self.threshold ** 2) / Fraction(str(self.fpr)))

    @property
    def field(self) -> PrimeField:
        return get_field(self.modulus)

    @property
    def group(self) -> ModpGroup:
        return get_group(self.ahe_group)


class IntParams(BaseModel):
    """Integer DA-PSI parameters."""
    model_config = ConfigDict(frozen=True)

    threshold: int = Field(ge=0)
    max_bit_len: int = Field(default=32, ge=1, le=64)
    inclusive: bool = False

    @property
    def window(self) -> int:
        """Number of integers in the match window around a point."""
        return 2 * self.threshold + 1 if self.inclusive else 2 * self.threshold - 1


@dataclass(frozen=True)
class ReconParams:
    """Set size, difference threshold and evaluation abscissas of one reconciliation."""
    set_size: int
    threshold: int
    eval_points: Tuple[int, ...]
    field: PrimeField
    variant: str = 'plain'

    def __post_init__(self):
        ell, d = self.set_size, self.threshold
        if not 0 <= d < ell:
            raise ValueError(f"Difference threshold {d} must satisfy 0 <= d < set size {ell}")
        expected = ell + 2 * d + 1 if self.variant == 'plain' else ell + d + 2
        if self.variant not in ('plain', 'exp'):
            raise ValueError(f"Unknown reconciliation variant {self.variant!r}")
        if len(self.eval_points) != expected:
            raise ValueError(f"{self.variant} reconciliation needs {expected} points, got {len(self.eval_points)}")
        if len(set(self.eval_points)) != len(self.eval_points):
            raise ValueError("Evaluation points must be distinct")
        if any(not 2 * ell + 2 <= x < self.field.p for x in self.eval_points):
            raise ValueError("Evaluation points must lie above every bit-map encoding and below p")

    @classmethod
    def plain(cls, set_size: int, threshold: int, field: PrimeField) -> 'ReconParams':
        count = set_size + 2 * threshold + 1
        return cls(set_size, threshold, evaluation_points(set_size, count), field, 'plain')

    @classmethod
    def exp(cls, set_size: int, threshold: int, field: PrimeField) -> 'ReconParams':
        count = set_size + threshold + 2
        return cls(set_size, threshold, evaluation_points(set_size, count), field, 'exp')

    @property
    def point_count(self) -> int:
        return len(self.eval_points)


def evaluation_points(set_size: int, count: int) -> Tuple[int, ...]:
    """Abscissas 2l+2, 2l+3, ... shared by both parties."""
    start = 2 * set_size + 2
    return tuple(range(start, start + count))


@dataclass(frozen=True)
class SubSampleParams:
    """Sub-sampling configuration, fixed for a whole session."""
    sample_size: int
    match_count: int
    masks: Tuple[np.ndarray, ...]
    key: PrfKey

    def __post_init__(self):
        if not 0 < self.match_count < self.sample_size:
            raise ValueError(f"Need 0 < t < T, got t={self.match_count}, T={self.sample_size}")
        if len(self.masks) != self.sample_size:
            raise ValueError(f"Expected {self.sample_size} masks, got {len(self.masks)}")
        object.__setattr__(self, 'masks', tuple(as_bits(m) for m in self.masks))

    @property
    def vector_len(self) -> int:
        return int(self.masks[0].size)


def sample_masks(vector_len: int, count: int, weight: int, rng: np.random.Generator) -> Tuple[np.ndarray, ...]:
    """``count`` masks, each selecting ``weight`` random positions."""
    weight = min(weight, vector_len)
    masks = []
    for _ in range(count):
        mask = np.zeros(vector_len, dtype=np.uint8)
        mask[rng.choice(vector_len, size=weight, replace=False)] = 1
        masks.append(mask)
    return tuple(masks)


class RunConfig(BaseModel):
    """Everything one CLI invocation needs; validated at parse time."""
    model_config = ConfigDict(frozen=True)

    protocol: Literal['intpsi', 'hampsi', 'hampsi-sample']
    role: Literal['alice', 'bob', 'both', 'dealer'] = 'both'
    d: int = Field(default=config.DEFAULT_INT_PARAMS['threshold'], ge=1)
    fpr: float = Field(default=config.DEFAULT_HAM_PARAMS['fpr'], gt=0, lt=0.5)
    ell: Optional[int] = Field(default=None, gt=0)
    T: int = Field(default=config.DEFAULT_SAMPLE_PARAMS['sample_size'], gt=1)
    t: int = Field(default=config.DEFAULT_SAMPLE_PARAMS['match_count'], gt=0)
    mask_weight: int = Field(default=config.DEFAULT_SAMPLE_PARAMS['mask_weight'], gt=0)
    L: int = Field(default=config.DEFAULT_INT_PARAMS['max_bit_len'], ge=1, le=64)
    inclusive: bool = False
    naive: bool = False
    release: bool = True
    backend: Literal['oracle', 'dh'] = 'dh'
    ahe_group: str = config.AHE_GROUP
    compute_cap: int = Field(default=config.EXP_COMPUTE_CAP, gt=0)
    listen: Optional[str] = None
    connect: Optional[str] = None
    dealer: Optional[str] = None
    seed: int = 0
    in_a: Optional[Path] = None
    in_b: Optional[Path] = None
    out: Path = config.OUTPUT_DIR

    @model_validator(mode='after')
    def _check_roles(self) -> 'RunConfig':
        if self.protocol == 'hampsi-sample' and not self.t < self.T:
            raise ValueError(f"t={self.t} must be below T={self.T}")
        if self.protocol != 'intpsi':
            get_group(self.ahe_group)
        needs_dealer = self.protocol != 'intpsi'
        if self.role in ('alice', 'both') and self.in_a is None:
            raise ValueError("Alice needs --in-a")
        if self.role in ('bob', 'both') and self.in_b is None:
            raise ValueError("Bob needs --in-b")
        if self.role == 'alice' and self.connect is None:
            raise ValueError("Alice needs --connect host:port")
        if self.role in ('bob', 'dealer') and self.listen is None:
            raise ValueError(f"{self.role} needs --listen host:port")
        if self.role == 'dealer' and not needs_dealer:
            raise ValueError("intpsi runs without a dealer")
        if self.role in ('alice', 'bob') and needs_dealer and self.dealer is None:
            raise ValueError(f"{self.protocol} needs --dealer host:port")
        return self

    def ham_params(self, vector_len: int) -> HamParams:
        return HamParams(vector_len=self.ell or vector_len, threshold=self.d, fpr=self.fpr,
                         ahe_group=self.ahe_group)

    def int_params(self) -> IntParams:
        return IntParams(threshold=self.d, max_bit_len=self.L, inclusive=self.inclusive)
