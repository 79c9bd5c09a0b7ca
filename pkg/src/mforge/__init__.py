"""Dyadic cylinder measures, shifts of finite type, and a labelled Cantor
construction whose measure fails the multifractal formalism everywhere."""
from __future__ import annotations

__version__ = "0.1.0"

from .construction import (
    ConstructedMeasure,
    ConstructionPlan,
    KPoint,
    decompose,
    h_limit,
    mu_mass,
    plan,
    sample_point,
)
from .core import (
    BernoulliMeasure,
    ConditionedMeasure,
    CylinderMeasure,
    DyadicCylinder,
    MeasureDump,
    RotationExtension,
    Support,
    bernoulli,
    check_normalization,
    enumerate_support,
    lebesgue,
    mass,
    read_dump,
    rotation_extend,
    write_dump,
)
from .errors import *  # noqa: F401,F403
from .sft import (
    ParryMeasure,
    Sft,
    build_sft,
    burn_in,
    distortion_constant,
    entropy_bits,
    full_shift,
    golden_mean,
    parry_mass,
    partition_sum_log2,
    word_count_log2,
)
from .spectra import (
    SpectrumEstimate,
    coarse_counts,
    diagonal_fixed_point,
    ld_spectrum,
    legendre,
    local_dim,
    tau,
)
from .targeting import LabelInterval, SftFamily, build_family, find_sft, label_interval
