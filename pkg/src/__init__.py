"""
Source package for the FDX testing toolkit
"""
from src.errors import (
    CapacityError,
    DomainError,
    EquivalenceError,
    EstimationError,
    FdxError,
    InputFormatError,
)
from src.pbd import binomial_tail_gt, entropy_prefilter_threshold, pbd_pmf, pbd_tail_gt
from src.twogroup import (
    EmpiricalNull,
    GaussianComponent,
    LfdrVector,
    TwoGroupModel,
    fit_empirical_null,
    fit_mixture_em,
    lfdr_conservative,
    lfdr_empirical,
    lfdr_from_mixture,
    lfdr_oracle,
    pvalue_from_z,
)
from src.procedures import (
    FdxLevel,
    RejectionResult,
    bh,
    guo_romano,
    lehmann_romano,
    procedure1,
    procedure2,
    sc_adaptive,
)
from src.oracle import DependenceModel, enumerate_posterior, exchangeable_lfdr
