"""Out-of-distribution generalization bounds from f-divergences, IPMs and their interpolation."""

from .bounds import (
    BoundReport,
    LossModel,
    interpolated_bound,
    pe_bound_chi2,
    pe_bound_fdiv_bounded,
    pe_bound_kl_subgamma,
    pe_bound_kl_subgaussian,
    pe_bound_tv,
    pe_bound_tv_decomposed,
    pe_bound_wasserstein,
    pp_bound,
)
from .cgf import CGFQuery, PsiBound, generalized_cgf, gibbs_tilt, psi_star_inverse
from .dist import (
    FiniteDist,
    FiniteJoint,
    FiniteKernel,
    GaussianSpec,
    compose,
    decompose_relative,
    marginal,
)
from .divergence import (
    chain_rule_chi2,
    chain_rule_tv,
    chi2_gaussian,
    f_divergence,
    kl_gaussian,
    total_variation,
    wasserstein1,
)
from .examples import BernoulliExperiment, GaussianExperiment, sweep
from .fgen import FGenerator, check_lemma3_condition, conjugate_eval, registry_get

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
