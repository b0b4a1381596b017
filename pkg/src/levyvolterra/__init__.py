"""Simulation and numerical verification toolkit for Levy-driven Volterra
processes M(t) = integral of f(t, s) dL(s) over s <= t.

Subpackages:

- :mod:`levyvolterra.levy` -- centred square-integrable drivers and paths
- :mod:`levyvolterra.kernels` -- kernel contract, built-ins, admissibility evidence
- :mod:`levyvolterra.quadrature` -- singular/improper/jump-measure integration
- :mod:`levyvolterra.volterra` -- convolution paths M and their jumps/moments
- :mod:`levyvolterra.stransform` -- test functionals, signed change of measure,
  S-transform formulas and Monte Carlo
- :mod:`levyvolterra.charfn` -- characteristic functions and the Fourier route
- :mod:`levyvolterra.itoverify` -- term-by-term verification of the generalised
  change-of-variable identity
- :mod:`levyvolterra.cli` -- scenario runner
"""

from .levy import (AtomicLaw, CompoundPoisson, DensityLaw, LevyModel, LevyPath,
                   NoJumps, TemperedStable, UniformLaw, coarsen, drift_gamma,
                   nu_moment, reconstruct, simulate_path, simulate_paths)
from .kernels import (KClassReport, KernelHandle, ProbeConfig, ddt_l2_norm_sq,
                      frac_kernel, indicator_kernel, l2_norm_sq,
                      validate_class_K)
from .quadrature import (QuadratureError, QuadratureSpec, QuadResult,
                         integrate_singular, integrate_tail, nu_integrate)
from .volterra import VolterraPath, batch_values, moment_estimate, simulate_M
from .stransform import (Bump, SEstimate, TestFunctional, TimeProfile,
                         WeightMaker, default_battery, doleans_weight,
                         ddt_s_M, s_M, s_lambda_rhs, s_M_diamond_rhs,
                         s_N_rhs, s_transform_mc)
from .charfn import (GrowthClassError, SmoothTestFunction, cf_M, cf_M_Qg,
                     damped_poly, ddt_cf_M_Qg, ddt_s_G_of_M, gaussian_bump,
                     quadratic, s_G_of_M)
from .itoverify import (ItoTermSet, LatticeConfig, MomentGateError,
                        VerificationEngine, VerificationReport,
                        eval_terms_expectation, eval_terms_pathwise,
                        eval_terms_stransform, pathwise_rms_study,
                        verification_report)

__all__ = [
    "AtomicLaw", "CompoundPoisson", "DensityLaw", "LevyModel", "LevyPath",
    "NoJumps", "TemperedStable", "UniformLaw", "coarsen", "drift_gamma",
    "nu_moment", "reconstruct", "simulate_path", "simulate_paths",
    "KClassReport", "KernelHandle", "ProbeConfig", "ddt_l2_norm_sq",
    "frac_kernel", "indicator_kernel", "l2_norm_sq", "validate_class_K",
    "QuadratureError", "QuadratureSpec", "QuadResult",
    "integrate_singular", "integrate_tail", "nu_integrate",
    "VolterraPath", "batch_values", "moment_estimate", "simulate_M",
    "Bump", "SEstimate", "TestFunctional", "TimeProfile", "WeightMaker",
    "default_battery", "doleans_weight", "ddt_s_M", "s_M", "s_lambda_rhs",
    "s_M_diamond_rhs", "s_N_rhs", "s_transform_mc",
    "GrowthClassError", "SmoothTestFunction", "cf_M", "cf_M_Qg", "damped_poly",
    "ddt_cf_M_Qg", "ddt_s_G_of_M", "gaussian_bump", "quadratic", "s_G_of_M",
    "ItoTermSet", "LatticeConfig", "MomentGateError", "VerificationEngine",
    "VerificationReport", "eval_terms_expectation", "eval_terms_pathwise",
    "eval_terms_stransform", "pathwise_rms_study", "verification_report",
]

__version__ = "0.1.0"
