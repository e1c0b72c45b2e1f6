"""Heat kernels, scale functions and structural checks for symmetric jump
processes on finite metric measure spaces."""
__version__ = "0.1.0"

from .kernels import BACKEND
from .scale import ScaleFunction, ScaleTriple, compose_phi, crossover_radius, make_triple, phi_c_from_phi_j
from .envelope import EnvelopeConstants, Regime, hk_envelope, p_c_envelope, p_j_envelope
from .space import FiniteMetricMeasureSpace, build_lattice_torus, build_sierpinski_graph
from .process import (Generator, JumpKernelSpec, SubordinatorSpec, build_generator, capacity,
                      exact_heat_kernel, laplace_exponent, mean_exit_time)
from .verify import ConditionVerdict, CorridorReport, fit_corridor

__all__ = ["__version__", "BACKEND", "ScaleFunction", "ScaleTriple", "compose_phi", "crossover_radius",
           "make_triple", "phi_c_from_phi_j", "EnvelopeConstants", "Regime", "hk_envelope", "p_c_envelope",
           "p_j_envelope", "FiniteMetricMeasureSpace", "build_lattice_torus", "build_sierpinski_graph",
           "Generator", "JumpKernelSpec", "SubordinatorSpec", "build_generator", "capacity",
           "exact_heat_kernel", "laplace_exponent", "mean_exit_time", "ConditionVerdict", "CorridorReport",
           "fit_corridor"]
