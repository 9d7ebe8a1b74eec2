from .finsler_service import FinslerMetric, eval_F, fundamental_tensor, pullback_metric
from .legendre_service import LegendreDuality, legendre, legendre_inverse, eval_F_star, dual_fundamental_tensor
from .calculus_service import AMap, gradient, laplacian, dirichlet_energy, verify_structure_conditions
from .chart_service import DirichletSolver, solve_dirichlet, build_chart, rescaling_experiment
from .spray_service import SprayEngine, spray, riemann_curvature, berwald_connection
from .berwald_service import is_berwald, indicatrix_quadrature, averaged_metric, szabo_check, ricci_identity_check
from .report_service import ReportWriter

__all__ = ["FinslerMetric", "eval_F", "fundamental_tensor", "pullback_metric", "LegendreDuality", "legendre",
           "legendre_inverse", "eval_F_star", "dual_fundamental_tensor", "AMap", "gradient", "laplacian",
           "dirichlet_energy", "verify_structure_conditions", "DirichletSolver", "solve_dirichlet", "build_chart",
           "rescaling_experiment", "SprayEngine", "spray", "riemann_curvature", "berwald_connection", "is_berwald",
           "indicatrix_quadrature", "averaged_metric", "szabo_check", "ricci_identity_check", "ReportWriter"]
