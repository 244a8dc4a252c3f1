"""Charts, fields and intrinsic differential operators."""
from .charts import SPHERE, TORUS, Chart, ChartPoint, FlatTorus, MetricData, Sphere, metric_data
from .fields import FieldSpec, ScalarField, as_field
from .grid import Grid
from .identities import d_hess_residual, observed_order, quadrature_ibp_residual, tensor_ibp_residual
from .operators import (DiffusionTensor, contract, covariant_derivative, diffusion_tensor,
                        divergence_tensor, divergence_vf, double_divergence, frame_derivatives,
                        hessian, hessian_along, lie_derivative, lie_derivative2)

__all__ = [
    "SPHERE", "TORUS", "Chart", "ChartPoint", "FlatTorus", "MetricData", "Sphere", "metric_data",
    "FieldSpec", "ScalarField", "as_field", "Grid", "DiffusionTensor", "contract",
    "covariant_derivative", "diffusion_tensor", "divergence_tensor", "divergence_vf",
    "double_divergence", "frame_derivatives", "hessian", "hessian_along", "lie_derivative",
    "lie_derivative2", "d_hess_residual", "observed_order", "quadrature_ibp_residual",
    "tensor_ibp_residual",
]
