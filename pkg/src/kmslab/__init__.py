"""kmslab: spectral Monte Carlo checks of classical KMS equilibrium.

Gaussian and Gibbs measures for truncated Hamiltonian PDEs on tori
(nonlinear Schrodinger, Hartree, nonlinear wave), plus estimators for the
equilibrium identities those measures should satisfy: the KMS condition in
exponential and bracket form, stationarity, moment hierarchies, integration
by parts, and Liouville-type drift under the truncated flow.
"""

from kmslab._stats import ResidualReport, batch_residual, ess, make_report, weighted_mean
from kmslab.lattice import (
    FieldPair,
    ModeLattice,
    SpectralField,
    apply_J,
    basis_field,
    build_lattice,
    field_from_json,
    field_to_json,
    grid_eval,
    grid_synth,
    min_grid,
    pair_real,
    sobolev_norm,
    zero_field,
)

__version__ = "0.1.0"

__all__ = [
    "ModeLattice",
    "SpectralField",
    "FieldPair",
    "build_lattice",
    "basis_field",
    "zero_field",
    "pair_real",
    "sobolev_norm",
    "apply_J",
    "grid_eval",
    "grid_synth",
    "min_grid",
    "field_to_json",
    "field_from_json",
    "ResidualReport",
    "batch_residual",
    "weighted_mean",
    "ess",
    "make_report",
    "__version__",
]
