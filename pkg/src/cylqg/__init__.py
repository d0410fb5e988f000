"""Finite-volume/semi-Lagrangian solver for quasi-geostrophic flow in a cylinder
with a prescribed lateral flux datum."""
from .errors import (CFLViolation, CompatibilityViolation, ConfigError, CylQGError, GridError,
                     InitializationError, NoContraction, NonConvergence, SnapshotError)
from .geometry import (CylGrid, ModeStack, ScalarField3D, SurfaceField, circle_average,
                       from_modes, make_grid, read_field, to_modes, write_field)
from .stratification import (StratificationProfile, VerticalChart, solve_vertical_chart,
                             validate_profile)
from .elliptic import (EllipticData, EllipticSolver, StreamFunction, check_basic_compatibility,
                       check_full_compatibility, energy_norm, neumann_trace, project_compatible,
                       solve_elliptic)
from .transport import (ParticleSet, VelocityField, advect_interior, advect_surface,
                        trace_particles, velocity_from_stream)

from .timestepper import (Controls, PicardDiagnostics, QGModel, QGState, RunStatus, apply_S,
                          estimate_R, measure_contraction, picard_advance, run_loop)
from .norms import data_norm, sobolev_norm
from .config import RunConfig, load_config, parse_config
from .io import snapshot_load, snapshot_read, snapshot_write
from .runner import resume, run

__version__ = "0.1.0"
