"""acoustica: inverse design of 2D acoustic structures.

Hybrid FE/FD explicit wave solver, adjoint-state gradients of a regularized
trace-misfit objective, and an adaptive conjugate-gradient loop with
symmetric local mesh refinement.
"""

from .adjoint import ResidualSource, adjoint_solve, compatibility_weight
from .errors import (
    AcousticaError,
    ConfigError,
    DiscretizationError,
    DivergenceError,
    GeometryError,
    LineageError,
    ParameterError,
    RefinementError,
    ShapeError,
    StabilityError,
)
from .experiments import (
    ExperimentConfig,
    FourierSnapshot,
    fourier_snapshot,
    generate_target,
    load_config,
    paper_domain,
    reflection_metric,
    run_experiment,
    transit_time,
)
from .forward import (
    ObservationTrace,
    SourceSpec,
    TimeGrid,
    TimeSeriesField,
    discrete_energy,
    forward_solve,
    plane_wave_source,
)
from .geometry import (
    REGION_BUFFER,
    REGION_DESIGN,
    REGION_SHIELD,
    DomainGeometry,
    Rect,
    build_geometry,
    triangulate_rectangle,
)
from .grid import FDGrid
from .hybrid import HybridSystem, hybrid_step
from .mesh import (
    CoefficientField,
    TriMesh,
    interpolate_coefficient,
    red_split_elements,
    refine_symmetric,
)
from .objective import (
    GradientField,
    TikhonovConfig,
    assemble_gradient,
    evaluate_functional,
)
from .optimizer import (
    AGCMConfig,
    LevelResult,
    OptimizerState,
    cg_direction,
    regularization_weight,
    run_agcm,
    run_inner_loop,
    step_size,
    update_coefficient,
)

__version__ = "0.1.0"
