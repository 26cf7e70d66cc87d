"""Fisher-Rao geometry of parametric statistical models.

Treats a regular parametric family as a Riemannian manifold carrying
the Fisher information metric and computes distances, geodesic ability
scales, intrinsic and statistical curvature, and Riemannian volumes /
Jeffreys priors.
"""

from .core import (
    ContinuousSampleSpace,
    Dataset,
    DomainError,
    FiniteSampleSpace,
    IdentityReport,
    ModelFamily,
    QuadratureError,
    RankDeficiencyWarning,
    SingularMetricError,
    SupportError,
    ZeroDensityError,
    check_identity,
    expect,
    numeric_fisher,
    score,
)
from .curvature import (
    CurvatureReport,
    SimulationSummary,
    SphereIsometryReport,
    christoffel,
    curvature_simulation,
    gamma2_analytic,
    gamma2_cfa_closed_form,
    gamma2_numeric,
    riemann_tensor,
    scalar_curvature,
    sphere_embedding_check,
)
from .families import (
    CEFSpec,
    RaschTest,
    TwoPLGrouped,
    bernoulli_pi_family,
    cef_loglik,
    cfa3_embedding,
    cfa3_family,
    cfa3_sigma,
    cfa3_spec,
    family_from_spec,
    iid_replicates,
    multinomial,
    mvnormal,
    normal1d,
    rasch_cef,
    rasch_family,
    rasch_joint_loglik,
    rasch_reparam_check,
    test_information,
)
from .geometry import (
    Curve,
    MetricField,
    arc_length,
    delta_moments,
    distinguishability,
    geodesic_ball_normal,
    geodesic_distance_normal,
    kl_divergence,
    line_element,
    line_path,
    normal_circle_path,
    normal_geodesic_path,
    normal_metric,
    pullback_metric,
    shoot_normal_geodesic,
)
from .inference import (
    FitResult,
    OptimizerConfig,
    fit_cef,
    fit_mle,
    jeffreys_normalization,
    jeffreys_prior,
    natural_gradient_direction,
    observed_information,
    volume_element,
)
from .irt import (
    AbilityScale,
    AbilitySE,
    ability_grid,
    ability_se,
    flatten,
    geodesic_ability,
    geodesic_ability_closed_form,
    hougaard_transform,
    ramsay_arclength,
)
from .quadrature import adaptive_simpson, tanh_sinh

__version__ = "0.1.0"
