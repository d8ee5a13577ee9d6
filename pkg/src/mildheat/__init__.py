"""mildheat: a numerical laboratory for absorbing-boundary heat flow with
measure initial data.

Subpackages cover explicit Dirichlet heat kernels on the whole space, the
half-space and the interval (``kernels``), nonnegative Radon measures with
interior, surface and atomic parts (``measures``), singularity-aware
adaptive quadrature (``quadrature``), monotone Picard construction of mild
solutions (``solver``), initial-trace recovery (``trace``), numeric
solvability criterion checks (``criteria``), smooth space-time cutoffs and
the differential-inequality bound (``cutoffs``), and a batch experiment
runner (``cli``).
"""

__version__ = "0.1.0"
