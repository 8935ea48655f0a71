"""Numeric defaults shared by the solver, simulator and oracle"""

#: drift magnitudes at or below this are classified as a martingale
TOL_ZERO = 1e-12

#: ``|2 mu + sigma^2|`` at or below this is the critical case
TOL_CRITICAL = 1e-12

#: absolute and relative tolerance of the value-function solve
ODE_TOL = 1e-10

#: number of points of the stored value-function grid (including x = 0)
GRID_POINTS = 2048

#: right end of the stored value-function grid
X_MAX = 50.0

#: the boundary value problem is posed on ``[x0, X_FAR_FACTOR * x_max]``
X_FAR_FACTOR = 20.0

#: number of boundary-layer series coefficients kept
SERIES_TERMS = 6

#: largest tolerated ratio of successive series terms at the start point
SERIES_RATIO_MAX = 0.01

#: band around [0, 1] that g' may not leave during the solve
GPRIME_GUARD = 1e-6

#: tolerance of the discrete monotonicity and concavity checks
TOL_CONCAVITY = 1e-9

#: direct power series for h(y) is used for q = y/(Lambda sigma^2) up to here
Q_SWITCH = 100.0

#: continued fraction is used for q up to here, the scaled library ratio beyond
Q_CF_MAX = 2500.0

#: Monte Carlo defaults
MC_PATHS = 100000
MC_STEPS = 512
MC_SUBSTEPS = 8
MC_BLOCK = 2048

#: default horizon keeps the tail bound below this fraction of the value
TAIL_FRACTION = 1e-3

#: stability safety factor of the explicit oracle march
ORACLE_CFL = 0.9

#: default number of stored time levels of an oracle march
ORACLE_SAVED_LEVELS = 201

#: two-sided 95% normal quantile
Z95 = 1.96
