"""Numerical thresholds and certification slacks used throughout smse.

Every tolerance that a check or an iteration compares against lives here,
so that changing one is a single edit.
"""

# geometry
THETA_MIN = 1e-3                # cut fractions below this snap the node to the boundary
PROJECTION_TOL = 1e-10          # relative to domain diameter
PROJECTION_MAX_ITER = 100
FD_STEP_REL = 1e-5              # finite-difference step for generic level sets, x diameter
BOUNDARY_SAMPLES = 4096         # dense boundary polyline used to seed projections
CURVATURE_NONNEG_TOL = 1e-10

# radial integration
RADIAL_TOL = 1e-10
U_STOP_REL = 1e-6               # stop when u <= U_STOP_REL * u0
THETA_STOP = 1e-6               # stop when theta <= -pi/2 + THETA_STOP

# Newton / continuation
NEWTON_TOL = 1e-10              # sup norm of the raw residual
NEWTON_MAX_ITER = 30
NEWTON_MAX_BACKTRACK = 20
POSITIVITY_FLOOR = 0.1          # min(u + lam*du) >= POSITIVITY_FLOOR * min(u)
LINEAR_RTOL = 1e-12
LINEAR_MAX_REFINE = 4
STEP_INITIAL = 0.25
STEP_MAX = 0.5
STEP_GROW = 1.5
STEP_MIN = 1e-6
EASY_NEWTON_ITERS = 4

# certification (slacks that scale with h are multiplied by the grid spacing)
ORDER_TOL = 1e-8                # nodewise ordering / comparison tolerance
HEIGHT_SLACK_H = 5.0            # max u <= C1 + HEIGHT_SLACK_H * h
GRADIENT_SLACK_H = 5.0          # interior max|Du| <= ring max + GRADIENT_SLACK_H * h * max|Du|
C2_SLACK_H = 5.0                # ring max|Du| <= C2 + C2_SLACK_H * h * C2
UNIQUENESS_TOL = 1e-8
BARRIER_B_LADDER = tuple(10.0 ** k for k in range(1, 9))
BARRIER_EPS_LEVELS = 12         # epsilon in d_max/2, d_max/4, ... (this many halvings)
BARRIER_T_SAMPLES = 2001        # points on [0, eps] where the majorant is evaluated
