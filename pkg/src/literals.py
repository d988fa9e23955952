# Copyright 2023 Canonical Ltd.
# See LICENSE file for licensing details.

"""Manager for handling flowlab literals."""

APP_NAME = "flowlab"

# Domain used by every experiment: (-w, w)^2 containing the unit ball.
HALF_WIDTH = 1.5
MAX_LEVEL = 10
MAX_SUBDIV = 6

# Linear solver defaults.
CG_TOL = 1e-10
CG_MAXIT_FACTOR = 10

# Stability monitor.
STABILITY_REL_TOL = 1e-10
PRANDTL_EYRING_SAFEGUARD_RADIUS = 1e-12

# ADMM.
ADMM_RHO0 = 1.0
ADMM_MU = 10.0
ADMM_SCALE = 2.0
ADMM_MAXIT = 20000
ADMM_RHO_MIN = 1e-8
ADMM_RHO_MAX = 1e8
ADMM_DELTA_STOP_POWER = 5

# Fixed-point implicit solver.
FP_INNER_TOL = 1e-8
FP_MAX_INNER = 500

# Quadrature.
L2_SUBDIV = 2

# Condition checker.
C3_DIFF_STEP = 1e-6
SAMPLE_REL_TOL = 1e-10
CONDITION_REL_TOL = 1e-5

# Output formats.
RUN_CSV_COLUMNS = [
    "k",
    "t",
    "l2_error",
    "energy",
    "kinetic_sum",
    "dissipation_sum",
    "stability_slack",
]
TABLE_CSV_COLUMNS = [
    "level",
    "h",
    "eps_mode",
    "max_l2_error",
    "rate",
    "scheme",
    "status",
]
COMPARE_CSV_COLUMNS = ["k", "t", "difference", "max_norm"]
SNAPSHOT_CSV_COLUMNS = ["x1", "x2", "value"]
STABILITY_CSV_COLUMNS = [
    "tau",
    "steps",
    "min_relative_slack",
    "energy_nonincreasing",
    "status",
]
FLUX_CSV_COLUMNS = [
    "example",
    "t",
    "max_discrepancy",
    "max_flux_norm",
    "samples",
]

STATUS_OK = "ok"
STATUS_FAILED = "failed"
STATUS_UNSTABLE = "unstable"

INITIAL_DATUM = "nodal interpolation"

# Reference maximal L2 errors, used by the acceptance runs.
DISK_TABLE = {
    "implicit": {3: 0.3135, 4: 0.1999, 5: 0.1421, 6: 0.1313},
    0.5: {3: 0.4024, 4: 0.3179, 5: 0.2276, 6: 0.1882, 7: 0.1487},
    1.0: {3: 0.2515, 4: 0.1495, 5: 0.1139, 6: 0.1005, 7: 0.0813},
    2.0: {3: 0.1342, 4: 0.1197, 5: 0.1030, 6: 0.0980, 7: 0.0786},
}
CONE_TABLE = {
    "implicit": {3: 0.1100, 4: 0.0753, 5: 0.0129, 6: 0.0066},
    0.5: {3: 0.3368, 4: 0.3432, 5: 0.2795, 6: 0.2169, 7: 0.1615},
    1.0: {3: 0.2936, 4: 0.2729, 5: 0.1808, 6: 0.1087, 7: 0.0617},
    2.0: {3: 0.1809, 4: 0.1490, 5: 0.0956, 6: 0.0588, 7: 0.0364},
}