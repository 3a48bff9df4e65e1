"""Numerical tolerances and unit conversions shared across the package.

Everything internal to the simulator runs in angular frequency (rad/s) and
seconds.  User-facing values (configs, CSV files, reported peaks) are Hz or
MHz.  ``hz_to_rad`` / ``rad_to_hz`` are the only conversion points.
"""

import math

TWO_PI = 2.0 * math.pi

# Tolerance table.  Tests and runtime checks import from here.
HERMITIAN_RTOL = 1e-12
UNITARY_ATOL = 1e-10
TRACE_ATOL = 1e-10
POSITIVITY_ATOL = 1e-10
HERMITIAN_INPUT_ATOL = 1e-9  # for expm_hermitian input check (relative to norm)
MAX_NUCLEI = 6


def hz_to_rad(f_hz):
    """Convert a frequency in Hz to angular frequency in rad/s."""
    return TWO_PI * f_hz


def rad_to_hz(w_rad):
    return w_rad / TWO_PI


MHZ = 1e6
KHZ = 1e3
NS = 1e-9
US = 1e-6
MS = 1e-3
