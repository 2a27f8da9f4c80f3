"""Shared physical constants and scales.

Everything in the package works in units where hbar = 1 and the control
amplitude scale ``omega`` defaults to 1.  ``T2MAX`` is the longest exact
minimal gate time among two-qubit unitaries under the normalized-control
constraint; it is the natural time unit for sweeps and fits.
"""

import math

#: Default control amplitude scale.
OMEGA = 1.0

#: Largest exact two-qubit minimal gate time, sqrt(5)*pi/4 (omega = 1).
#: Attained by gates with eigenvalues (1, i, -1, -i).
T2MAX = math.sqrt(5.0) * math.pi / 4.0
