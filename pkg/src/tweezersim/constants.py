"""Physical constants and the Rb-87 data used throughout the simulator.

Values are pinned rather than pulled from CODATA-latest so that derived
trap numbers stay reproducible.  The D-line linewidth is deliberately the
rounded 2*pi*6 MHz value used in the experimental analysis, not the
spectroscopic 6.0666 MHz.
"""

from scipy.constants import atomic_mass, c, h, hbar, k as k_B  # noqa: F401

# Rb-87 mass (kg); 86.909180531 u
RB87_MASS = 86.909180531 * atomic_mass

# D-line natural linewidth (rad/s) as used in the fluorescence analysis
RB87_LINEWIDTH = 2.0 * 3.141592653589793 * 6.0e6

# D2 saturation intensity, 1.67 mW/cm^2 in W/m^2
RB87_I_SAT = 16.7

# Optical frequencies of the D1 (795 nm) and D2 (780 nm) lines (rad/s)
RB87_D1_FREQUENCY = 2.0 * 3.141592653589793 * 377.107463380e12
RB87_D2_FREQUENCY = 2.0 * 3.141592653589793 * 384.230484468e12

CONSTANTS_VERSION = "rb87-2008-experiment/1"
