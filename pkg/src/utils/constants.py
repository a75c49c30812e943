import math


def ceil_log4(x: float) -> int:
    """Smallest integer n >= 0 with 4**n >= x, computed without floating logs."""
    n = 0
    while 4**n < x:
        n += 1
    return n


# validation tolerances
STOCHASTIC_TOL = 1e-12  # row sums, stationary distribution mass
REVERSIBILITY_TOL = 1e-10  # detailed balance
STATIONARITY_TOL = 1e-10  # |pi P - pi|
IMAG_TOL = 1e-10  # imaginary part of a reversible kernel's eigenvalues
MU_DISTINCT_TOL = 1e-12  # two stationary means closer than this count as equal

# leading constant of the minimal index coefficient L
L_LEADING_CONSTANT = 4.0
# the same constant as used when L and D grow with time
L_LEADING_CONSTANT_ADAPTIVE = 7.0
SQRT2_DENOMINATOR = 3 - 2 * math.sqrt(2)  # 0.1715728...

EXPLORATION = "exploration"
EXPLOITATION = "exploitation"

REPORT_CADENCES = ("epochs_and_powers_of_two", "epochs", "powers_of_two")
