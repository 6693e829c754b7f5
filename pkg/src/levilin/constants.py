"""Physical constants (SI, CODATA 2018) and unit helpers."""

import math

HBAR = 1.054571817e-34      # J s
K_B = 1.380649e-23          # J/K (exact)
E_CHARGE = 1.602176634e-19  # C (exact)
AMU = 1.66053906660e-27     # kg
G_NEWTON = 6.67430e-11      # m^3 kg^-1 s^-2

# Reference (nucleon) mass used by the collapse-model rate formulas.
M_NUCLEON = AMU

MBAR = 100.0                # Pa per mbar (exact)

TWO_PI = 2.0 * math.pi


def mbar_to_pa(p_mbar):
    return p_mbar * MBAR


def pa_to_mbar(p_pa):
    return p_pa / MBAR
