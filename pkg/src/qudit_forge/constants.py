"""Physical constants in the frequency units used throughout the package.

Energies are in MHz, fields in tesla, temperatures in kelvin and times in ns.
"""

#: Bohr magneton over Planck constant, MHz/T.
MU_B_OVER_H = 13996.2449
#: Nuclear magneton over Planck constant, MHz/T.
MU_N_OVER_H = 7.6225932
#: Boltzmann constant over Planck constant, MHz/K.
K_B_OVER_H = 2.0836619e4

#: MHz * ns -> cycles.
MHZ_NS = 1e-3
