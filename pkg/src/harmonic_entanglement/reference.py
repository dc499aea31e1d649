"""Published operating points and measured values used as regression anchors."""

import numpy as np

# Mean measured correlation matrix at the best operating point, detected light,
# quadrature order (Xa+, Xa-, Xb+, Xb-).
MEASURED_CORRELATION = np.array([
    [0.71, 0.0, -0.25, -0.02],
    [0.0, 2.45, -0.07, 1.42],
    [-0.25, -0.07, 0.83, 0.0],
    [-0.02, 1.42, 0.0, 2.56],
])
MEASURED_INSEPARABILITY = 0.74
MEASURED_LOCAL_SQUEEZING = (0.11, 0.15)

# best operating point, seed / pump in mW, de-amplification
STAR_SEED_MW = 81.0
STAR_PUMP_MW = 9.0

P_THRESHOLD_MW = 85.0
SWEEP_TOTAL_MW = 65.0

# entangled ranges of the 65 mW angle sweep, in units of pi
OBSERVED_BANDS = ((-0.41, 0.15), (0.41, 0.47))
# best inseparability seen in the pump-enhanced and pump-depleted bands
OBSERVED_BAND_MINIMA = (0.76, 0.79)

LINEWIDTHS_HZ = (18e6, 60e6)
ESCAPE_EFFICIENCIES = (0.92, 0.86)
DETECTION_EFFICIENCIES = (0.87, 0.88)
SIDEBAND_HZ = 7.8e6
WAVELENGTH_A = 1064e-9
