"""Physical constants shared across the simulator."""

# Speed of light [m/s]
C_LIGHT = 299_792_458.0

# Earth gravitational parameter [m^3/s^2]
GM_EARTH = 3.986005e14

# Earth rotation rate [rad/s]
OMEGA_EARTH = 7.2921151467e-5

# WGS-84 ellipsoid
WGS84_A = 6_378_137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# Simulated carrier: L1/E1 at 1575.42 MHz, one frequency for every constellation
FREQ_L1 = 1_575.42e6
LAMBDA_L1 = C_LIGHT / FREQ_L1  # 0.190293672798 m

# C/A code chip length and the half-chip pull-in region used by the capture model
CHIP_LENGTH_M = C_LIGHT / 1.023e6  # ~293.05 m
HALF_CHIP_M = 146.5

# Receiver tracking thresholds [dB-Hz]
CN0_TRACK_THRESHOLD = 28.0
CN0_ACQUIRE_THRESHOLD = 33.0
