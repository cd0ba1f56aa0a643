"""Physical constants shared across the package. SI units throughout."""

# Speed of light (m/s), IERS conventional value.
C_LIGHT = 299_792_458.0

# Earth rotation rate (rad/s), WGS-84.
OMEGA_EARTH = 7.2921151467e-5

# WGS-84 ellipsoid.
WGS84_A = 6_378_137.0            # semi-major axis (m)
WGS84_F = 1.0 / 298.257223563    # flattening
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)   # first eccentricity squared

# Earth gravitational parameter (m^3/s^2), used for circular-orbit rates.
MU_EARTH = 3.986004418e14

# GPS L1 carrier wavelength (m), the default band for simulated signals.
WAVELENGTH_L1 = C_LIGHT / 1575.42e6
