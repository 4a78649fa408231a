"""Published numbers used as cross-checks, as printed (two decimals)."""

# Identity CR^-1 for one z-scored 1000-sample segment, q=1, m=1.
IDENTITY_CR_INV_SEGMENT = 2.00

# Identity CR^-1 on the 178-sample seizure recordings, q=2, keyed by m.
IDENTITY_CR_INV_UCI = {15: 4.17, 16: 4.18, 17: 4.19, 18: 4.20, 19: 4.21, 20: 4.22, 21: 4.24, 22: 4.25}

# Identity CR^-1 on the MNIST test set, q=2, m=1.
IDENTITY_CR_INV_MNIST = 1.16

# Linear probe test accuracy on raw MNIST and on Extrema-Pool (m=2) reconstructions, percent.
PROBE_RAW_MNIST = 92.17
PROBE_POOL_M2_MNIST = 93.2
