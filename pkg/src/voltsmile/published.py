"""Published calibration results for the EEX snapshot of 2018-03-05.

Gamma2 / sigma indices 1..14 follow the listing order of the traded
contracts: five months, six quarters, three calendar years.
"""
import datetime as dt

VALUATION_DATE = dt.date(2018, 3, 5)

CONTRACT_LABELS = (
    "Apr/18", "May/18", "Jun/18", "Jul/18", "Aug/18",
    "Q2/18", "Q3/18", "Q4/18", "Q1/19", "Q2/19", "Q3/19",
    "Cal-19", "Cal-20", "Cal-21",
)

ONE_FACTOR = {
    "alpha": 0.0059,
    "beta": 0.0019,
    "gamma2": (0.0464, 0.0327, 0.0315, 0.0311, 0.0293, 0.0368, 0.0284,
               0.0310, 0.0304, 0.0211, 0.0209, 0.0271, 0.0255, 0.0244),
}

TWO_FACTOR = {
    "alpha1": 0.1890,
    "beta1": 0.0586,
    "alpha2": 0.0005,
    "beta2": 0.0002,
    "gamma1": 0.1656,
    "mu": 0.0044,
    "gamma2": (0.0129, 0.0054, 0.0060, 0.0068, 0.0064, 0.0081, 0.0066,
               0.0091, 0.0093, 0.0055, 0.0057, 0.0093, 0.0084, 0.0078),
}

BLACK_SIGMA = (0.0156, 0.0132, 0.0123, 0.0121, 0.0120, 0.0137, 0.0109,
               0.0106, 0.0106, 0.0094, 0.0094, 0.0106, 0.0104, 0.0100)

# (mean, variance, skewness, excess kurtosis) of J1(1) and J2(1)
DRIVER_MOMENTS = {
    1: (0.0, 6.1603, 2.1964, 23.1341),
    2: (0.0, 2508.1, 53.197, 10192.0),
}

# Illustrative futures levels (EUR/MWh) used to build synthetic snapshots;
# Q2/18 is the day-weighted average of Apr/May/Jun.
SYNTHETIC_FUTURES = {
    "Apr/18": 36.0, "May/18": 33.5, "Jun/18": 35.0, "Jul/18": 40.0, "Aug/18": 39.0,
    "Q3/18": 40.5, "Q4/18": 46.0, "Q1/19": 49.0, "Q2/19": 37.5, "Q3/19": 40.0,
    "Cal-19": 43.0, "Cal-20": 41.0, "Cal-21": 40.0,
}
