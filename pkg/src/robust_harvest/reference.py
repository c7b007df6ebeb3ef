"""Published field-study numbers used as regression targets and defaults.

Days count from May 1 (day 0). Weights in grams, rates in 1/day.
"""

from __future__ import annotations

from typing import NamedTuple

# Deterministic logistic fits to the yearly averaged catch series: (w0, w_max, r).
LOGISTIC_FITS = {
    2016: (12.9, 104.7, 0.0241),
    2017: (9.8, 91.0, 0.0315),
    2018: (8.5, 92.8, 0.0298),
    2019: (8.2, 102.9, 0.0297),
    2020: (6.5, 78.2, 0.0383),
    2021: (7.1, 107.1, 0.0371),
    2022: (17.0, 105.7, 0.0223),
    2023: (20.5, 83.2, 0.0272),
}


class CompetitionStats(NamedTuple):
    day: int
    count: int
    mean: float
    std: float | None
    skew: float | None
    median: float | None
    max: float
    min: float


# One-day casting-net competition summaries (skewness rounded to one decimal).
COMPETITION_STATS = {
    2016: CompetitionStats(98, 207, 55.2, None, None, None, 120.5, 38.0),
    2017: CompetitionStats(97, 234, 55.6, 19.1, 0.8, 52.8, 132.0, 20.5),
    2018: CompetitionStats(96, 189, 57.3, 18.5, 1.2, 54.5, 152.0, 16.0),
    2019: CompetitionStats(95, 227, 56.4, 18.2, 0.9, 54.0, 119.5, 20.0),
    2023: CompetitionStats(90, 297, 52.2, 21.0, 1.4, 46.5, 163.0, 11.0),
}

# Two-decimal empirical skewness reported alongside the uncertain-model fits.
EMPIRICAL_SKEW = {2017: 0.77, 2018: 1.15, 2019: 0.95, 2023: 1.42}


class UncertainFit(NamedTuple):
    year: int
    w0: float
    w_lo: float
    w_hi: float
    a: float
    b: float
    r: float
    er: float
    mean: float
    std: float
    skew: float

    @property
    def day(self) -> int:
        return COMPETITION_STATS[self.year].day


# Moment-matched uncertain logistic fits with w0 = 10 g for every year.
UNCERTAIN_FITS_W0_10 = [
    UncertainFit(2017, 10.0, 7, 177, 4.0, 9.5, 0.053, 2.77e-05, 55.6, 19.1, 0.38),
    UncertainFit(2018, 10.0, 9, 147, 3.0, 4.5, 0.041, 1.36e-05, 57.3, 18.5, 0.08),
    UncertainFit(2019, 10.0, 2, 151, 4.75, 7.75, 0.052, 4.47e-05, 56.4, 18.2, 0.18),
    UncertainFit(2023, 10.0, 29, 293, 1.0, 9.75, 0.059, 5.33e-05, 52.2, 21.0, 1.43),
]

# Same, with w0 taken from the yearly logistic fit.
UNCERTAIN_FITS_YEARLY_W0 = [
    UncertainFit(2017, 9.8, 24, 187, 2.0, 8.25, 0.075, 3.34e-05, 55.6, 19.1, 0.84),
    UncertainFit(2018, 8.5, 24, 200, 1.75, 5.0, 0.038, 4.38e-05, 57.3, 18.5, 0.40),
    UncertainFit(2019, 8.2, 8, 169, 4.5, 10.25, 0.066, 6.43e-05, 56.4, 18.2, 0.38),
    UncertainFit(2023, 20.5, 24, 123, 1.0, 2.5, 0.079, 4.37e-05, 52.2, 21.0, 0.73),
]

ALL_UNCERTAIN_FITS = UNCERTAIN_FITS_W0_10 + UNCERTAIN_FITS_YEARLY_W0

# Harvest season: 120 days starting July 1, i.e. growth-day 61.
SEASON_START_DAY = 61
SEASON_LENGTH_DAYS = 120
