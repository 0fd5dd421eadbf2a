"""Regenerates us_daily_2020.csv, the offline fixture used by the test suite.

The series follows the column layout of the national daily file of the
public COVID tracking feed (ISO dates, empty cell = not yet reported) and
reproduces the broad 2020 shape of the national counts: a spring wave
peaking in late April, a June trough and a summer wave peaking around
July 23. Values are synthetic; rerunning this script is byte-stable.
"""
import csv
from datetime import date, timedelta

import numpy as np
from scipy.interpolate import PchipInterpolator

START = date(2020, 1, 22)
END = date(2020, 9, 15)
rng = np.random.default_rng(20200911)

days = [(START + timedelta(d)) for d in range((END - START).days + 1)]
n = len(days)
idx = np.arange(n)


def day(s):
    return (date.fromisoformat("2020-" + s) - START).days


def curve(knots, noise=0.0, start=None, weekly=0.0):
    xs = np.array([day(k) for k, _ in knots], dtype=float)
    ys = np.log(np.array([v for _, v in knots], dtype=float))
    f = PchipInterpolator(xs, ys, extrapolate=True)
    out = np.exp(f(idx))
    if weekly:
        dow = np.array([d.weekday() for d in days])
        out *= np.where(dow == 6, 1 - weekly, np.where(dow == 0, 1 - weekly / 2, 1.0))
    if noise:
        out *= np.exp(rng.normal(0.0, noise, n))
    out = np.round(out)
    if start is not None:
        out[: day(start)] = np.nan
    return out


hosp_current = curve([("03-17", 325), ("03-24", 4000), ("03-31", 22000), ("04-07", 43000),
                      ("04-14", 56000), ("04-20", 59900), ("04-28", 56000), ("05-10", 47000),
                      ("05-25", 38000), ("06-08", 30000), ("06-15", 27900), ("06-25", 33000),
                      ("07-05", 44000), ("07-15", 55000), ("07-23", 59700), ("07-31", 56500),
                      ("08-10", 51000), ("08-20", 43500), ("08-31", 36000), ("09-15", 30500)],
                     noise=0.006, start="03-17")
icu_current = curve([("03-25", 1300), ("04-10", 14500), ("04-22", 15500), ("05-20", 9500),
                     ("06-15", 6000), ("07-05", 8800), ("07-25", 11500), ("08-31", 7600),
                     ("09-15", 6300)], noise=0.01, start="03-25")
vent_current = curve([("03-26", 400), ("04-10", 6500), ("04-22", 7000), ("05-20", 4400),
                      ("06-15", 2400), ("07-05", 3000), ("07-25", 3800), ("08-31", 2400),
                      ("09-15", 2000)], noise=0.012, start="03-26")
cases = curve([("01-22", 1), ("03-01", 20), ("03-15", 900), ("03-25", 13000), ("04-04", 32000),
               ("04-24", 30000), ("05-15", 24000), ("06-05", 21000), ("06-20", 30000),
               ("07-01", 50000), ("07-16", 74000), ("07-24", 72000), ("08-10", 54000),
               ("08-31", 40000), ("09-15", 38000)], noise=0.05, weekly=0.18)
tests = curve([("01-22", 5), ("03-01", 200), ("03-15", 15000), ("03-31", 100000),
               ("04-20", 160000), ("05-20", 400000), ("06-20", 550000), ("07-20", 800000),
               ("08-20", 720000), ("09-15", 800000)], noise=0.06, weekly=0.2)
deaths = curve([("02-28", 1), ("03-15", 15), ("03-31", 900), ("04-15", 2300), ("05-01", 1900),
                ("05-25", 1100), ("06-20", 600), ("07-08", 650), ("07-28", 1150),
                ("08-31", 850), ("09-15", 780)], noise=0.12, weekly=0.3)
deaths[: day("02-28")] = 0
hosp_new = curve([("03-20", 400), ("04-05", 3000), ("04-20", 2600), ("05-20", 1500),
                  ("06-15", 900), ("07-10", 2300), ("07-25", 2500), ("08-31", 1300),
                  ("09-15", 1100)], noise=0.15, weekly=0.25, start="03-20")
recovered_new = curve([("04-01", 900), ("04-20", 8000), ("05-20", 12000), ("06-20", 12000),
                       ("07-20", 30000), ("08-31", 25000), ("09-15", 22000)],
                      noise=0.2, start="04-01")
pending = curve([("03-05", 100), ("03-25", 60000), ("04-05", 16000), ("05-01", 5000),
                 ("06-01", 2200), ("07-15", 4000), ("09-15", 9000)], noise=0.2, start="03-05")
states = np.clip(np.round(np.interp(idx, [0, day("03-05"), day("03-16")], [1, 10, 56])), 1, 56)

cases = np.minimum(cases, tests)
neg_new = tests - cases
positive = np.cumsum(cases)
negative = np.cumsum(neg_new)
total_tests = positive + negative
death = np.cumsum(deaths)
hosp_cum = np.nancumsum(hosp_new)
hosp_cum[np.isnan(hosp_new)] = np.nan
icu_cum = np.round(np.nancumsum(np.where(np.isnan(icu_current), np.nan, icu_current * 0.012)))
icu_cum[np.isnan(icu_current)] = np.nan
vent_cum = np.round(np.nancumsum(np.where(np.isnan(vent_current), np.nan, vent_current * 0.009)))
vent_cum[np.isnan(vent_current)] = np.nan
recovered = np.nancumsum(recovered_new)
recovered[np.isnan(recovered_new)] = np.nan
pos_neg = positive + negative
total = pos_neg + np.nan_to_num(pending)

columns = [
    ("states", states), ("positive", positive), ("negative", negative), ("pending", pending),
    ("hospitalizedCurrently", hosp_current), ("hospitalizedCumulative", hosp_cum),
    ("inIcuCurrently", icu_current), ("inIcuCumulative", icu_cum),
    ("onVentilatorCurrently", vent_current), ("onVentilatorCumulative", vent_cum),
    ("recovered", recovered), ("death", death), ("hospitalized", hosp_cum),
    ("totalTestResults", total_tests), ("total", total), ("posNeg", pos_neg),
    ("deathIncrease", deaths), ("hospitalizedIncrease", hosp_new),
    ("negativeIncrease", neg_new), ("positiveIncrease", cases),
    ("totalTestResultsIncrease", tests),
]

with open("us_daily_2020.csv", "w", newline="") as fh:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["date"] + [c for c, _ in columns])
    # The public feed lists newest first.
    for i in reversed(range(n)):
        row = [days[i].isoformat()]
        for _, col in columns:
            v = col[i]
            row.append("" if np.isnan(v) else str(int(v)))
        w.writerow(row)
