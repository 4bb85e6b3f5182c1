"""Writes a synthetic data set with the TBI analysis schema."""
import csv
import sys

import numpy as np

rng = np.random.default_rng(20240611)
n = 800
male = rng.binomial(1, 0.6, n)
age = np.round(rng.uniform(18, 90, n), 1)
race = rng.choice(["White", "Black", "Other"], n, p=[0.6, 0.25, 0.15])
er = rng.binomial(1, 0.4, n)
year = rng.integers(2008, 2015, n)
eta = -0.5 + 0.4 * male - 0.02 * (age - 50) + 0.5 * (race == "Black") - 0.3 * (race == "Other") + 0.6 * er
rehab = rng.binomial(1, 1 / (1 + np.exp(-eta)))
p_miss = 1 / (1 + np.exp(-(-1.2 - 0.25 * (year - 2011) + 0.5 * rehab)))
miss = rng.uniform(size=n) < p_miss
out = csv.writer(open(sys.argv[1], "w", newline=""))
out.writerow(["id", "rehab", "male", "age", "race", "er", "year"])
for i in range(n):
    out.writerow([1000 + i, rehab[i], male[i], age[i], "" if miss[i] else race[i], er[i], year[i]])
