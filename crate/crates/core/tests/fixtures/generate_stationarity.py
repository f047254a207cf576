"""Freezes reference ADF/KPSS statistics computed with statsmodels.

Run from this directory: python3 generate_stationarity.py
"""
import json

import numpy as np
from statsmodels.datasets import macrodata
from statsmodels.tsa.stattools import adfuller, kpss

rng = np.random.default_rng(20240501)
noise = rng.standard_normal(500)
walk = np.cumsum(noise)
ar = np.zeros(300)
e = rng.standard_normal(300)
for t in range(1, 300):
    ar[t] = 0.8 * ar[t - 1] + e[t]
gdp = np.log(macrodata.load_pandas().data["realgdp"].to_numpy())

out = {}
for name, x in [("noise", noise), ("walk", walk), ("ar1", ar), ("log_realgdp", gdp)]:
    n = len(x)
    adf_lag = int(12 * (n / 100) ** 0.25)
    kpss_lag = int(4 * (n / 100) ** 0.25)
    a = adfuller(x, maxlag=adf_lag, autolag=None, regression="c")
    k = kpss(x, regression="c", nlags=kpss_lag)
    out[name] = {
        "series": [float(v) for v in x],
        "adf_lag": adf_lag,
        "adf_stat": float(a[0]),
        "adf_nobs": int(a[3]),
        "adf_crit": {key: float(v) for key, v in a[4].items()},
        "kpss_lag": kpss_lag,
        "kpss_stat": float(k[0]),
        "kpss_p": float(k[1]),
    }

with open("stationarity.json", "w") as f:
    json.dump(out, f, indent=1)
