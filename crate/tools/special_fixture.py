"""Reference digamma and log-gamma values for the core crate's special-function tests.

Usage: python3 tools/special_fixture.py > crates/core/tests/data/special.csv
"""

import mpmath

mpmath.mp.dps = 50

xs = [1e-8, 1e-4, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.25, 1 / 3, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5,
      3.0, 4.5, 5.0, 5.999, 6.0, 6.001, 7.25, 10.0, 12.5, 20.0, 33.3, 50.0, 100.0, 123.456,
      1000.0, 1e4, 12345.678, 1e5, 1e6, 1e8]

print("x,digamma,ln_gamma")
for x in xs:
    mx = mpmath.mpf(x)
    print(f"{x!r},{mpmath.nstr(mpmath.digamma(mx), 20, min_fixed=-1, max_fixed=-1)},"
          f"{mpmath.nstr(mpmath.loggamma(mx), 20, min_fixed=-1, max_fixed=-1)}")
