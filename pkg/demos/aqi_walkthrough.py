"""
From concentrations to an AQI category
======================================

Sub-indices, the overall index and windowed averages on a handful of readings.
"""

import numpy as np

from aqcep.aqi import (
    classify_category,
    compute_aqi,
    default_table,
    default_window_specs,
    sub_index,
    windowed_average,
)
from aqcep.pollutants import PollutantKind as P

table = default_table()

# A single PM2.5 reading sits inside the Satisfactory band (31-60 ug/m3),
# so its sub-index is interpolated between 51 and 100.
print("PM2.5 45 ->", round(sub_index(table, P.PM25, 45).value, 2))

# Sweep PM2.5 across the table to see the piecewise-linear shape.
for c in np.linspace(0, 400, 9):
    print(f"  PM2.5 {c:6.1f} -> {sub_index(table, P.PM25, c).value:6.1f}")

# The index is the worst sub-index. Three covered pollutants, one of them
# PM2.5 or PM10, are required; NO and NOx never count.
readings = {P.PM25: 45.0, P.PM10: 120.0, P.NO2: 50.0, P.CO: 1.5, P.O3: 70.0}
r = compute_aqi(table, readings)
print(f"AQI {r.rounded} ({r.category.label}), dominated by {r.dominant.value}")

print("too few pollutants ->", compute_aqi(table, {P.PM25: 45.0, P.NO: 3.0, P.NOX: 9.0}))
print("category of 100.4 ->", classify_category(100.4).label, "| of 100.5 ->", classify_category(100.5).label)

# Hourly data is averaged before indexing: 24 h windows for most pollutants
# (16 valid hours needed) and 8 h windows for CO and O3 (6 needed).
specs = default_window_specs()
hours = [40.0] * 10 + [None] * 4 + [80.0] * 10
print("PM2.5 24 h mean:", windowed_average(hours, specs[P.PM25]))
print("with only 12 valid hours:", windowed_average(hours[:12] + [None] * 12, specs[P.PM25]))
