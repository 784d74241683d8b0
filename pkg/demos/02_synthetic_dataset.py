"""
A synthetic option sample and its partitions
============================================

Quotes are priced off a known smile/term surface, filtered like a real
end-of-day chain, inverted to implied volatilities and split two ways:
ten chronological samples, and nine moneyness/maturity classes each cut
into a training and a test half.
"""

from collections import Counter

import numpy as np

from ivgp.data import (
    FilterConfig,
    SurfaceConfig,
    apply_filters,
    build_partition,
    classify,
    generate_synthetic,
    make_fitness_cases,
    rejection_summary,
)

surface = SurfaceConfig(base_vol=0.15, smile_coeff=0.5, term_coeff=0.05, seed=0)
records = generate_synthetic(surface, 6670)
print(len(records), "quotes from", records[0].quote_date, "to", records[-1].quote_date)

filters = FilterConfig()
kept, report = apply_filters(records, filters)
print(rejection_summary(report, filters))

cases, dropped = make_fitness_cases(kept)
print("fitness cases:", len(cases), "dropped by inversion:", dropped)

# the targets should sit on the surface they were priced from
err = [abs(c.target_sigma - surface.surface(c.s_over_k, c.tau)) for c in cases]
print("largest deviation from the surface:", max(err))

part = build_partition(cases)
print("time-series sample sizes:", [len(s) for s in part.ts_samples])
for label, tr, te in zip(part.mtm_labels, part.mtm_train, part.mtm_test):
    print(f"{tr.name:>4}/{te.name:<4} {'-'.join(label):7s} train {len(tr):4d} test {len(te):4d}")

print(Counter(classify(c) for c in cases).most_common(3))
print("sigma range:", np.min([c.target_sigma for c in cases]), np.max([c.target_sigma for c in cases]))
