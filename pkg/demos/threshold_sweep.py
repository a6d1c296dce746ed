"""
Sweeping the teaming threshold
==============================

A synthetic Earth-observation market: cities in a visibility band,
companies with correlated coverage, customers clustered into tasks. As the
similarity threshold for teaming rises, companies merge into larger teams
and fewer customers go unserved.
"""

from pathlib import Path

from stackmarket.datagen import gen_instance, scenario_preset
from stackmarket.experiment import SweepConfig, emit_csv, emit_svg, run_sweep

###############################################################################
# A scaled-down first scenario: 300 customers, 30 companies, two replicas
# generated from consecutive seeds.

cfg = scenario_preset(1).replace(n_customers=300)
instances = [gen_instance(cfg, seed=21 + r) for r in range(2)]
report = run_sweep(instances, SweepConfig(n_tasks=15, steps=30, replicas=2, seed=21))

###############################################################################
# Company-led baseline versus the first stable formation that actually trades.

b = report.baseline
print(f"baseline: failed {b.failure_fraction:.1%}, revenue {b.avg_revenue:,.0f}, payment {b.avg_payment:,.0f}")
if report.ne_threshold is not None:
    print(f"stable from threshold {float(report.ne_threshold):.3f}:",
          ", ".join(f"{k} {v:+.1f}%" for k, v in report.prf.items()))

for row in report.rows[::5]:
    print(f"{float(row.threshold):.2f}  failed {row.failure_fraction:6.1%}  stable={row.is_ne}")

###############################################################################
# Write the curves next to this script.

out = Path(__file__).with_name("out")
emit_csv(report, out / "sweep.csv")
print("wrote", emit_svg(report, out / "sweep.svg"))
