"""
Coverage and length against the synthetic oracle
================================================

Runs a small Monte Carlo sweep: for each confounding strength gamma, the
oracle draws target potential outcomes from an adversarial law inside
the sensitivity class, and we record how often each method's interval
captures them.  Worst-case intervals at the matching gamma should hold
the nominal level; the unconfounded baseline should decay.
"""

import numpy as np

from confsens.harness import ExperimentConfig, run_sweep, shrinkage_sharpness

cfg = ExperimentConfig(
    methods=("csa-m", "ite-nuc"),
    gammas=(1.0, 1.5, 2.0, 3.0),
    alpha=0.2,
    n_train=1500,
    n_target=1000,
    n_trials=5,
)
records, summary = run_sweep(cfg, keep_targets=True)

print(f"{'method':>10} {'gamma':>6} {'coverage':>9} {'width':>7} "
      f"{'unbounded':>9}")
for row in summary:
    print(f"{row['method']:>10} {row['gamma']:>6g} "
          f"{row['coverage_mean']:>9.3f} {row['width_mean']:>7.3f} "
          f"{row['n_unbounded']:>9d}")

# ------------------------------------------------------------------
# Sharpness diagnostic: how much can the worst-case intervals be
# shrunk (about their centers) before coverage drops below nominal?
# A modest positive factor means the intervals are conservative but
# not wildly so.
# ------------------------------------------------------------------
gamma_probe = 2.0
sel = [r for r in records if r.method == "csa-m" and r.gamma == gamma_probe]
lower = np.concatenate([r.lower for r in sel])
upper = np.concatenate([r.upper for r in sel])
tau = np.concatenate([r.tau for r in sel])
table, max_factor, n_excluded = shrinkage_sharpness(lower, upper, tau,
                                                    cfg.alpha)
print(f"\nshrinkage at gamma={gamma_probe}: coverage holds down to a "
      f"{max_factor:.0%} length reduction ({n_excluded} unbounded "
      f"intervals excluded)")
for factor, cov in table[:6]:
    print(f"  shrink {factor:4.0%} -> coverage {cov:.3f}")
