"""Monte Carlo recovery study on two synthetic families.

``z-family`` is a single-constant (canonical) family, so one constant of the
motion should be selected; ``isotropic`` spreads in all three directions and
should need more.  Run with ``python3 demos/recovery_study.py [trials]``.
"""

import sys

from thermoscope import preset_config, recovery_study

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 20
for name in ("z-family", "isotropic"):
    config = preset_config(name, seed=11)
    _, summary = recovery_study(config, trials)
    print(f"{name}: true p = {config.true_dimension}")
    for key, value in summary.items():
        print(f"  {key:<24} {value:.4g}" if isinstance(value, float) else f"  {key:<24} {value}")
