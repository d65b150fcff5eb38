"""
The shared power cap
====================

Lower the facility cap until columns have to wait for power, then look at
the allocation trace and the 15 minute bins.
"""

import numpy as np

from evcharge import ScenarioConfig, bin_power, sample_fleet, simulate
from evcharge.facility import RequestState

base = ScenarioConfig(ev_count=60, cc_count=30, cc_kind="FCC")
fleet = sample_fleet(base, root_seed=3)

for cap in (1_000_000.0, 480_000.0, 200_000.0):
    res = simulate(base.replace(es_cap_watts=cap), fleet)
    waits = [r.t_resolved - r.t_req for r in res.requests if r.state is RequestState.GRANTED]
    means, maxes = bin_power(res.es_trace, 900.0, res.horizon_s)
    done = sum(tr.completed for tr in res.traces)
    print(f"cap {cap / 1e3:6.0f} kW: peak {maxes.max() / 1e3:5.0f} kW, "
          f"queued grants {sum(w > 0 for w in waits):3d}, "
          f"mean wait {np.mean(waits):7.1f} s, completed {done}/{len(fleet)}")

# busiest hour under the tightest cap, bin by bin
busy = np.argsort(means)[-4:]
for k in sorted(busy):
    print(f"  {k * 15 // 60:02d}:{k * 15 % 60:02d}  mean {means[k]:9.0f} W  max {maxes[k]:9.0f} W")
