"""
South or east?
==============

A contrastive explanation compares the chosen action with an alternative in
the same state.  The running difference in expected discounted reward shows
when one choice starts to pay off.  Exact tables are used here, so the final
difference equals the fixed-horizon Q difference.
"""

from pathlib import Path

from tpd.decomposition import contrastive, explain
from tpd.oracle import exact_fhgvf, value_iteration
from tpd.svg import line_chart
from tpd.taxi import EVENT_REWARDS, EVENTS, SOUTH, EAST, build_taxi_mdp, encode_state, render

out = Path("demo_output")
out.mkdir(exist_ok=True)

mdp = build_taxi_mdp()
_, policy = value_iteration(mdp)
tables = {e: exact_fhgvf(mdp, policy, e, 30, 1.0) for e in EVENTS}

s = encode_state((2, 0, 8, False))
print(render(s))
south = explain(tables, s, SOUTH, EVENT_REWARDS, provenance="oracle")
east = explain(tables, s, EAST, EVENT_REWARDS, provenance="oracle")
c = contrastive(south, east)

for k, e in enumerate(EVENTS):
    d = c.event_differences[k]
    print(f"{e:8s} probability difference summed over steps {d.sum():+.3f}")
print("cumulative return difference:", " ".join(f"{x:+.1f}" for x in c.return_difference[::5]))

q = exact_fhgvf(mdp, policy, "reward", 30, mdp.discount)[-1, s]
print(f"final difference {c.return_difference[-1]:+.4f}, Q difference {q[SOUTH] - q[EAST]:+.4f}")
(out / "south_vs_east.svg").write_text(line_chart(c.return_difference, "Expected return difference (south - east)",
                                                  label="south - east"))
