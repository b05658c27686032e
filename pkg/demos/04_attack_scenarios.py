#!/usr/bin/env python3
"""Run the shipped adversarial scenarios and print their verdicts.

Each scenario is a plain JSON file (see scenarios/) driving the
deterministic event-loop network: flood, spoofing, replay, overuse, and a
passive wiretap that must never see a plaintext authenticator.
"""

import os

from flyover import simnet

HERE = os.path.dirname(os.path.abspath(__file__))
SCENARIOS = os.path.join(HERE, os.pardir, "scenarios")

for name in ("baseline.json", "best_effort_flood.json", "request_flood.json",
             "replay_overuse.json", "observer_skew.json"):
    cfg = simnet.load_scenario(os.path.join(SCENARIOS, name))
    result = simnet.run_scenario(cfg)
    print(f"== {name} (seed {cfg.get('seed')}) ==")
    for req in cfg.get("requirements", ()):
        ok, detail = simnet.assert_requirement(result, req)
        print(f"  {req['r']}: {'PASS' if ok else 'FAIL'} - {detail}")
    for row in result.flow_summary_rows():
        name_, sent, delivered, prio, demoted, dropped, max_delay = row
        print(f"  flow {name_}: sent={sent} delivered={delivered} "
              f"priority={prio} demoted={demoted} dropped={dropped}")
    if "observer_skew" in name:
        leaked = simnet.observer_saw_plaintext_auth(result, "tap")
        print(f"  wiretap saw a plaintext authenticator: {leaked}")
    print()
