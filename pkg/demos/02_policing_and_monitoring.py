#!/usr/bin/env python3
"""The deterministic traffic monitor: one 8-byte timestamp per source.

Shows the bucket admitting a burst, throttling a 2x sender to half its
bytes, the per-source report, and the 800 kB footprint for 100k sources.
"""

from flyover.policing import TokenBucket, TrafficMonitor, Verdict
from flyover import wire

MS = 1_000_000

print("== single bucket: burst then steady state ==")
bucket = TokenBucket(rate_bytes_per_ns=1.0, window_ns=10_000, now=0)  # 8 Gbps, 10us
burst = 0
while bucket.check(1000, now=0):
    burst += 1
print(f"  burst capacity at t=0: {burst} packets of 1000 B")
print(f"  state is a single timestamp: {bucket.serialize().hex()} ({len(bucket.serialize())} bytes)")

print("\n== a source sending at twice its rate ==")
mon = TrafficMonitor(window_ns=1 * MS)
mon.register(src=4, bw=8_000_000_000, ts_exp=10**15, direction=wire.FORWARD, now=0)
verdicts = [mon.police(4, 1000, 1, 2, wire.FORWARD, now=k * 500) for k in range(40_000)]
over = sum(v is Verdict.OVERUSE for v in verdicts)
print(f"  {over}/{len(verdicts)} packets demoted ({over/len(verdicts):.1%}),"
      f" ~half, deterministically")

print("\n== per-source accounting ==")
mon.note_replay(4)
for src, conform_b, overuse_b, expired, replays in mon.report_rows():
    print(f"  src={src} conform={conform_b}B overuse={overuse_b}B "
          f"expired={expired} replays={replays}")

print("\n== memory for 100000 monitored sources ==")
big = TrafficMonitor()
for src in range(100_000):
    big.register(src, 1_000_000, 10**15, wire.FORWARD, now=0)
print(f"  serialized bucket state: {len(big.serialized_bucket_state())} bytes")
