"""Benchmark the jitted kernels against the pure-Python fallback.

Runs the two flagship scenarios under each backend (fallback runs in a
subprocess so the env flag is honored at import time) and reports wall time
and engine steps per second.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

CHILD = """
import json, sys, time
from scasim.scenarios import ScenarioConfig, run_scenario
with open(sys.argv[1]) as fh:
    data = json.load(fh)
cfg = ScenarioConfig(data)
run_scenario(cfg)  # warm the jit cache before timing
t0 = time.perf_counter()
for _ in range(int(sys.argv[2])):
    log = run_scenario(cfg)
dt = time.perf_counter() - t0
print(json.dumps({"seconds": dt, "steps": log.n_steps * int(sys.argv[2])}))
"""


def run_child(cfg_data: dict, repeats: int, numba: bool) -> dict:
    env = dict(os.environ, SCASIM_NUMBA="1" if numba else "0")
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = os.path.join(tmp, "cfg.json")
        script = os.path.join(tmp, "child.py")
        with open(cfg_path, "w") as fh:
            json.dump(cfg_data, fh)
        with open(script, "w") as fh:
            fh.write(CHILD)
        proc = subprocess.run([sys.executable, script, cfg_path, str(repeats)],
                              env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(proc.stderr)
        return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--fallback-repeats", type=int, default=1)
    args = parser.parse_args()

    from scasim.scenarios import build_named

    scenarios = {
        "sca1-harsh-cfm_based": build_named("sca1-harsh-cfm_based", seed=0),
        "sca2-perf": build_named("sca2-perf", seed=0),
    }
    print(f"{'scenario':24s} {'backend':8s} {'runs':>4s} {'wall s':>8s} {'steps/s':>12s}")
    for name, cfg in scenarios.items():
        for backend, numba, reps in (("numba", True, args.repeats),
                                     ("python", False, args.fallback_repeats)):
            result = run_child(cfg.data, reps, numba)
            rate = result["steps"] / result["seconds"]
            print(f"{name:24s} {backend:8s} {reps:4d} {result['seconds']:8.2f} {rate:12.0f}")


if __name__ == "__main__":
    main()
