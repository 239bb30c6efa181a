"""Bit-exact replay verification: re-simulate a persisted log from its embedded
config and recorded command events and compare trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .engine import make_engine
from .errors import ConfigError
from .runlog import RunLog, config_hash


@dataclass
class ReplayVerdict:
    passed: bool
    reason: str
    first_divergent_step: Optional[int] = None


def rerun_from_log(log: RunLog) -> RunLog:
    """Re-simulate from the embedded config, applying recorded commands at their steps."""
    cfg = log.header.get("config")
    if cfg is None:
        raise ConfigError("log has no embedded config; cannot replay")
    stored = log.header.get("config_hash")
    actual = config_hash(cfg)
    if stored != actual:
        raise ConfigError(f"config hash mismatch: header {stored} vs recomputed {actual}")
    engine = make_engine(cfg)
    commands: dict[int, list] = {}
    for ev in log.events:
        if ev["type"] == "command":
            commands.setdefault(int(ev["step"]), []).append(ev)
    engine.status = "running"
    boundaries = sorted(commands)
    for step in boundaries:
        engine.advance_to(step)
        if engine.status in ("complete", "faulted"):
            break
        for ev in commands[step]:
            try:
                engine.apply_command(ev["kind"], ev.get("value"))
            except Exception:
                pass  # rejected commands were recorded but had no effect
    if engine.status not in ("complete", "faulted"):
        engine.advance_to(engine.n_total)
    return engine.finish()


def verify_replay(log: RunLog) -> ReplayVerdict:
    try:
        fresh = rerun_from_log(log)
    except ConfigError as exc:
        return ReplayVerdict(passed=False, reason=str(exc))
    equal, step = fresh.equals_bitwise(log)
    if equal:
        return ReplayVerdict(passed=True, reason="trajectories bit-identical")
    return ReplayVerdict(passed=False, reason="trajectory divergence", first_divergent_step=step)
