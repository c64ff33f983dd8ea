"""Detection rate / false alarm rate of emitted conflicts against ground truth.

    DR  = detected conflicts / total conflicts
    FAR = false alarms / total conflicts

FAR keeps the total-conflicts denominator and so can exceed 1. With no true
conflicts DR is undefined (None) and FAR falls back to a denominator of 1,
i.e. it is the raw false-alarm count.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .conflict import ConflictEvent
from .config import PipelineConfig, with_overrides
from .pipeline import FrameResult, Pipeline
from .scenario import GroundTruthEvent, Scenario, synthetic_homography


@dataclass
class EvaluationReport:
    total_conflicts: int
    detected: int
    false_alarms: int
    emitted: int
    matches: List[dict] = field(default_factory=list)

    @property
    def dr(self) -> Optional[float]:
        if self.total_conflicts == 0:
            return None
        return self.detected / self.total_conflicts

    @property
    def far(self) -> float:
        return self.false_alarms / (self.total_conflicts or 1)

    def to_dict(self) -> dict:
        return {
            "total_conflicts": self.total_conflicts,
            "detected": self.detected,
            "false_alarms": self.false_alarms,
            "emitted": self.emitted,
            "DR": self.dr,
            "FAR": self.far,
            "matches": self.matches,
        }

    def summary(self) -> str:
        dr = "n/a" if self.dr is None else f"{100 * self.dr:.2f}%"
        return (f"DR {dr} ({self.detected}/{self.total_conflicts}), FAR {100 * self.far:.2f}% "
                f"({self.false_alarms} false alarm{'s' if self.false_alarms != 1 else ''}, {self.emitted} emitted)")


def match_events(emitted: Sequence[ConflictEvent], truth: Sequence[GroundTruthEvent], t_tol: int = 60,
                 label: str = "") -> EvaluationReport:
    """Greedy one-to-one matching by type and frame window ``[start - t_tol, end + t_tol]``.

    Emitted events are visited in frame order and each takes the earliest
    still-unmatched truth event it fits, so the result does not depend on the
    order of ``emitted``.
    """
    order = sorted(range(len(emitted)), key=lambda i: (emitted[i].frame, emitted[i].type, emitted[i].participants))
    truth_order = sorted(range(len(truth)), key=lambda j: (truth[j].start, truth[j].end, truth[j].type))
    taken = set()
    rows = []
    detected = 0
    for i in order:
        ev = emitted[i]
        hit = None
        for j in truth_order:
            t = truth[j]
            if j in taken or t.type != ev.type:
                continue
            if t.start - t_tol <= ev.frame <= t.end + t_tol:
                hit = j
                break
        row = {"scenario": label, "frame": ev.frame, "type": ev.type, "severity": ev.severity,
               "participants": list(ev.participants)}
        if hit is None:
            row["match"] = None
        else:
            taken.add(hit)
            detected += 1
            row["match"] = {"start": truth[hit].start, "end": truth[hit].end, "type": truth[hit].type}
        rows.append(row)
    for j in truth_order:
        if j not in taken:
            t = truth[j]
            rows.append({"scenario": label, "frame": None, "type": t.type, "severity": None, "participants": None,
                         "match": None, "missed": {"start": t.start, "end": t.end, "type": t.type}})
    return EvaluationReport(len(truth), detected, len(emitted) - detected, len(emitted), rows)


def combine(reports: Iterable[EvaluationReport]) -> EvaluationReport:
    total = EvaluationReport(0, 0, 0, 0, [])
    for r in reports:
        total.total_conflicts += r.total_conflicts
        total.detected += r.detected
        total.false_alarms += r.false_alarms
        total.emitted += r.emitted
        total.matches.extend(r.matches)
    return total


def scenario_seed(scenario: Scenario, config: Optional[PipelineConfig] = None) -> int:
    """Render seed: the scenario's own seed offset by the config seed (0 keeps it unchanged)."""
    return scenario.seed + (config.seed if config is not None else 0)


def run_scenario(scenario: Scenario, config: Optional[PipelineConfig] = None,
                 seed: Optional[int] = None) -> Tuple[List[ConflictEvent], List[FrameResult]]:
    frames, _ = scenario.render(scenario_seed(scenario, config) if seed is None else seed)
    pipe = Pipeline(config, synthetic_homography())
    results = list(pipe.run(frames, scenario.duration - 1))
    events = [e for r in results for e in r.events]
    return events, results


def evaluate_scenario(scenario: Scenario, config: Optional[PipelineConfig] = None,
                      seed: Optional[int] = None) -> EvaluationReport:
    config = config or PipelineConfig()
    events, _ = run_scenario(scenario, config, seed)
    return match_events(events, scenario.truth, config.evaluation.t_tol, scenario.name)


@dataclass
class SuiteReport:
    per_scenario: Dict[str, EvaluationReport]
    overall: EvaluationReport

    def to_dict(self) -> dict:
        return {"overall": self.overall.to_dict(),
                "scenarios": {k: v.to_dict() for k, v in self.per_scenario.items()}}


def evaluate_suite(suite: Sequence[Scenario], config: Optional[PipelineConfig] = None) -> SuiteReport:
    per = {s.name: evaluate_scenario(s, config) for s in suite}
    return SuiteReport(per, combine(per.values()))


def _grid_points(grid: Dict[str, Sequence]) -> List[Dict[str, object]]:
    keys = sorted(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def _sweep_point(args) -> dict:
    params, base, suite = args
    cfg = with_overrides(base, params)
    report = evaluate_suite(suite, cfg).overall
    return {"params": params, "DR": report.dr, "FAR": report.far,
            "detected": report.detected, "false_alarms": report.false_alarms,
            "total_conflicts": report.total_conflicts}


def sweep(grid: Dict[str, Sequence], suite: Sequence[Scenario], base: Optional[PipelineConfig] = None,
          jobs: int = 1) -> List[dict]:
    """Evaluate every grid point on ``suite``; rows sorted by DR descending then FAR ascending.

    Grid keys are dotted config paths such as ``"conflict.theta_min"`` or ``"tracker.tau_d"``.
    """
    base = base or PipelineConfig()
    points = _grid_points(grid)
    for p in points:
        with_overrides(base, p)  # fail fast on bad keys before spawning work
    tasks = [(p, base, list(suite)) for p in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return sorted(rows, key=lambda r: (-(r["DR"] if r["DR"] is not None else -1.0), r["FAR"]))


def track_identities(scenario: Scenario, config: Optional[PipelineConfig] = None, seed: Optional[int] = None,
                     radius: float = 20.0) -> Dict[int, List[int]]:
    """For each actor, the distinct confirmed track ids found within ``radius`` px of its true path, in order.

    Track objects are mutated as the pipeline advances, so positions are read
    frame by frame while the pipeline runs.
    """
    frames, _ = scenario.render(scenario_seed(scenario, config) if seed is None else seed)
    pipe = Pipeline(config, synthetic_homography())
    seen: Dict[int, List[int]] = {i: [] for i in range(len(scenario.actors))}
    for res in pipe.run(frames, scenario.duration - 1):
        live = [t for t in res.tracks if t.confirmed]
        if not live:
            continue
        for i, actor in enumerate(scenario.actors):
            pos = actor.position(res.frame)
            if pos is None:
                continue
            best, best_d = None, radius
            for t in live:
                d = math.hypot(t.state.x - pos[0], t.state.y - pos[1])
                if d < best_d:
                    best, best_d = t.id, d
            if best is not None and (not seen[i] or seen[i][-1] != best):
                seen[i].append(best)
    return seen


def identity_preserved(ids: Dict[int, List[int]]) -> bool:
    """Every actor kept exactly one track id and no two actors shared one."""
    firsts = [v[0] for v in ids.values() if v]
    return all(len(v) == 1 for v in ids.values()) and len(set(firsts)) == len(firsts)
