"""Tunable thresholds shared by the experiments, with ``key=value`` overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .errors import PreconditionError


@dataclass(frozen=True)
class Thresholds:
    cluster_deg: float = 10.0  # reachable-gradient clustering angle
    jump_deg: float = 20.0  # gradient direction jump that flags a cell
    p_eps: float = 0.05  # critical-point margin for the min-norm element
    start_offset_cells: float = 2.0  # multi-start offset
    probe_cells: float = 6.0  # length of the short traces behind reachable gradients
    collar_cells: float = 2.0  # obstacle collar excluded from residuals
    interior_collar_cells: float = 20.0
    boundary_band_cells: float = 10.0
    source_exclusion_cells: float = 10.0
    corner_exclusion_cells: float = 4.0
    flow_lost_steps: int = 3
    normal_tol: float = 0.05
    r2_min: float = 0.8

    def with_overrides(self, pairs) -> "Thresholds":
        """Apply ``["key=value", ...]`` (or a mapping); unknown keys are rejected."""
        items = pairs.items() if isinstance(pairs, dict) else (_split(p) for p in pairs)
        types = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, raw in items:
            if key not in types:
                raise PreconditionError(f"unknown threshold {key!r}")
            try:
                changes[key] = int(raw) if types[key] in (int, "int") else float(raw)
            except ValueError as exc:
                raise PreconditionError(f"threshold {key!r} needs a number, got {raw!r}") from exc
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def _split(pair: str) -> tuple[str, str]:
    key, sep, value = pair.partition("=")
    if not sep:
        raise PreconditionError(f"threshold override must look like key=value, got {pair!r}")
    return key.strip(), value.strip()


DEFAULT = Thresholds()
