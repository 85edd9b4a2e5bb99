"""Rules engine mapping stress levels to tiered environmental commands.

The level catalog ships as a data file so the action wording can change
without touching code. Each action is assigned to exactly one spatial
scale: wearable and enclosure-level devices act at the Personal scale,
light and sound shaping at the Room scale, HVAC-class systems at the
Building scale, and everything outdoors at the Landscape scale.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

from .errors import InvalidLevel, InvalidParam
from .stress import StressLevel

SCALE_ORDER = ("Personal", "Room", "Building", "Landscape")


@dataclass(frozen=True)
class Scale:
    name: str
    latency_min_s: float
    latency_max_s: float


# response-time bounds in seconds; Personal is open at zero
SCALES = {
    "Personal": Scale("Personal", 0.0, 5.0),
    "Room": Scale("Room", 15.0, 30.0),
    "Building": Scale("Building", 60.0, 300.0),
    "Landscape": Scale("Landscape", 300.0, 900.0),
}

# integer millisecond sampling ranges that respect the bounds above,
# keeping Personal strictly inside (0 s, 5 s)
LATENCY_RANGE_MS = {
    "Personal": (1, 4999),
    "Room": (15000, 30000),
    "Building": (60000, 300000),
    "Landscape": (300000, 900000),
}

# static action -> scale assignment (audited, data-like on purpose)
ACTION_SCALE = {
    "Maintain baseline environment": "Building",
    "Mild negative ion release": "Room",
    "Dynamic sunrise lighting (3000K)": "Room",
    "Background white noise (45 dB)": "Room",
    "Biowall oxygen-boosting mode": "Building",
    "Local temperature gradient (±2°C)": "Building",
    "Directional natural soundscape": "Room",
    "Full-spectrum light therapy": "Room",
    "Whole-body vibration (40Hz)": "Personal",
    "Emergency mist cooling": "Building",
    "Emergency pod activation (isolation + VR natural scene)": "Personal",
    "Temporary hyperbaric oxygen support": "Personal",
    "Preserve natural ventilation paths": "Landscape",
    "Low-intensity landscape lighting": "Landscape",
    "Activate shallow water flow": "Landscape",
    "Trigger aromatic plant airflow": "Landscape",
    "Intermittent fog system": "Landscape",
    "Dynamic tree canopy shading": "Landscape",
    "Enhanced waterfall mode": "Landscape",
    "Activate magnetic walking trail": "Landscape",
    "Open emergency shelter kiosks": "Landscape",
    "Deploy drones with aromatic diffusers": "Landscape",
}


@dataclass(frozen=True)
class InterventionPlan:
    level: StressLevel
    indoor_actions: tuple
    outdoor_actions: tuple
    basis: str

    @property
    def actions(self) -> tuple:
        return self.indoor_actions + self.outdoor_actions


@dataclass
class ControlCommand:
    command_id: int
    issued_at: float  # virtual-time seconds
    stress_level: int
    scale: str
    action: str
    parameters: dict = field(default_factory=dict)
    ttl_s: float = 0.0


def _load_catalog() -> dict:
    text = resources.files("stresstwin").joinpath("data/intervention_catalog.json").read_text()
    return json.loads(text)


_CATALOG = _load_catalog()


def plan_for_level(level: int) -> InterventionPlan:
    """The catalog row for one stress level."""
    entry = _CATALOG.get(str(level))
    if entry is None:
        raise InvalidLevel(f"no intervention plan for level {level!r}")
    return InterventionPlan(
        level=StressLevel.from_int(level),
        indoor_actions=tuple(entry["indoor"]),
        outdoor_actions=tuple(entry["outdoor"]),
        basis=entry["basis"],
    )


class CommandIdAllocator:
    """Strictly increasing command ids, owned by one simulation run."""

    def __init__(self, start: int = 1):
        self._next = start

    def take(self) -> int:
        value = self._next
        self._next += 1
        return value


def commands_for_level(level: int, now_s: float, allocator: CommandIdAllocator) -> list:
    """One command per catalog action, ordered by scale then catalog order."""
    plan = plan_for_level(level)
    staged = []
    for action in plan.actions:
        scale = ACTION_SCALE[action]
        staged.append((SCALE_ORDER.index(scale), action, scale))
    staged.sort(key=lambda t: t[0])  # stable: catalog order preserved within a scale
    commands = []
    for _, action, scale in staged:
        commands.append(
            ControlCommand(
                command_id=allocator.take(),
                issued_at=now_s,
                stress_level=level,
                scale=scale,
                action=action,
                parameters={},
                ttl_s=2.0 * SCALES[scale].latency_max_s,
            )
        )
    return commands


def command_to_dict(cmd: ControlCommand) -> dict:
    return {
        "command_id": cmd.command_id,
        "issued_at": cmd.issued_at,
        "stress_level": cmd.stress_level,
        "scale": cmd.scale,
        "action": cmd.action,
        "parameters": dict(sorted(cmd.parameters.items())),
        "ttl_s": cmd.ttl_s,
    }


def serialize_command(cmd: ControlCommand) -> str:
    """Canonical JSON wire form; equal commands serialize byte-identically."""
    return json.dumps(command_to_dict(cmd), ensure_ascii=True, separators=(",", ":"))


def parse_command(text: str) -> ControlCommand:
    payload = json.loads(text)
    try:
        return ControlCommand(
            command_id=int(payload["command_id"]),
            issued_at=float(payload["issued_at"]),
            stress_level=int(payload["stress_level"]),
            scale=str(payload["scale"]),
            action=str(payload["action"]),
            parameters=dict(payload["parameters"]),
            ttl_s=float(payload["ttl_s"]),
        )
    except KeyError as exc:
        raise InvalidParam(f"command JSON missing field {exc}") from exc
