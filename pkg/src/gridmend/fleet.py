"""Mobile emergency generators, mobile storage and repair crews.

Power values are in kW. MESS discharge follows the sign convention of the
storage model: discharge power is reported as a nonpositive number so that
``SoC' = SoC + (P_ch * eta_c + P_dis / eta_d) * dt / E``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

DT = 1.0


@dataclass(frozen=True)
class Location:
    node: int | None
    dest: int | None = None
    hours_left: int = 0

    @property
    def in_transit(self) -> bool:
        return self.node is None

    @classmethod
    def at(cls, node: int) -> "Location":
        return cls(node=node)

    @classmethod
    def travelling(cls, dest: int, hours: int) -> "Location":
        if hours < 1:
            raise ValueError("a unit in transit needs hours_left >= 1")
        return cls(node=None, dest=dest, hours_left=hours)

    def depart(self, dest: int, hours: int) -> "Location":
        if self.in_transit:
            raise ValueError("unit already in transit")
        if hours <= 0 or dest == self.node:
            return Location.at(dest)
        return Location.travelling(dest, hours)

    def advance(self) -> "Location":
        if not self.in_transit:
            return self
        if self.hours_left <= 1:
            return Location.at(self.dest)
        return replace(self, hours_left=self.hours_left - 1)


@dataclass(frozen=True)
class MegState:
    id: str
    location: Location
    p_min: float = 0.0
    p_max: float = 150.0
    q_min: float = -50.0
    q_max: float = 75.0


@dataclass(frozen=True)
class MessState:
    id: str
    location: Location
    soc: float = 0.5
    p_max: float = 100.0
    e_max: float = 400.0
    soc_min: float = 0.1
    soc_max: float = 0.9
    eta_c: float = 0.9
    eta_d: float = 0.9

    def __post_init__(self):
        if not (self.soc_min - 1e-9 <= self.soc <= self.soc_max + 1e-9):
            raise ValueError(f"{self.id}: SoC {self.soc} outside [{self.soc_min}, {self.soc_max}]")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            raise ValueError(f"{self.id}: efficiencies must lie in (0, 1]")


@dataclass(frozen=True)
class LineDamage:
    line: int
    repair_time: int
    resources: int


@dataclass(frozen=True)
class RcState:
    id: str
    location: Location
    resources: int = 10
    progress: dict[int, int] = field(default_factory=dict)
    completed: tuple[int, ...] = ()


def meg_power_from_action(s: MegState, a: float) -> float:
    a = min(max(a, 0.0), 1.0)
    return s.p_min + a * (s.p_max - s.p_min)


def mess_power_from_action(s: MessState, a: float, dt: float = DT) -> tuple[float, float]:
    """Map a magnitude in [-1, 1] to (charge >= 0, discharge <= 0) in kW."""
    a = min(max(a, -1.0), 1.0)
    if a >= 0:
        head = (s.soc_max - s.soc) * s.e_max / s.eta_c / dt
        return max(min(a * s.p_max, head), 0.0), 0.0
    floor = (s.soc_min - s.soc) * s.e_max * s.eta_d / dt
    return 0.0, min(max(a * s.p_max, floor), 0.0)


def mess_soc_step(s: MessState, charge: float, discharge: float, connected: bool = True,
                  dt: float = DT) -> float:
    if not connected:
        return s.soc
    if charge < 0 or discharge > 0:
        raise ValueError("charge must be >= 0 and discharge <= 0")
    if charge > 0 and discharge < 0:
        raise ValueError("MESS cannot charge and discharge in the same step")
    soc = s.soc + (charge * s.eta_c + discharge / s.eta_d) * dt / s.e_max
    # absorb round-off at the limits only
    if s.soc_min - 1e-9 <= soc < s.soc_min:
        soc = s.soc_min
    elif s.soc_max < soc <= s.soc_max + 1e-9:
        soc = s.soc_max
    return soc


@dataclass(frozen=True)
class RepairOutcome:
    state: RcState
    repaired: bool
    refused: bool = False


def rc_repair_step(s: RcState, damage: LineDamage, repairing: bool, others_progress: int = 0) -> RepairOutcome:
    """One hour of work on ``damage``.

    ``others_progress`` is the hours other crews already spent on the same
    line; progress from several crews accumulates.
    """
    if not repairing:
        return RepairOutcome(s, False)
    if s.resources < damage.resources:
        return RepairOutcome(s, False, refused=True)
    done = s.progress.get(damage.line, 0)
    if done + others_progress >= damage.repair_time:
        return RepairOutcome(s, False)
    progress = dict(s.progress)
    progress[damage.line] = done + 1
    if done + 1 + others_progress >= damage.repair_time:
        new = replace(s, progress=progress, resources=s.resources - damage.resources,
                      completed=s.completed + (damage.line,))
        return RepairOutcome(new, True)
    return RepairOutcome(replace(s, progress=progress), False)
