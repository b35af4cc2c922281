"""The discrete scheduling action space: resolution x location x compression."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError
from .navmodel import COMPRESSIONS, RESOLUTIONS

LOCAL = "local"
EDGE = "edge"


@dataclass(frozen=True)
class Action:
    """Scheduler configuration.  ``j`` is set iff the inference is offloaded."""

    r: int
    o: str = LOCAL
    j: int | None = None

    def __post_init__(self) -> None:
        if self.r not in RESOLUTIONS:
            raise ValidationError(f"resolution must be one of {RESOLUTIONS}, got {self.r}")
        if self.o == LOCAL:
            if self.j is not None:
                raise ValidationError("compression applies only to offloaded inference")
        elif self.o == EDGE:
            if self.j not in COMPRESSIONS:
                raise ValidationError(f"compression must be one of {COMPRESSIONS}, got {self.j}")
        else:
            raise ValidationError(f"location must be 'local' or 'edge', got {self.o!r}")

    @property
    def offload(self) -> bool:
        return self.o == EDGE

    def __str__(self) -> str:
        return f"{self.r}:{self.o}" if self.j is None else f"{self.r}:{self.o}:{self.j}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        parts = text.strip().split(":")
        try:
            if len(parts) == 2:
                return cls(int(parts[0]), parts[1])
            if len(parts) == 3:
                return cls(int(parts[0]), parts[1], int(parts[2]))
        except ValueError:
            pass
        raise ValidationError(f"cannot parse action {text!r}")


# local actions first, then edge; each block by descending r (and descending j)
ACTIONS: tuple[Action, ...] = tuple(
    [Action(r, LOCAL) for r in RESOLUTIONS] + [Action(r, EDGE, j) for r in RESOLUTIONS for j in COMPRESSIONS]
)
N_ACTIONS = len(ACTIONS)
_INDEX = {a: i for i, a in enumerate(ACTIONS)}


def action_index(action: Action) -> int:
    try:
        return _INDEX[action]
    except KeyError:
        raise ValidationError(f"not a valid action: {action}") from None


def decode_action(index: int) -> Action:
    if isinstance(index, bool) or not 0 <= int(index) < N_ACTIONS or int(index) != index:
        raise ValidationError(f"action index must be an integer in [0, {N_ACTIONS - 1}], got {index}")
    return ACTIONS[int(index)]
