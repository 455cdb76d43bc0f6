from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, fields

from ..formats import FormatKind


class Dataflow(enum.Enum):
    """The seven dataflows, in the enumeration order used for tie-breaking."""

    DOS = "dOS"
    DWS = "dWS"
    DIS = "dIS"
    SOS = "sOS"
    SWS = "sWS"
    SIS = "sIS"
    CSOS = "csOS"

    @classmethod
    def parse(cls, name: str) -> "Dataflow":
        for df in cls:
            if df.value.lower() == name.strip().lower():
                return df
        raise ValueError(f"unknown dataflow {name!r}; valid: {', '.join(d.value for d in cls)}")

    @classmethod
    def names(cls) -> list[str]:
        return [d.value for d in cls]

    @property
    def sparse(self) -> bool:
        return self in (Dataflow.SOS, Dataflow.SWS, Dataflow.SIS, Dataflow.CSOS)

    @property
    def stationary(self) -> str:
        return {"O": "OS", "W": "WS", "I": "IS"}[self.value[-2]]

    @property
    def weight_format(self) -> FormatKind:
        if self is Dataflow.CSOS:
            return FormatKind.CSB
        return FormatKind.TWO_STAGE_BITMAP if self.sparse else FormatKind.DENSE


@dataclass(frozen=True)
class ArchConfig:
    """Array geometry and memory interface.

    ``tile_k`` is the depth of a weight tile: its K extent for the OS and WS
    flows and its M extent for the IS flows. It defaults to ``pe_rows``, which
    makes every weight tile ``pe_rows x pe_rows`` so pruned vectors line up
    with tiles under every dataflow.
    """

    pe_rows: int
    pe_cols: int
    regfile_size: int = 9
    mem_ports: int = 8
    port_width_bits: int = 32
    word_bits: int = 32
    tile_k: int | None = None

    def __post_init__(self):
        if self.pe_rows < 2 or self.pe_cols < 2:
            raise ValueError(f"array must be at least 2x2, got {self.pe_rows}x{self.pe_cols}")
        if self.regfile_size < 9:
            raise ValueError("schedules need at least 9 registers per PE")
        if self.mem_ports < 1:
            raise ValueError("need at least one memory port")
        if self.port_width_bits < self.word_bits or self.port_width_bits % self.word_bits:
            raise ValueError("port width must be a multiple of the word width")
        if self.tile_k is not None and self.tile_k < 1:
            raise ValueError("tile_k must be >= 1")

    @property
    def depth(self) -> int:
        return self.tile_k or self.pe_rows

    @property
    def words_per_cycle(self) -> int:
        return self.mem_ports * (self.port_width_bits // self.word_bits)

    @property
    def pe_count(self) -> int:
        return self.pe_rows * self.pe_cols

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown arch fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ArchConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceEvent:
    step: int
    cycle: int
    unit: str
    action: str
    address: object = ""


_COUNTERS = (
    "cycles", "steps", "weight_words_read", "input_words_read", "psum_words_read",
    "output_words_written", "mac_ops", "weight_load_phases", "zeros_emitted",
)


@dataclass
class SimResult:
    """Counters for one simulated GEMM (or a sum over several)."""

    dataflow: str = ""
    cycles: int = 0
    steps: int = 0
    weight_words_read: int = 0
    input_words_read: int = 0
    psum_words_read: int = 0
    output_words_written: int = 0
    mac_ops: int = 0
    weight_load_phases: int = 0
    zeros_emitted: int = 0
    trace: list | None = field(default=None, repr=False, compare=False)
    step_log: list | None = field(default=None, repr=False, compare=False)

    @property
    def words_read(self) -> int:
        return self.weight_words_read + self.input_words_read + self.psum_words_read

    def __add__(self, other: "SimResult") -> "SimResult":
        out = SimResult(self.dataflow if self.dataflow == other.dataflow else "mixed")
        for name in _COUNTERS:
            setattr(out, name, getattr(self, name) + getattr(other, name))
        return out

    def to_dict(self) -> dict:
        return {"dataflow": self.dataflow, **{n: getattr(self, n) for n in _COUNTERS}}
