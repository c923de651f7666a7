"""Network description, case-file parsing and topology matrices.

Branch order is the order in which branches appear in the case file and is the
canonical branch index everywhere in the package.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np


class CaseFormatError(ValueError):
    """Raised for malformed or inconsistent case files and load traces."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Bus(NamedTuple):
    id: int
    load: float


class Branch(NamedTuple):
    from_bus: int
    to_bus: int
    x: float
    fmax: float
    dfacts: bool = False


class Generator(NamedTuple):
    bus: int
    gmin: float
    gmax: float
    cost: float


@dataclass(frozen=True)
class GridCase:
    """Static DC network: buses, branches, generators and D-FACTS limits.

    Reactances are per unit on ``base_mva``; loads, generation and flow limits
    are in MW.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    reference_bus: int
    dfacts_eta: float = 0.0
    base_mva: float = 100.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(Bus(*b) for b in self.buses))
        object.__setattr__(self, "branches", tuple(Branch(*b) for b in self.branches))
        object.__setattr__(self, "generators", tuple(Generator(*g) for g in self.generators))
        self._validate()

    def _validate(self):
        ids = [b.id for b in self.buses]
        if not ids:
            raise CaseFormatError("case has no buses")
        if len(set(ids)) != len(ids):
            raise CaseFormatError("duplicate bus id")
        known = set(ids)
        for k, br in enumerate(self.branches, start=1):
            if br.from_bus not in known or br.to_bus not in known:
                raise CaseFormatError(f"branch {k} references unknown bus")
            if br.from_bus == br.to_bus:
                raise CaseFormatError(f"branch {k} is a self-loop")
            if not br.x > 0:
                raise CaseFormatError(f"branch {k} has nonpositive reactance {br.x}")
            if not br.fmax > 0:
                raise CaseFormatError(f"branch {k} has nonpositive flow limit {br.fmax}")
        if not self.branches:
            raise CaseFormatError("case has no branches")
        if not self.generators:
            raise CaseFormatError("case has no generators")
        for k, g in enumerate(self.generators, start=1):
            if g.bus not in known:
                raise CaseFormatError(f"generator {k} references unknown bus {g.bus}")
            if g.gmin > g.gmax:
                raise CaseFormatError(f"generator {k} has gmin > gmax")
        if self.reference_bus not in known:
            raise CaseFormatError(f"reference bus {self.reference_bus} does not exist")
        if not 0 <= self.dfacts_eta < 1:
            raise CaseFormatError("dfacts_eta must lie in [0, 1)")
        if not self.base_mva > 0:
            raise CaseFormatError("base_mva must be positive")
        if sum(g.gmax for g in self.generators) < sum(b.load for b in self.buses):
            raise CaseFormatError("total generation capacity is below total load")

    # sizes and index maps
    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def ref_index(self) -> int:
        return self.bus_index[self.reference_bus]

    @cached_property
    def non_ref(self) -> np.ndarray:
        return np.array([i for i in range(self.n_bus) if i != self.ref_index])

    # vectors
    @cached_property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses], dtype=float)

    @cached_property
    def x(self) -> np.ndarray:
        """Default branch reactances."""
        return np.array([br.x for br in self.branches], dtype=float)

    @cached_property
    def fmax(self) -> np.ndarray:
        return np.array([br.fmax for br in self.branches], dtype=float)

    @cached_property
    def dfacts_mask(self) -> np.ndarray:
        return np.array([br.dfacts for br in self.branches], dtype=bool)

    @cached_property
    def dfacts_index(self) -> np.ndarray:
        return np.flatnonzero(self.dfacts_mask)

    @cached_property
    def x_min(self) -> np.ndarray:
        return np.where(self.dfacts_mask, (1 - self.dfacts_eta) * self.x, self.x)

    @cached_property
    def x_max(self) -> np.ndarray:
        return np.where(self.dfacts_mask, (1 + self.dfacts_eta) * self.x, self.x)

    @cached_property
    def gen_matrix(self) -> np.ndarray:
        """Bus-by-generator placement matrix."""
        C = np.zeros((self.n_bus, self.n_gen))
        for k, g in enumerate(self.generators):
            C[self.bus_index[g.bus], k] = 1.0
        return C

    def replace(self, **changes) -> "GridCase":
        """Copy of the case with selected fields replaced (validation re-runs)."""
        kw = dict(
            buses=self.buses, branches=self.branches, generators=self.generators,
            reference_bus=self.reference_bus, dfacts_eta=self.dfacts_eta,
            base_mva=self.base_mva, name=self.name,
        )
        kw.update(changes)
        return GridCase(**kw)

    def check_reactances(self, x, tol: float = 1e-9) -> np.ndarray:
        """Validate a reactance vector against this case and return it as an array."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_branch,):
            raise ValueError(f"expected {self.n_branch} reactances, got shape {x.shape}")
        if np.any(x <= 0):
            raise ValueError("reactances must be strictly positive")
        scale = tol * np.maximum(1.0, np.abs(self.x))
        if np.any(x < self.x_min - scale) or np.any(x > self.x_max + scale):
            raise ValueError("reactance vector outside the D-FACTS limits")
        return x


def parse_case(text: str, name: str = "") -> GridCase:
    """Parse the line-oriented case format.

    Directives (one per line, ``#`` starts a comment)::

        bus <id> <load_MW>
        branch <from> <to> <x_pu> <fmax_MW> <dfacts 0|1>
        gen <bus> <gmin_MW> <gmax_MW> <cost_per_MWh>
        ref <bus>
        dfacts_eta <fraction>
        base_mva <MVA>          # optional, default 100
    """
    buses, branches, gens = [], [], []
    ref = None
    eta = 0.0
    base = 100.0
    arity = {"bus": 2, "branch": 5, "gen": 4, "ref": 1, "dfacts_eta": 1, "base_mva": 1}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key not in arity:
            raise CaseFormatError(f"unknown directive {key!r}", lineno)
        if len(args) != arity[key]:
            raise CaseFormatError(f"{key} expects {arity[key]} fields, got {len(args)}", lineno)
        try:
            if key == "bus":
                buses.append(Bus(int(args[0]), float(args[1])))
            elif key == "branch":
                flag = args[4]
                if flag not in ("0", "1"):
                    raise CaseFormatError("dfacts flag must be 0 or 1", lineno)
                branches.append(Branch(int(args[0]), int(args[1]), float(args[2]),
                                       float(args[3]), flag == "1"))
            elif key == "gen":
                gens.append(Generator(int(args[0]), float(args[1]), float(args[2]), float(args[3])))
            elif key == "ref":
                if ref is not None:
                    raise CaseFormatError("duplicate ref directive", lineno)
                ref = int(args[0])
            elif key == "dfacts_eta":
                eta = float(args[0])
            else:
                base = float(args[0])
        except ValueError as exc:
            if isinstance(exc, CaseFormatError):
                raise
            raise CaseFormatError(f"bad number in {key} directive: {exc}", lineno) from None
    if ref is None:
        if not buses:
            raise CaseFormatError("case has no buses")
        ref = buses[0].id
    return GridCase(tuple(buses), tuple(branches), tuple(gens), ref, eta, base, name)


def format_case(grid: GridCase) -> str:
    """Serialize ``grid`` in the format read by :func:`parse_case`."""
    out = []
    if grid.name:
        out.append(f"# {grid.name}")
    out.append(f"base_mva {grid.base_mva!r}")
    out.append(f"ref {grid.reference_bus}")
    out.append(f"dfacts_eta {grid.dfacts_eta!r}")
    out += [f"bus {b.id} {b.load!r}" for b in grid.buses]
    out += [f"branch {br.from_bus} {br.to_bus} {br.x!r} {br.fmax!r} {int(br.dfacts)}"
            for br in grid.branches]
    out += [f"gen {g.bus} {g.gmin!r} {g.gmax!r} {g.cost!r}" for g in grid.generators]
    return "\n".join(out) + "\n"


def read_case(path) -> GridCase:
    path = Path(path)
    return parse_case(path.read_text(encoding="utf-8"), name=path.stem)


BUNDLED_CASES = ("case4", "case14", "case30")


def load_case(name: str) -> GridCase:
    """Load one of the bundled cases (``case4``, ``case14``, ``case30``)."""
    if name not in BUNDLED_CASES:
        raise KeyError(f"unknown bundled case {name!r}; choose from {BUNDLED_CASES}")
    text = resources.files("gridmtd.data").joinpath(f"{name}.case").read_text(encoding="utf-8")
    return parse_case(text, name=name)


def incidence_matrix(grid: GridCase) -> np.ndarray:
    """Bus-by-branch incidence matrix: +1 at the from bus, -1 at the to bus."""
    A = np.zeros((grid.n_bus, grid.n_branch))
    cols = np.arange(grid.n_branch)
    A[[grid.bus_index[br.from_bus] for br in grid.branches], cols] = 1.0
    A[[grid.bus_index[br.to_bus] for br in grid.branches], cols] = -1.0
    return A


def susceptance_matrices(grid: GridCase, x=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(D, B)`` with ``D = diag(1/x)`` and ``B = A D A^T`` in per unit."""
    x = grid.x if x is None else np.asarray(x, dtype=float)
    if x.shape != (grid.n_branch,):
        raise ValueError(f"expected {grid.n_branch} reactances, got shape {x.shape}")
    if np.any(x <= 0):
        raise ValueError("reactances must be strictly positive")
    A = incidence_matrix(grid)
    D = np.diag(1.0 / x)
    return D, A @ D @ A.T


def is_connected(grid: GridCase) -> bool:
    seen = {grid.buses[0].id}
    adj: dict[int, list[int]] = {b.id: [] for b in grid.buses}
    for br in grid.branches:
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    stack = [grid.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == grid.n_bus


def disaggregate_load(grid: GridCase, aggregate: float) -> np.ndarray:
    """Scale the case's default bus loads so they sum to ``aggregate`` MW."""
    if not aggregate > 0:
        raise ValueError("aggregate load must be positive")
    base = grid.loads
    total = base.sum()
    if total <= 0:
        raise ValueError("case has no default load to scale")
    return base * (aggregate / total)


@dataclass(frozen=True)
class LoadTrace:
    """Ordered (timestamp, aggregate MW) samples."""

    timestamps: tuple[str, ...]
    loads: tuple[float, ...]

    def __post_init__(self):
        if len(self.timestamps) != len(self.loads):
            raise ValueError("timestamps and loads differ in length")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("timestamps must be strictly increasing")
        if any(not v > 0 for v in self.loads):
            raise ValueError("loads must be positive")

    def __len__(self) -> int:
        return len(self.loads)

    @classmethod
    def constant(cls, load: float, hours: int = 24) -> "LoadTrace":
        return cls(tuple(f"{h:02d}:00" for h in range(hours)), (float(load),) * hours)

    def scaled(self, peak: float) -> "LoadTrace":
        """Rescale so the largest sample equals ``peak``."""
        s = peak / max(self.loads)
        return LoadTrace(self.timestamps, tuple(v * s for v in self.loads))


def parse_load_trace(text: str) -> LoadTrace:
    """Read a ``timestamp,load_MW`` CSV (header row optional)."""
    stamps: list[str] = []
    loads: list[float] = []
    for rowno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise CaseFormatError(f"expected 2 columns, got {len(row)}", rowno)
        ts, val = row[0].strip(), row[1].strip()
        try:
            mw = float(val)
        except ValueError:
            if rowno == 1 and not stamps:
                continue  # header
            raise CaseFormatError(f"bad load value {val!r}", rowno) from None
        if not mw > 0:
            raise CaseFormatError(f"load must be positive, got {mw}", rowno)
        if stamps and ts <= stamps[-1]:
            raise CaseFormatError("timestamps must be strictly increasing", rowno)
        stamps.append(ts)
        loads.append(mw)
    if not loads:
        raise CaseFormatError("trace is empty")
    return LoadTrace(tuple(stamps), tuple(loads))


def read_load_trace(path) -> LoadTrace:
    return parse_load_trace(Path(path).read_text(encoding="utf-8"))


def bundled_trace() -> LoadTrace:
    text = resources.files("gridmtd.data").joinpath("daily_load.csv").read_text(encoding="utf-8")
    return parse_load_trace(text)

