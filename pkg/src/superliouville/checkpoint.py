"""Versioned text checkpoints with bit-exact hexadecimal floats.

Layout::

    superliouville-checkpoint 1
    L 16
    dirac_band 4
    phase_tag wigner-d-half-eth-v1
    provenance {"config_hash": ..., "seed": ..., "tool_version": ...}
    u 289
    <float.hex> ...
    h1 289
    ...
    h2 289
    ...
    psi 40
    <re.hex> <im.hex>
    ...
    end
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dirac import PHASE_TAG, SpinorState, build_basis
from .functional import SolutionPair
from .geometry import build_grid
from .harmonics import ScalarField

__all__ = ["FORMAT_VERSION", "CheckpointError", "CheckpointVersionError", "Checkpoint", "save", "load"]

FORMAT_VERSION = 1
MAGIC = "superliouville-checkpoint"


class CheckpointError(ValueError):
    """Malformed, truncated or mismatched checkpoint."""


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    state: SolutionPair
    provenance: dict = field(default_factory=dict)


def _hex_block(name: str, values: np.ndarray) -> list[str]:
    return [f"{name} {values.size}"] + [float(v).hex() for v in values]


def save(state: SolutionPair, path, provenance: dict | None = None) -> Path:
    """Write ``state``; ``u``, ``h1`` and ``h2`` are stored as harmonic coefficients."""
    prov = {"tool_version": __version__}
    prov.update(provenance or {})
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"L {state.grid.L}",
        f"dirac_band {state.basis.band}",
        f"phase_tag {state.basis.phase_tag}",
        f"provenance {json.dumps(prov, sort_keys=True)}",
    ]
    for name, f in (("u", state.u), ("h1", state.h1), ("h2", state.h2)):
        lines += _hex_block(name, np.asarray(f.coeffs))
    a = state.psi.coeffs
    lines.append(f"psi {a.size}")
    lines += [f"{float(z.real).hex()} {float(z.imag).hex()}" for z in a]
    lines.append("end")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, lines):
        self.lines = lines
        self.i = 0

    def next(self, what: str) -> str:
        if self.i >= len(self.lines):
            raise CheckpointError(f"checkpoint truncated while reading {what}")
        line = self.lines[self.i]
        self.i += 1
        return line

    def keyed(self, key: str) -> str:
        line = self.next(key)
        head, _, rest = line.partition(" ")
        if head != key:
            raise CheckpointError(f"expected '{key}' at line {self.i}, found {line!r}")
        return rest

    def floats(self, key: str) -> np.ndarray:
        n = int(self.keyed(key))
        try:
            return np.array([float.fromhex(self.next(key)) for _ in range(n)])
        except ValueError as exc:
            raise CheckpointError(f"bad number in block '{key}': {exc}") from None


def load(path, *, expect_L: int | None = None, expect_band: int | None = None) -> Checkpoint:
    """Read a checkpoint; discretisation mismatches raise :class:`CheckpointError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    r = _Reader(text.splitlines())
    head = r.next("header").split()
    if len(head) != 2 or head[0] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    try:
        version = int(head[1])
    except ValueError:
        raise CheckpointError(f"unreadable format version {head[1]!r}") from None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    try:
        L = int(r.keyed("L"))
        band = int(r.keyed("dirac_band"))
    except ValueError as exc:
        raise CheckpointError(f"bad header value: {exc}") from None
    tag = r.keyed("phase_tag")
    if expect_L is not None and expect_L != L:
        raise CheckpointError(f"grid band mismatch: checkpoint has L={L}, requested L={expect_L}")
    if expect_band is not None and expect_band != band:
        raise CheckpointError(f"Dirac band mismatch: checkpoint has band={band}, requested band={expect_band}")
    if tag != PHASE_TAG:
        raise CheckpointError(f"phase convention mismatch: checkpoint has {tag!r}, this build uses {PHASE_TAG!r}")
    try:
        prov = json.loads(r.keyed("provenance"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"bad provenance record: {exc}") from None
    u, h1, h2 = (r.floats(k) for k in ("u", "h1", "h2"))
    n = int(r.keyed("psi"))
    a = np.empty(n, dtype=complex)
    for k in range(n):
        parts = r.next("psi").split()
        if len(parts) != 2:
            raise CheckpointError(f"bad spinor coefficient line {r.i}")
        a[k] = complex(float.fromhex(parts[0]), float.fromhex(parts[1]))
    if r.next("end") != "end":
        raise CheckpointError("missing end marker")
    grid = build_grid(L)
    basis = build_basis(grid, band)
    if a.size != basis.size:
        raise CheckpointError(f"spinor block has {a.size} coefficients, band {band} needs {basis.size}")
    state = SolutionPair(
        ScalarField.from_coeffs(grid, u),
        SpinorState(basis, a),
        ScalarField.from_coeffs(grid, h1),
        ScalarField.from_coeffs(grid, h2),
    )
    return Checkpoint(state, prov)
