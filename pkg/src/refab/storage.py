"""Plain-text kernel files, a kernel cache and controller bundles."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path
from typing import Optional

import numpy as np

from .control import CostWeights, RiccatiKernel, solve_riccati_steady
from .errors import RefabError
from .linear import LinearModel

KERNEL_MAGIC = "riccati-kernel"


class KernelFileError(RefabError):
    exit_code = 3


def format_kernel(kernel: RiccatiKernel) -> str:
    n = kernel.n_cells
    lines = [f"{KERNEL_MAGIC} {n} {kernel.v_bar!r} {kernel.R!r}"]
    lines.extend(" ".join("%.17g" % x for x in row) for row in kernel.values)
    return "\n".join(lines) + "\n"


def save_kernel(kernel: RiccatiKernel, path) -> None:
    try:
        Path(path).write_text(format_kernel(kernel))
    except OSError as exc:
        raise KernelFileError(f"cannot write kernel file {path}: {exc}") from exc


def parse_kernel(text: str, weights: Optional[CostWeights] = None) -> RiccatiKernel:
    """Inverse of :func:`format_kernel`.

    The file only records R; pass ``weights`` to attach the full cost data.
    """
    rows = text.strip().splitlines()
    head = rows[0].split() if rows else []
    if len(head) != 4 or head[0] != KERNEL_MAGIC:
        raise KernelFileError(f"bad kernel header: {rows[0] if rows else '<empty>'!r}")
    try:
        n, v_bar, R = int(head[1]), float(head[2]), float(head[3])
        values = np.array([[float(x) for x in r.split()] for r in rows[1:]])
    except ValueError as exc:
        raise KernelFileError(f"malformed kernel file: {exc}") from exc
    if values.shape != (n + 1, n + 1):
        raise KernelFileError(f"expected {n + 1}x{n + 1} values, got {values.shape}")
    if weights is None:
        weights = CostWeights(R=R)
    elif weights.R != R:
        raise KernelFileError(f"kernel was solved with R={R}, not R={weights.R}")
    return RiccatiKernel(values, v_bar, weights)


def load_kernel(path, weights: Optional[CostWeights] = None) -> RiccatiKernel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise KernelFileError(f"cannot read kernel file {path}: {exc}") from exc
    return parse_kernel(text, weights)


class KernelCache:
    """Directory of kernel files keyed by grid, stage speed and cost weights."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def key(self, model: LinearModel, weights: CostWeights, n_cells: int) -> str:
        ident = repr((n_cells, float(model.v_bar), weights.q0, weights.R, weights.q1_kind,
                      weights.sigma, weights.pf_kind, weights.p0))
        return hashlib.sha256(ident.encode()).hexdigest()[:16]

    def path(self, model, weights, n_cells) -> Path:
        return self.directory / f"kernel-{self.key(model, weights, n_cells)}.txt"

    def get(self, model: LinearModel, weights: CostWeights, n_cells: int) -> RiccatiKernel:
        target = self.path(model, weights, n_cells)
        if target.exists():
            return load_kernel(target, weights)
        kernel = solve_riccati_steady(model, weights, n_cells)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise KernelFileError(f"cannot create cache directory {self.directory}: {exc}") from exc
        tmp = target.with_suffix(f".{os.getpid()}.tmp")
        save_kernel(kernel, tmp)
        os.replace(tmp, target)
        # hand back the file contents so cold and warm runs see the same numbers
        return load_kernel(target, weights)

    def source(self, weights: CostWeights, n_cells: int):
        return lambda model: self.get(model, weights, n_cells)


def format_bundle(controller, kernel_paths=None) -> str:
    """Audit text: one section per stage with ladder row, kernel reference, m(z) and m_w."""
    out = [f"controller stages={len(controller.stages)} R={controller.R!r}"]
    for k, stage in enumerate(controller.stages):
        ref = kernel_paths[k] if kernel_paths else "inline-none" if stage.kernel is None else "not-exported"
        ff = stage.feedforward
        out.append(f"[stage {k + 1}]")
        out.append(f"rho_bar = {stage.model.rho_bar!r}")
        out.append(f"v_bar = {stage.model.v_bar!r}")
        out.append(f"kernel = {ref}")
        out.append("m_w = " + " ".join(repr(float(x)) for x in ff.m_w))
        out.append("m_of_z =")
        for i, row in enumerate(ff.m_of_z):
            out.append(f"{i / ff.n_cells!r} " + " ".join(repr(float(x)) for x in row))
    return "\n".join(out) + "\n"
