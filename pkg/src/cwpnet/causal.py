"""Discrete causal models: exact enumeration, graph surgery, and backdoor adjustment."""
from __future__ import annotations

import csv
import string
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path

import numpy as np

CPT_TOL = 1e-9


class ZeroCountError(ValueError):
    """A conditional needed by the adjustment has no supporting observations."""


@dataclass
class DiscreteScm:
    """Finite-domain causal model.

    ``cpts[v]`` has one axis per parent (in ``parents[v]`` order) followed by
    the axis of ``v`` itself; every row over the last axis sums to one.
    """

    domains: dict[str, int]
    parents: dict[str, list[str]]
    cpts: dict[str, np.ndarray]
    order: list[str] = field(init=False)

    def __post_init__(self):
        for v in self.domains:
            self.parents.setdefault(v, [])
        for v, ps in self.parents.items():
            if v not in self.domains:
                raise KeyError(f"unknown variable {v!r}")
            for p in ps:
                if p not in self.domains:
                    raise KeyError(f"unknown parent {p!r} of {v!r}")
        try:
            self.order = list(TopologicalSorter(self.parents).static_order())
        except CycleError as exc:
            raise ValueError(f"causal graph has a cycle: {exc.args[1]}") from None
        for v in self.domains:
            self._check_cpt(v, self.cpts[v])

    def _check_cpt(self, v: str, table: np.ndarray) -> None:
        want = tuple(self.domains[p] for p in self.parents[v]) + (self.domains[v],)
        if table.shape != want:
            raise ValueError(f"CPT of {v!r} has shape {table.shape}, expected {want}")
        if np.any(table < 0) or np.max(np.abs(table.sum(axis=-1) - 1)) > CPT_TOL:
            raise ValueError(f"CPT rows of {v!r} must be distributions")

    @property
    def variables(self) -> list[str]:
        return list(self.domains)

    def joint(self) -> np.ndarray:
        """Full joint distribution with one axis per variable in ``variables`` order."""
        names = self.variables
        letters = dict(zip(names, string.ascii_letters))
        operands, subs = [], []
        for v in names:
            operands.append(self.cpts[v])
            subs.append("".join(letters[p] for p in self.parents[v]) + letters[v])
        spec = ",".join(subs) + "->" + "".join(letters[v] for v in names)
        return np.einsum(spec, *operands)

    def intervene(self, var: str, value: int) -> DiscreteScm:
        """Graph surgery: drop the incoming edges of ``var`` and fix it at ``value``."""
        if var not in self.domains:
            raise KeyError(f"unknown variable {var!r}")
        if not 0 <= value < self.domains[var]:
            raise ValueError(f"{var}={value} outside its domain of size {self.domains[var]}")
        point = np.zeros(self.domains[var])
        point[value] = 1.0
        parents = {v: (list(ps) if v != var else []) for v, ps in self.parents.items()}
        cpts = dict(self.cpts)
        cpts[var] = point
        return DiscreteScm(dict(self.domains), parents, cpts)

    def marginal(self, names: list[str], joint: np.ndarray | None = None) -> np.ndarray:
        joint = self.joint() if joint is None else joint
        keep = [self.variables.index(n) for n in names]
        drop = tuple(i for i in range(joint.ndim) if i not in keep)
        m = joint.sum(axis=drop)
        # reorder axes to follow ``names``
        current = sorted(keep)
        return np.transpose(m, [current.index(i) for i in keep])


def interventional_by_surgery(scm: DiscreteScm, do_var: str, do_val: int, query_var: str) -> np.ndarray:
    """P(query_var | do(do_var = do_val)) by exact enumeration of the mutilated model."""
    if query_var not in scm.domains:
        raise KeyError(f"unknown variable {query_var!r}")
    return scm.intervene(do_var, do_val).marginal([query_var])


def adjustment_from_joint(scm: DiscreteScm, x: str, y: str, z: list[str], joint: np.ndarray | None = None
                          ) -> np.ndarray:
    """sum_z P(y | x, z) P(z) for every (x, y), from the observational joint.

    Returns an array indexed ``[x_value, y_value]``.
    """
    m = scm.marginal([*z, x, y], joint)
    pz = m.sum(axis=(-2, -1))
    pxz = m.sum(axis=-1, keepdims=True)
    if np.any(pxz == 0):
        raise ZeroCountError("P(x, z) = 0 for some cell; adjustment is undefined")
    cond = m / pxz
    return np.tensordot(pz, cond, axes=(list(range(pz.ndim)), list(range(pz.ndim))))


def backdoor_adjust(counts, x: int, y: int) -> float:
    """P(Y=y | do(X=x)) = sum_z P(y | x, z) P(z) from a count table indexed [z, x, y]."""
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 3:
        raise ValueError(f"count table must be indexed [z, x, y], got shape {c.shape}")
    pz = c.sum(axis=(1, 2)) / c.sum()
    nxz = c[:, x, :].sum(axis=1)
    if np.any(nxz == 0):
        bad = [int(i) for i in np.flatnonzero(nxz == 0)]
        raise ZeroCountError(f"no observations with X={x} in stratum z={bad}")
    return float(np.sum(c[:, x, y] / nxz * pz))


def backdoor_adjust_rates(rates, pz, x: int, y: int) -> float:
    """Same adjustment from conditional rates ``rates[z, x, y] = P(y | x, z)`` and P(z)."""
    r = np.asarray(rates, dtype=np.float64)
    p = np.asarray(pz, dtype=np.float64)
    return float(np.sum(r[:, x, y] * p))


def naive_conditional(counts, x: int, y: int) -> float:
    """P(Y=y | X=x) ignoring the strata."""
    c = np.asarray(counts, dtype=np.float64).sum(axis=0)
    if c[x].sum() == 0:
        raise ZeroCountError(f"no observations with X={x}")
    return float(c[x, y] / c[x].sum())


@dataclass
class CountTable:
    counts: np.ndarray
    z_labels: list[str]
    x_labels: list[str]
    y_labels: list[str]

    def index(self, axis: str, label: str) -> int:
        labels = {"z": self.z_labels, "x": self.x_labels, "y": self.y_labels}[axis]
        return labels.index(label)


def read_count_table(path: str | Path) -> CountTable:
    """Parse a ``z,x,y,count`` CSV (header required); labels are sorted per column."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["z", "x", "y", "count"]:
            raise ValueError(f"{path}: header must be z,x,y,count, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            z, x, y, n = (f.strip() for f in row)
            try:
                count = float(n)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: count {n!r} is not a number") from None
            if count < 0:
                raise ValueError(f"{path}:{lineno}: negative count")
            rows.append((z, x, y, count))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    zl = sorted({r[0] for r in rows})
    xl = sorted({r[1] for r in rows})
    yl = sorted({r[2] for r in rows})
    counts = np.zeros((len(zl), len(xl), len(yl)))
    for z, x, y, n in rows:
        counts[zl.index(z), xl.index(x), yl.index(y)] += n
    return CountTable(counts, zl, xl, yl)


def random_cpt(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    t = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1]) if len(shape) > 1 else rng.dirichlet(np.ones(shape[0]))
    return np.asarray(t).reshape(shape)


# Degradation pattern T drives the degradation features D and the prompted
# subbands P; the degraded image X comes from D and semantics C; the restored
# image Y is reached through the restoration path X -> R -> Y and through P.
DECONFOUNDING_EDGES = {
    "T": [],
    "C": [],
    "D": ["T"],
    "X": ["C", "D"],
    "P": ["T"],
    "R": ["X"],
    "Y": ["R", "P"],
}


def deconfounding_scm(rng: np.random.Generator, p_size: int = 4, sizes: dict[str, int] | None = None
                      ) -> DiscreteScm:
    """Random CPTs on the deconfounding graph with |P| = ``p_size``."""
    domains = {"T": 3, "C": 2, "D": 3, "X": 3, "P": p_size, "R": 3, "Y": 2}
    if sizes:
        domains.update(sizes)
    parents = {v: list(ps) for v, ps in DECONFOUNDING_EDGES.items()}
    cpts = {v: random_cpt(rng, tuple(domains[p] for p in parents[v]) + (domains[v],)) for v in domains}
    return DiscreteScm(domains, parents, cpts)
