"""DIMACS CNF handling and 3SAT-to-clustering instance generators.

Each clause (or block of clauses) becomes one client together with one
facility per assignment to its variables. A client sits at distance 1 from
the facilities whose assignment satisfies it and at distance D from the rest;
all clients hang off a dummy hub ``s``. Group constraints force exactly one
facility per clause and consistent assignments between clauses sharing a
variable, so satisfiable formulas give cost exactly k.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .instance import MEDIAN, Instance
from .metric import tree_metric


class CnfError(ValueError):
    pass


@dataclass(frozen=True)
class CnfFormula:
    n_vars: int
    clauses: tuple  # tuple of tuples of nonzero ints
    source: str | None = None

    @property
    def m(self) -> int:
        return len(self.clauses)

    def satisfied(self, sigma) -> int:
        """Number of clauses satisfied by ``sigma`` (var -> 0/1)."""
        return sum(clause_satisfied(c, sigma) for c in self.clauses)


def clause_satisfied(clause, sigma) -> bool:
    return any((sigma[abs(l)] == 1) == (l > 0) for l in clause)


def parse_cnf(text: str, source: str | None = None) -> CnfFormula:
    """Parse DIMACS CNF. Comment lines start with ``c``; a ``%`` line ends input."""
    n_vars = n_clauses = None
    clauses: list = []
    cur: list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            parts = line.split()
            if n_vars is not None:
                raise CnfError(f"line {lineno}: duplicate header")
            if len(parts) != 4 or parts[1] != "cnf":
                raise CnfError(f"line {lineno}: malformed header {line!r}")
            try:
                n_vars, n_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise CnfError(f"line {lineno}: malformed header {line!r}") from None
            if n_vars < 0 or n_clauses < 0:
                raise CnfError(f"line {lineno}: negative count in header")
            continue
        if n_vars is None:
            raise CnfError(f"line {lineno}: clause before header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise CnfError(f"line {lineno}: bad literal {tok!r}") from None
            if lit == 0:
                if not cur:
                    raise CnfError(f"line {lineno}: empty clause")
                clauses.append(tuple(cur))
                cur = []
            elif abs(lit) > n_vars:
                raise CnfError(f"line {lineno}: literal {lit} exceeds {n_vars} variables")
            else:
                cur.append(lit)
    if n_vars is None:
        raise CnfError("missing 'p cnf' header")
    if cur:
        raise CnfError("last clause is not terminated by 0")
    if len(clauses) != n_clauses:
        raise CnfError(f"header declares {n_clauses} clauses, found {len(clauses)}")
    return CnfFormula(n_vars, tuple(clauses), source)


def read_cnf(path) -> CnfFormula:
    with open(path) as fh:
        return parse_cnf(fh.read(), str(path))


def serialize_cnf(phi: CnfFormula) -> str:
    lines = [f"p cnf {phi.n_vars} {phi.m}"]
    lines += [" ".join(map(str, c)) + " 0" for c in phi.clauses]
    return "\n".join(lines) + "\n"


def random_3cnf(n_vars: int, m: int, seed=0) -> CnfFormula:
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(m):
        vs = rng.choice(n_vars, size=min(3, n_vars), replace=False) + 1
        signs = rng.choice([-1, 1], size=len(vs))
        clauses.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return CnfFormula(n_vars, tuple(clauses))


def all_assignments(n_vars: int):
    for bits in itertools.product((0, 1), repeat=n_vars):
        yield dict(zip(range(1, n_vars + 1), bits))


def max_satisfiable(phi: CnfFormula) -> int:
    """Exhaustive max number of simultaneously satisfiable clauses."""
    return max(phi.satisfied(s) for s in all_assignments(phi.n_vars))


@dataclass
class ReductionArtifact:
    instance: Instance
    provenance: dict  # facility id -> (block index, {var: bit}, pad bits)
    blocks: tuple  # clause indices per client
    block_vars: tuple  # variable slots per client (pads as negative placeholders)
    D: float
    mode: str  # "per-clause" | "super-clause"
    bounds: str  # "range" | "lower-only"
    formula: CnfFormula
    notes: list = field(default_factory=list)

    def solution_for(self, sigma) -> tuple:
        """The facility set picking, per block, the facility that agrees with
        ``sigma`` on the block's variables (pad bits 0)."""
        out = []
        for f, (b, part, pads) in self.provenance.items():
            if any(pads) or any(sigma[v] != x for v, x in part.items()):
                continue
            out.append(f)
        return tuple(out)

    def induced_assignments(self, centers) -> list:
        return [self.provenance[f][1] for f in centers]

    def provenance_rows(self) -> list:
        return [{"facility": f, "block": b, "assignment": {str(v): x for v, x in part.items()},
                 "pads": list(pads)} for f, (b, part, pads) in self.provenance.items()]


def consistent(partials: Iterable[dict]) -> bool:
    seen: dict = {}
    for part in partials:
        for v, x in part.items():
            if seen.setdefault(v, x) != x:
                return False
    return True


def _build(phi: CnfFormula, blocks, slots, D, bounds, s_weight, mode, name) -> ReductionArtifact:
    if bounds not in ("range", "lower-only"):
        raise ValueError(f"unknown bounds mode {bounds!r}")
    kk = len(blocks)
    clients = [f"c{i}" for i in range(kk)]
    facilities, edges, prov = [], [], {}
    groups, alpha, beta = [], [], []
    by_block = []
    for i, (blk, sl) in enumerate(zip(blocks, slots)):
        real = [v for v in sl if v > 0]
        members = []
        for j, bits in enumerate(itertools.product((0, 1), repeat=len(sl))):
            part = {v: x for v, x in zip(sl, bits) if v > 0}
            pads = tuple(x for v, x in zip(sl, bits) if v <= 0)
            f = f"f{i}_{j}"
            facilities.append(f)
            prov[f] = (i, part, pads)
            ok = all(clause_satisfied(phi.clauses[c], part) for c in blk)
            edges.append((clients[i], f, 1 if ok else D))
            members.append(f)
        by_block.append((members, real))
        groups.append(members)
        alpha.append(1)
        beta.append(1)
    for i, ip in itertools.combinations(range(kk), 2):
        shared = sorted(set(by_block[i][1]) & set(by_block[ip][1]))
        for v in shared:
            for a in (0, 1):
                g = [f for f in by_block[i][0] if prov[f][1][v] == a]
                g += [f for f in by_block[ip][0] if prov[f][1][v] == 1 - a]
                groups.append(g)
                alpha.append(1)
                beta.append(1)
    if bounds == "lower-only":
        beta = [kk] * len(groups)
    sw = D if s_weight is None else s_weight
    edges = [("s", c, sw) for c in clients] + edges
    metric = tree_metric(edges, "s")
    caps = {f: kk for f in facilities}
    inst = Instance.build(kk, clients, facilities, groups, alpha, beta, caps, metric, MEDIAN, name=name)
    return ReductionArtifact(inst, prov, tuple(tuple(b) for b in blocks), tuple(tuple(s) for s in slots),
                             D, mode, bounds, phi)


def gen_sat_reduction(phi: CnfFormula, D: float = 100, bounds: str = "range",
                      s_weight: float | None = None) -> ReductionArtifact:
    """One client and eight facilities per clause; k = m.

    Clauses with fewer than three distinct variables get pad slots whose
    bits do not affect satisfaction. ``s_weight`` (default D) is the length
    of the edges from the dummy hub to the clients; 1 gives the unit-weight
    variant, under which clients of unsatisfied clauses can be served across
    clauses at cost 3.
    """
    blocks, slots, notes = [], [], []
    for i, c in enumerate(phi.clauses):
        vs = list(dict.fromkeys(abs(l) for l in c))
        if len(vs) > 3:
            raise ValueError(f"clause {i} has more than three variables")
        pads = 3 - len(vs)
        if pads:
            notes.append(f"clause {i}: {pads} pad slot(s)")
        slots.append(vs + [-p for p in range(pads)])
        blocks.append([i])
    art = _build(phi, blocks, slots, D, bounds, s_weight, "per-clause", f"sat-m{phi.m}-D{D}")
    art.notes = notes
    return art


def split_blocks(m: int, kappa: int) -> list:
    """kappa contiguous blocks whose sizes differ by at most one."""
    if not 1 <= kappa <= m:
        raise ValueError("need 1 <= kappa <= number of clauses")
    return [list(map(int, b)) for b in np.array_split(np.arange(m), kappa)]


def gen_gap_sat_reduction(phi: CnfFormula, kappa: int, D: float = 100, var_cap: int = 20,
                          bounds: str = "range", s_weight: float | None = None) -> ReductionArtifact:
    """One client per block of clauses, one facility per assignment to the
    block's variables; k = kappa."""
    blocks = split_blocks(phi.m, kappa)
    slots = []
    for bi, blk in enumerate(blocks):
        vs = sorted({abs(l) for c in blk for l in phi.clauses[c]})
        if len(vs) > var_cap:
            raise ValueError(f"block {bi} has {len(vs)} variables, above the cap of {var_cap}")
        slots.append(vs)
    art = _build(phi, blocks, slots, D, bounds, s_weight, "super-clause", f"gapsat-m{phi.m}-k{kappa}-D{D}")
    sizes = [len(b) for b in blocks]
    if len(set(sizes)) > 1:
        art.notes = [f"uneven block sizes {sizes}"]
    return art
