"""
Hierarchical log-linear model specifications and treatment-coded design
matrices.

Column order is fixed: intercept, then main effects in spec order, then
interactions in spec order.  Within a term, level combinations follow
``itertools.product`` over the term's factors (the last factor varies
fastest) with each factor's baseline level skipped.
"""

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .contingency import ContingencyTable

__all__ = [
    "ModelSpec",
    "Baselines",
    "Column",
    "DesignMatrix",
    "enumerate_lattice",
    "build_design",
    "rebase",
]


@dataclass(frozen=True)
class ModelSpec:
    """Main effects plus 2- and 3-way interaction terms.

    Text form mirrors the usual ``A+B+C+A*B`` notation; see :meth:`parse`.
    """

    main_effects: tuple
    interactions: tuple = ()

    def __post_init__(self):
        mains = tuple(self.main_effects)
        inters = tuple(tuple(t) for t in self.interactions)
        object.__setattr__(self, "main_effects", mains)
        object.__setattr__(self, "interactions", inters)
        if not mains:
            raise ValueError("a model needs at least one main effect")
        if len(set(mains)) != len(mains):
            raise ValueError("duplicate main effect")
        keys = [frozenset(t) for t in inters]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate interaction term")
        for term in inters:
            if len(term) not in (2, 3) or len(set(term)) != len(term):
                raise ValueError(f"interaction {term!r} must join 2 or 3 distinct factors")
            absent = [f for f in term if f not in mains]
            if absent:
                raise ValueError(
                    f"non-hierarchical spec: {'*'.join(term)} without main effect(s) {absent}"
                )
            if len(term) == 3:
                for sub in itertools.combinations(term, 2):
                    if frozenset(sub) not in keys:
                        raise ValueError(
                            f"non-hierarchical spec: {'*'.join(term)} without {'*'.join(sub)}"
                        )

    @classmethod
    def parse(cls, text):
        """Parse ``"年齡+性別+縣市+年齡*縣市"``-style text."""
        mains, inters = [], []
        for part in text.replace(" ", "").split("+"):
            if not part:
                raise ValueError(f"empty term in {text!r}")
            factors = part.split("*")
            if len(factors) == 1:
                mains.append(factors[0])
            else:
                inters.append(tuple(factors))
        return cls(tuple(mains), tuple(inters))

    @property
    def terms(self):
        return tuple((m,) for m in self.main_effects) + self.interactions

    @property
    def factors(self):
        return self.main_effects

    @property
    def label(self):
        return "+".join("*".join(t) for t in self.terms)

    def __str__(self):
        return self.label

    def contains(self, term):
        key = frozenset(term)
        return any(frozenset(t) == key for t in self.terms)


def enumerate_lattice(factors):
    """The nine hierarchical models over three factors ``(a, b, c)``.

    Order: independence; one pairwise term (a*c, a*b, b*c); two pairwise
    terms (a*b+b*c, a*b+a*c, a*c+b*c); all three pairwise; saturated.
    """
    factors = tuple(factors)
    if len(factors) != 3 or len(set(factors)) != 3:
        raise ValueError("the lattice is defined for exactly three distinct factors")
    a, b, c = factors
    ab, ac, bc = (a, b), (a, c), (b, c)
    interaction_sets = [
        (),
        (ac,),
        (ab,),
        (bc,),
        (ab, bc),
        (ab, ac),
        (ac, bc),
        (ab, ac, bc),
        (ab, ac, bc, (a, b, c)),
    ]
    return [ModelSpec(factors, inters) for inters in interaction_sets]


class Baselines(Mapping):
    """Factor name -> baseline (reference) level, validated against a table.

    Factors not given explicitly use their first level.
    """

    def __init__(self, factors, levels=None):
        self._factors = {f.name: f for f in factors}
        chosen = {name: f.baseline for name, f in self._factors.items()}
        for name, level in dict(levels or {}).items():
            if name not in self._factors:
                raise ValueError(f"baseline given for unknown factor {name!r}")
            self._factors[name].index(level)
            chosen[name] = level
        self._levels = chosen

    @classmethod
    def for_table(cls, table: ContingencyTable, levels=None):
        return cls(table.factors, levels)

    def __getitem__(self, name):
        return self._levels[name]

    def __iter__(self):
        return iter(self._levels)

    def __len__(self):
        return len(self._levels)

    def __repr__(self):
        return f"Baselines({self._levels!r})"

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return dict(self.items()) == dict(other.items())
        return NotImplemented

    def replace(self, factor, level):
        return Baselines(self._factors.values(), {**self._levels, factor: level})


def rebase(spec: ModelSpec, baselines: Baselines, factor, new_baseline) -> Baselines:
    """Return ``baselines`` with ``factor`` referenced to ``new_baseline``."""
    if factor not in spec.factors:
        raise ValueError(f"factor {factor!r} is not in model {spec.label}")
    return baselines.replace(factor, new_baseline)


@dataclass(frozen=True)
class Column:
    """A design column: a term and the non-baseline level of each factor."""

    term: tuple
    levels: tuple

    @property
    def label(self):
        if not self.term:
            return "Intercept"
        return "*".join(self.term) + " " + " ".join(self.levels)

    def __str__(self):
        return self.label


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    matrix: np.ndarray
    columns: tuple
    spec: ModelSpec
    baselines: Baselines
    factors: tuple

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def labels(self):
        return tuple(c.label for c in self.columns)

    @property
    def n_params(self):
        return len(self.columns)

    @property
    def df_resid(self):
        return self.matrix.shape[0] - self.matrix.shape[1]

    def index(self, term, levels):
        """Column position for ``term`` at ``levels`` (order as in the term).

        Returns None when a level is the term factor's baseline, i.e. the
        coefficient is fixed at zero.
        """
        term, levels = tuple(term), tuple(levels)
        for name, level in zip(term, levels):
            if self.baselines[name] == level:
                return None
        for i, col in enumerate(self.columns):
            if col.term == term and col.levels == levels:
                return i
        raise KeyError(f"no column {'*'.join(term)} {' '.join(levels)}")


def build_design(table: ContingencyTable, spec: ModelSpec, baselines=None) -> DesignMatrix:
    """Treatment-coded 0/1 design matrix for ``spec`` over ``table``'s cells.

    Rows follow the table's storage order.  ``baselines`` may be a
    :class:`Baselines`, a plain mapping (which must then name every factor
    in the spec), or None for first-level baselines.
    """
    names = table.names
    for f in spec.factors:
        if f not in names:
            raise ValueError(f"model factor {f!r} is not in table factors {names}")
    if baselines is None:
        baselines = Baselines.for_table(table)
    elif not isinstance(baselines, Baselines):
        missing = [f for f in spec.factors if f not in baselines]
        if missing:
            raise ValueError(f"no baseline given for factor(s) {missing}")
        baselines = Baselines.for_table(table, {f: baselines[f] for f in spec.factors})
    # re-validate: a rebuilt spec must still be hierarchical
    ModelSpec(spec.main_effects, spec.interactions)

    cell_index = np.indices(table.shape).reshape(len(names), -1)
    n = cell_index.shape[1]
    cols = [np.ones(n)]
    labels = [Column((), ())]
    for term in spec.terms:
        per_factor = []
        for name in term:
            f = table.factor(name)
            base = f.index(baselines[name])
            per_factor.append([(i, lv) for i, lv in enumerate(f.levels) if i != base])
        axes = [names.index(name) for name in term]
        for combo in itertools.product(*per_factor):
            col = np.ones(n)
            for axis, (i, _) in zip(axes, combo):
                col = col * (cell_index[axis] == i)
            cols.append(col)
            labels.append(Column(tuple(term), tuple(lv for _, lv in combo)))
    matrix = np.column_stack(cols)
    matrix.flags.writeable = False
    return DesignMatrix(matrix, tuple(labels), spec, baselines, table.factors)
