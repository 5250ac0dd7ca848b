"""Multi-modal multi-objective benchmark problems and reference Pareto sets.

All problems minimize every objective over a box-bounded decision space.
Each problem can produce a reference Pareto set: a large sample of
Pareto-optimal solutions partitioned into modes (equivalent Pareto
subsets), which drives the IGD/IGDX/mode-ratio evaluation.

Problem catalog (formulas and constants documented in the README):

* ``mindist2`` / ``mindist3``: each objective is the distance to the
  nearest of two center points; overlapping single-objective niches
  produce multiple multi-objective niches (2 and 3 objectives).
* ``two-on-one``: bi-modal quartic vs. unimodal sphere (Preuss, Naujoks,
  Rudolph 2006); one connected Pareto set with two symmetric halves.
* ``sym-part1/2/3``: the two-parabolas problem replicated on a 3x3 tile
  grid (Rudolph, Naujoks, Preuss 2007) with nine equivalent Pareto
  segments; variant 2 rotates the tile pattern by 45 degrees, variant 3
  additionally bends the segments with a sinusoidal shear (this
  library's documented stand-in for the original distortion).
* ``ssuf1`` / ``ssuf3``: shifted/symmetric bi-objective problems (Liang,
  Yue, Qu 2016) whose Pareto sets are two sine arcs joined at a point,
  respectively two shifted square-root arcs with many local ripples.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .archive import greedy_scattered_indices
from .core import EvaluationCounter, Solution, nondominated_mask

REFERENCE_SET_SIZE = 5000


@dataclass(frozen=True)
class Problem:
    """Benchmark problem descriptor with a vectorized objective function."""

    name: str
    n: int
    m: int
    lower: np.ndarray
    upper: np.ndarray
    _evaluate: Callable[["Problem", np.ndarray], np.ndarray]
    _reference: Callable[["Problem", int], "ReferenceSet"]

    @property
    def domain_width(self) -> np.ndarray:
        return self.upper - self.lower

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        """Objective matrix for decision matrix ``X`` (rows are points)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n:
            raise ValueError(
                f"{self.name}: expected {self.n} decision variables, got {X.shape[1]}"
            )
        return self._evaluate(self, X)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate_batch(np.asarray(x)[None, :])[0]

    def repair_to_bounds(self, X: np.ndarray) -> np.ndarray:
        """Clamp decision vectors coordinate-wise into the box bounds."""
        return np.clip(X, self.lower, self.upper)

    def reference_set(self, count: int = REFERENCE_SET_SIZE) -> "ReferenceSet":
        """Sampled Pareto-optimal solutions partitioned into modes."""
        return self._reference(self, count)


class Evaluator:
    """Binds a problem to an evaluation counter; every call is billed."""

    def __init__(self, problem: Problem, counter: EvaluationCounter) -> None:
        self.problem = problem
        self.counter = counter

    @property
    def remaining(self) -> int | None:
        return self.counter.remaining

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        self.counter.charge(len(X))
        return self.problem.evaluate_batch(X)


def sample_uniform(
    problem: Problem,
    count: int,
    rng: np.random.Generator,
    counter: EvaluationCounter | None = None,
) -> list[Solution]:
    """``count`` evaluated solutions sampled i.i.d. uniformly over the box.

    Evaluations are billed against ``counter`` when one is given.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    X = rng.uniform(problem.lower, problem.upper, size=(count, problem.n))
    if counter is not None:
        counter.charge(count)
    F = problem.evaluate_batch(X)
    return [Solution(x, f) for x, f in zip(X, F)]


@dataclass
class ReferenceSet:
    """Reference Pareto set with per-solution mode labels."""

    problem_name: str
    X: np.ndarray
    F: np.ndarray
    modes: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.modes = np.asarray(self.modes, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def mode_count(self) -> int:
        return int(self.modes.max()) + 1 if len(self.modes) else 0

    def mode_points(self, mode: int) -> np.ndarray:
        return self.X[self.modes == mode]

    def to_csv(self, path: str | Path) -> None:
        n, m = self.X.shape[1], self.F.shape[1]
        header = ",".join(
            [f"x{i}" for i in range(n)] + [f"f{j}" for j in range(m)] + ["mode"]
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for x, f, mode in zip(self.X, self.F, self.modes):
                cells = [f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in f]
                fh.write(",".join(cells + [str(int(mode))]) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path, problem_name: str = "") -> "ReferenceSet":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            n = sum(1 for c in header if c.startswith("x"))
            m = sum(1 for c in header if c.startswith("f"))
            rows = np.loadtxt(fh, delimiter=",", ndmin=2)
        return cls(
            problem_name=problem_name,
            X=rows[:, :n],
            F=rows[:, n : n + m],
            modes=rows[:, n + m].astype(np.int64),
        )


# ---------------------------------------------------------------------------
# minimum-distance problems


def _mindist_centers(m: int, n: int) -> np.ndarray:
    """Center points, zero-padded to dimension ``n`` (two per objective)."""
    if m == 2:
        base = [(-2.0, -1.0), (2.0, 1.0), (-2.0, 1.0), (2.0, -1.0)]
    elif m == 3:
        base = [
            (-4.0, -4.0, 0.0),
            (2.0, 2.0, 0.0),
            (-2.0, -4.0, 0.0),
            (4.0, 2.0, 0.0),
            (-3.0, -2.0, 1.0),
            (3.0, 4.0, 1.0),
        ]
    else:
        raise ValueError(f"mindist supports m in {{2, 3}}, got {m}")
    centers = np.zeros((2 * m, n))
    for i, c in enumerate(base):
        centers[i, : len(c)] = c
    return centers


def _make_mindist_evaluate(m: int, n: int) -> Callable[[Problem, np.ndarray], np.ndarray]:
    centers = _mindist_centers(m, n)

    def evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
        F = np.empty((len(X), m))
        for i in range(m):
            d0 = np.linalg.norm(X - centers[2 * i], axis=1)
            d1 = np.linalg.norm(X - centers[2 * i + 1], axis=1)
            F[:, i] = np.minimum(d0, d1)
        return F

    return evaluate


def _split_counts(count: int, parts: int) -> list[int]:
    base, extra = divmod(count, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def _mindist2_reference(problem: Problem, count: int) -> ReferenceSet:
    # two global Pareto segments: x0 = -2 and x0 = +2, x1 in [-1, 1]
    counts = _split_counts(count, 2)
    blocks, modes = [], []
    for mode, (x0, c) in enumerate(zip((-2.0, 2.0), counts)):
        X = np.zeros((c, problem.n))
        X[:, 0] = x0
        X[:, 1] = np.linspace(-1.0, 1.0, c)
        blocks.append(X)
        modes.append(np.full(c, mode))
    X = np.vstack(blocks)
    return ReferenceSet(problem.name, X, problem.evaluate_batch(X), np.concatenate(modes))


def _triangle_lattice(vertices: np.ndarray, count: int) -> np.ndarray:
    """Deterministic, evenly spread sample of a triangle with exact size.

    Generates the smallest barycentric lattice of at least ``count``
    points and trims it by greedy max-min selection.
    """
    s = 1
    while (s + 1) * (s + 2) // 2 < count:
        s += 1
    A, B, C = vertices
    pts = []
    for i in range(s + 1):
        for j in range(s + 1 - i):
            pts.append(A + (i / s) * (B - A) + (j / s) * (C - A))
    lattice = np.asarray(pts)
    if len(lattice) > count:
        lattice = lattice[greedy_scattered_indices(lattice, count)]
    return lattice


def _mindist3_reference(problem: Problem, count: int) -> ReferenceSet:
    centers = _mindist_centers(3, problem.n)
    # two congruent triangle-shaped Pareto sets, one per group of centers
    tri_minus = centers[[0, 2, 4]]
    tri_plus = centers[[1, 3, 5]]
    counts = _split_counts(count, 2)
    blocks, modes = [], []
    for mode, (tri, c) in enumerate(zip((tri_minus, tri_plus), counts)):
        blocks.append(_triangle_lattice(tri, c))
        modes.append(np.full(c, mode))
    X = np.vstack(blocks)
    return ReferenceSet(problem.name, X, problem.evaluate_batch(X), np.concatenate(modes))


# ---------------------------------------------------------------------------
# two-on-one: bi-modal quartic against a unimodal sphere

_TWO_ON_ONE_GRID = 2001


def _two_on_one_evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    f1 = x1**4 + x2**4 - x1**2 + x2**2 - 10.0 * x1 * x2 + 20.0
    f2 = x1**2 + x2**2
    return np.column_stack([f1, f2])


def _two_on_one_reference(problem: Problem, count: int) -> ReferenceSet:
    # no closed form: non-dominated filtering of a dense grid over the domain
    axis = np.linspace(problem.lower[0], problem.upper[0], _TWO_ON_ONE_GRID)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    X = np.column_stack([g1.ravel(), g2.ravel()])
    F = problem.evaluate_batch(X)
    mask = nondominated_mask(F)
    X, F = X[mask], F[mask]
    if len(X) > count:
        keep = greedy_scattered_indices(X, count)
        X, F = X[keep], F[keep]
    modes = _modes_by_clustering(problem, X, F)
    return ReferenceSet(problem.name, X, F, modes)


# ---------------------------------------------------------------------------
# SYM-PART: nine equivalent Pareto segments on a 3x3 tile grid

_SYM_A = 1.0  # half segment length
_SYM_B = 10.0  # vertical tile spacing
_SYM_C = 8.0  # horizontal gap between neighboring segment endpoints
_SYM_ROTATION = math.pi / 4
_SYM_SHEAR_AMPLITUDE = 0.5
_SYM_SHEAR_FREQUENCY = math.pi / 4


def _sym_part_base(V: np.ndarray) -> np.ndarray:
    """Tile-translated two-parabolas objectives."""
    a, b, c = _SYM_A, _SYM_B, _SYM_C
    v1, v2 = V[:, 0], V[:, 1]
    t1 = np.sign(v1) * np.ceil((np.abs(v1) - (a + c / 2.0)) / (2.0 * a + c))
    t2 = np.sign(v2) * np.ceil((np.abs(v2) - b / 2.0) / b)
    t1 = np.clip(t1, -1, 1)
    t2 = np.clip(t2, -1, 1)
    p1 = v1 - t1 * (c + 2.0 * a)
    p2 = v2 - t2 * b
    return np.column_stack([(p1 + a) ** 2 + p2**2, (p1 - a) ** 2 + p2**2])


def _sym_rotate(X: np.ndarray) -> np.ndarray:
    w = _SYM_ROTATION
    return np.column_stack(
        [
            math.cos(w) * X[:, 0] + math.sin(w) * X[:, 1],
            -math.sin(w) * X[:, 0] + math.cos(w) * X[:, 1],
        ]
    )


def _sym_rotate_back(U: np.ndarray) -> np.ndarray:
    w = _SYM_ROTATION
    return np.column_stack(
        [
            math.cos(w) * U[:, 0] - math.sin(w) * U[:, 1],
            math.sin(w) * U[:, 0] + math.cos(w) * U[:, 1],
        ]
    )


def _sym_shear(U: np.ndarray) -> np.ndarray:
    return np.column_stack(
        [
            U[:, 0],
            U[:, 1] + _SYM_SHEAR_AMPLITUDE * np.sin(_SYM_SHEAR_FREQUENCY * U[:, 0]),
        ]
    )


def _sym_part1_evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
    return _sym_part_base(X)


def _sym_part2_evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
    return _sym_part_base(_sym_rotate(X))


def _sym_part3_evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
    return _sym_part_base(_sym_shear(_sym_rotate(X)))


def _sym_tile_centers() -> list[tuple[float, float]]:
    step_x = _SYM_C + 2.0 * _SYM_A
    return [(tx * step_x, ty * _SYM_B) for ty in (-1, 0, 1) for tx in (-1, 0, 1)]


def _sym_part_reference(problem: Problem, count: int, variant: int) -> ReferenceSet:
    centers = _sym_tile_centers()
    counts = _split_counts(count, len(centers))
    blocks, modes = [], []
    for mode, ((cx, cy), c) in enumerate(zip(centers, counts)):
        s = np.linspace(-_SYM_A, _SYM_A, c)
        V = np.column_stack([cx + s, np.full(c, cy)])
        if variant == 1:
            X = V
        else:
            U = V.copy()
            if variant == 3:
                # invert the shear: u2 = v2 - A*sin(w*v1)
                U[:, 1] -= _SYM_SHEAR_AMPLITUDE * np.sin(
                    _SYM_SHEAR_FREQUENCY * U[:, 0]
                )
            X = _sym_rotate_back(U)
        blocks.append(X)
        modes.append(np.full(c, mode))
    X = np.vstack(blocks)
    return ReferenceSet(problem.name, X, problem.evaluate_batch(X), np.concatenate(modes))


# ---------------------------------------------------------------------------
# SSUF problems


def _ssuf1_evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
    t = np.abs(X[:, 0] - 2.0)
    f1 = t
    f2 = 1.0 - np.sqrt(t) + 2.0 * (X[:, 1] - np.sin(6.0 * math.pi * t + math.pi)) ** 2
    return np.column_stack([f1, f2])


def _ssuf1_reference(problem: Problem, count: int) -> ReferenceSet:
    counts = _split_counts(count, 2)
    blocks, modes = [], []
    for mode, (lo, hi, c) in enumerate(
        [(1.0, 2.0, counts[0]), (2.0, 3.0, counts[1])]
    ):
        x1 = np.linspace(lo, hi, c)
        t = np.abs(x1 - 2.0)
        x2 = np.sin(6.0 * math.pi * t + math.pi)
        blocks.append(np.column_stack([x1, x2]))
        modes.append(np.full(c, mode))
    X = np.vstack(blocks)
    return ReferenceSet(problem.name, X, problem.evaluate_batch(X), np.concatenate(modes))


def _ssuf3_evaluate(problem: Problem, X: np.ndarray) -> np.ndarray:
    x1, x2 = X[:, 0], X[:, 1]
    root = np.sqrt(x1)
    y = np.where(x2 <= 1.0, x2 - root, x2 - 1.0 - root)
    ripple = 4.0 * y**2 - 2.0 * np.cos(20.0 * math.pi * y / math.sqrt(2.0)) + 2.0
    return np.column_stack([x1, 1.0 - root + 2.0 * ripple])


def _ssuf3_reference(problem: Problem, count: int) -> ReferenceSet:
    counts = _split_counts(count, 2)
    # parametrized by x2 so consecutive samples hug the arcs tightly
    x2_a = np.linspace(0.0, 1.0, counts[0])
    branch_a = np.column_stack([x2_a**2, x2_a])
    u = np.linspace(0.0, 1.0, counts[1] + 1)[1:]  # x2 = 1 sits on branch a
    branch_b = np.column_stack([u**2, 1.0 + u])
    X = np.vstack([branch_a, branch_b])
    F = problem.evaluate_batch(X)
    modes = _modes_by_clustering(problem, X, F)
    return ReferenceSet(problem.name, X, F, modes)


# ---------------------------------------------------------------------------
# mode labeling by clustering, for reference sets without analytic modes


def _modes_by_clustering(problem: Problem, X: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Partition a reference sample into modes with hill-valley clustering.

    These evaluations are analysis-time only and never touch a run budget.
    """
    from .hillvalley import multi_objective_clustering

    solutions = [Solution(x, f) for x, f in zip(X, F)]
    counter = EvaluationCounter()  # unlimited, non-billable scratch counter
    evaluate = Evaluator(problem, counter)
    clusters = multi_objective_clustering(
        solutions, evaluate, problem.domain_width
    )
    modes = np.empty(len(solutions), dtype=np.int64)
    index_of = {id(s): i for i, s in enumerate(solutions)}
    for cluster in clusters:
        for member in cluster.members:
            i = index_of.get(id(member))
            if i is not None:  # probe points are not part of the reference
                modes[i] = cluster.id
    return modes


# ---------------------------------------------------------------------------
# registry


def _box(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    return np.full(n, lo), np.full(n, hi)


def get_problem(name: str, n: int | None = None) -> Problem:
    """Look up a benchmark problem by name.

    ``n`` overrides the decision-space dimension for the mindist family;
    the other problems are fixed to two decision variables.
    """
    key = name.lower().replace("_", "-")
    if key == "mindist2":
        dim = n if n is not None else 2
        if dim < 2:
            raise ValueError("mindist2 needs n >= 2")
        lower, upper = _box(dim, -4.0, 4.0)
        return Problem(
            key, dim, 2, lower, upper,
            _make_mindist_evaluate(2, dim), _mindist2_reference,
        )
    if key == "mindist3":
        dim = n if n is not None else 3
        if dim < 3:
            raise ValueError("mindist3 needs n >= 3")
        lower, upper = _box(dim, -4.0, 4.0)
        return Problem(
            key, dim, 3, lower, upper,
            _make_mindist_evaluate(3, dim), _mindist3_reference,
        )
    if n is not None and n != 2:
        raise ValueError(f"{key} has a fixed decision-space dimension of 2")
    if key == "two-on-one":
        lower, upper = _box(2, -3.0, 3.0)
        return Problem(key, 2, 2, lower, upper, _two_on_one_evaluate, _two_on_one_reference)
    if key in ("sym-part1", "sym-part2", "sym-part3"):
        variant = int(key[-1])
        lower, upper = _box(2, -20.0, 20.0)
        evaluate = {1: _sym_part1_evaluate, 2: _sym_part2_evaluate, 3: _sym_part3_evaluate}[variant]
        return Problem(
            key, 2, 2, lower, upper, evaluate,
            lambda p, c, v=variant: _sym_part_reference(p, c, v),
        )
    if key == "ssuf1":
        return Problem(
            key, 2, 2, np.array([1.0, -1.0]), np.array([3.0, 1.0]),
            _ssuf1_evaluate, _ssuf1_reference,
        )
    if key == "ssuf3":
        return Problem(
            key, 2, 2, np.array([0.0, 0.0]), np.array([1.0, 2.0]),
            _ssuf3_evaluate, _ssuf3_reference,
        )
    raise ValueError(f"unknown problem {name!r}")


PROBLEM_NAMES = [
    "mindist2",
    "mindist3",
    "two-on-one",
    "sym-part1",
    "sym-part2",
    "sym-part3",
    "ssuf1",
    "ssuf3",
]

# problems in the fixed-budget benchmark table
TABLE_PROBLEMS = [
    "two-on-one",
    "sym-part1",
    "sym-part2",
    "sym-part3",
    "ssuf1",
    "ssuf3",
]


def default_archive_size(problem: Problem) -> int:
    """Default elitist-archive target: 1000 for m=2, 2500 for m=3."""
    return 1000 if problem.m == 2 else 2500


def default_mode_ratio_epsilon(problem: Problem) -> float:
    """Mode-attainment threshold: 0.05 for m=2, 0.1 for m=3."""
    return 0.05 if problem.m == 2 else 0.1


# ---------------------------------------------------------------------------
# reference-set disk cache


def default_cache_dir() -> Path:
    root = os.environ.get("MOHV_CACHE_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "mohillvallea" / "reference_sets"


def cached_reference_set(
    problem: Problem,
    count: int = REFERENCE_SET_SIZE,
    cache_dir: str | Path | None = None,
    seed: int = 0,
) -> ReferenceSet:
    """Reference set with a CSV disk cache keyed by (problem, n, count, seed).

    Construction is deterministic, so the seed only namespaces cache
    entries; it defaults to 0.
    """
    directory = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{problem.name}_n{problem.n}_c{count}_s{seed}.csv"
    if path.exists():
        return ReferenceSet.from_csv(path, problem_name=problem.name)
    reference = problem.reference_set(count)
    reference.to_csv(path)
    return reference
