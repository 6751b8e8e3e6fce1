"""Contributor-side sparse submission with Laplace-noised dummy edges.

Each row a pads its true edges with K_a encrypted zeros.  K_a is drawn from
the degree-histogram bin holding the row's true degree:

    x = (Up - Lo) / eps,   y = 3.9 x,   K = round(|y| + Laplace(0, x))

clamped at zero and at the number of free columns.  Dummy columns are
chosen uniformly among non-neighbors and the emitted list is shuffled.
"""
import bisect
import math
from dataclasses import dataclass, field

from . import paillier
from .errors import HistogramError, ParameterError, PlanError
from .fixedpoint import quantize, round_half_away, to_residue

SLOPE_CONST = 3.9


@dataclass(frozen=True)
class DegreeHistogram:
    bins: tuple
    published_by: str = "owner"

    def __post_init__(self):
        bins = tuple((int(lo), int(up)) for lo, up in self.bins)
        if not bins:
            raise HistogramError("histogram has no bins")
        prev_up = None
        for lo, up in bins:
            if lo > up:
                raise HistogramError(f"bin ({lo}, {up}) has Lo > Up")
            if prev_up is not None and lo != prev_up + 1:
                raise HistogramError("bins must be contiguous and non-overlapping")
            prev_up = up
        object.__setattr__(self, "bins", bins)

    def covers(self, n_nodes):
        return self.bins[0][0] <= 0 and self.bins[-1][1] >= n_nodes - 1

    def bin_of(self, degree):
        i = bisect.bisect_right([lo for lo, _ in self.bins], degree) - 1
        if i < 0 or degree > self.bins[i][1]:
            raise HistogramError(f"degree {degree} falls in no histogram bin")
        return self.bins[i]

    def to_dict(self):
        return {"bins": [list(b) for b in self.bins], "published_by": self.published_by}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(tuple(b) for b in d["bins"]), d.get("published_by", "owner"))


def uniform_histogram(n_nodes, width):
    """Contiguous bins of ``width`` degrees covering 0..n_nodes-1."""
    if width < 1:
        raise HistogramError("bin width must be positive")
    bins = [(lo, min(lo + width - 1, n_nodes - 1)) for lo in range(0, n_nodes, width)]
    return DegreeHistogram(tuple(bins))


@dataclass(frozen=True)
class DpParams:
    epsilon: float
    slope_const: float = SLOPE_CONST

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError("differential-privacy epsilon must be positive")


@dataclass
class SubmissionPlan:
    node: int
    true_degree: int
    laplace_scale: float
    dummy_mean: float
    noise: float
    raw_count: float  # |y| + phi before rounding and clamping
    dummy_count: int
    dummy_positions: frozenset = field(default_factory=frozenset)


def sample_laplace(scale, rng, u=None):
    """Inverse-CDF Laplace(0, scale) draw; ``u`` in (-1/2, 1/2) may be forced."""
    if not scale > 0:
        raise ParameterError("Laplace scale must be positive")
    if u is None:
        u = rng.random() - 0.5
        while u == -0.5:
            u = rng.random() - 0.5
    if u == 0:
        return 0.0
    return -scale * math.copysign(1.0, u) * math.log(1 - 2 * abs(u))


def dummy_candidates(a, n_nodes, neighbors, undirected=True, allow_self_loops=False):
    start = a if undirected else 0
    nb = set(neighbors)
    return [
        b
        for b in range(start, n_nodes)
        if b not in nb and (allow_self_loops or b != a)
    ]


def plan_dummies(hist, dp, a, degree, n_nodes, rng, *, neighbors=(), undirected=True,
                 allow_self_loops=False):
    if not 0 <= degree <= n_nodes - 1:
        raise HistogramError(f"degree {degree} outside 0..{n_nodes - 1}")
    lo, up = hist.bin_of(degree)
    x = (up - lo) / dp.epsilon
    y = dp.slope_const * x
    # a zero-width bin has no spread: phi degenerates to 0
    phi = sample_laplace(x, rng) if x > 0 else 0.0
    raw = abs(y) + phi
    candidates = dummy_candidates(a, n_nodes, neighbors, undirected, allow_self_loops)
    k = min(max(0, round_half_away(raw)), len(candidates))
    positions = frozenset(rng.sample(candidates, k)) if k else frozenset()
    return SubmissionPlan(a, degree, x, y, phi, raw, k, positions)


def submit_row(a, neighbors, plan, pk, rng, *, undirected=True, scale_exp=0, sk=None):
    """Encrypt a row's real edges plus the plan's dummy zeros, shuffled.

    ``neighbors`` is a list of (b, weight).  Weights are encoded at
    ``scale_exp``.  Returns a list of ((a, b), PaillierCiphertext).
    """
    cols = [b for b, _ in neighbors]
    if plan.dummy_positions & set(cols):
        raise PlanError(f"row {a}: dummy position collides with a real edge")
    if len(set(cols)) != len(cols):
        raise PlanError(f"row {a}: duplicate neighbor column")
    items = []
    for b, w in neighbors:
        if undirected and b < a:
            continue
        raw = to_residue(quantize(w, scale_exp), pk.n)
        items.append(((a, b), paillier.encrypt(pk, raw, rng, sk=sk)))
    for b in sorted(plan.dummy_positions):
        if undirected and b < a:
            raise PlanError(f"row {a}: dummy column {b} lies below the diagonal")
        items.append(((a, b), paillier.encrypt(pk, 0, rng, sk=sk)))
    rng.shuffle(items)
    return items
