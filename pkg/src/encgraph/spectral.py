"""Owner-side eigensolvers driven by encrypted matrix-vector rounds.

Operators expose ``dim``, ``weight_scale``, ``vector_scale`` and
``mvm_batch(list_of_raw_vectors) -> list_of_raw_vectors``.  Inputs are signed
fixed-point raws at ``vector_scale``; outputs are the exact integer products
at ``weight_scale + vector_scale``.  Everything the owner computes from those
integers is deterministic floating point, so two operators that agree on the
integers produce identical iterate sequences.
"""
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .eigsolve import jacobi_eigh, order_by_magnitude, tridiag_eigh
from .errors import DimensionError, ParameterError
from .fixedpoint import dequantize_vector, quantize_vector

CONVERGED = "converged"
CONTINUE = "continue"
FAILED = "failed"

BREAKDOWN = 1e-12
MAX_RESTARTS = 3
DEFAULT_MASK_BOUND = 8
DEFAULT_MASK_SCALE = 8


class PlainFixedPointOperator:
    """Plaintext reference: exact integer A_raw x_raw with no encryption."""

    def __init__(self, matrix, weight_scale=20, vector_scale=20, raw=False):
        m = [[int(v) for v in row] for row in matrix] if raw else [
            quantize_vector(row, weight_scale) for row in matrix
        ]
        if any(len(row) != len(m) for row in m):
            raise DimensionError("operator matrix must be square")
        self.matrix_raw = m
        self.dim = len(m)
        self.weight_scale = weight_scale
        self.vector_scale = vector_scale
        self.calls = 0

    def mvm_batch(self, xs):
        self.calls += 1
        out = []
        for x in xs:
            if len(x) != self.dim:
                raise DimensionError(f"expected length {self.dim}, got {len(x)}")
            out.append([sum(a * int(b) for a, b in zip(row, x)) for row in self.matrix_raw])
        return out


# -- masking ------------------------------------------------------------------


@dataclass
class MaskingPool:
    vectors: list
    images: list
    scale_exp: int
    consumed: int = 0

    @property
    def size(self):
        return len(self.vectors)


def random_fixed_vector(dim, bound, scale_exp, rng):
    """Uniform fixed-point entries in [-bound, bound] as raws at ``scale_exp``."""
    lim = int(bound * (1 << scale_exp))
    return [int(v) for v in rng.integers(-lim, lim + 1, size=dim)]


def preprocess_pool(raw_mvm, dim, m, scale_exp, rng):
    """Build a pool of m random vectors and learn their images through ``raw_mvm``.

    ``raw_mvm`` is the unmasked cloud round (list of raw vectors in, exact
    integer images out).  The vectors are independent of A.
    """
    if m < 1:
        raise ParameterError("masking pool needs at least one vector")
    vectors = [random_fixed_vector(dim, 1, scale_exp, rng) for _ in range(m)]
    images = [list(map(int, img)) for img in raw_mvm(vectors)]
    if len(images) != m:
        raise DimensionError("pool preprocessing returned the wrong number of images")
    return MaskingPool(vectors, images, scale_exp)


def mask_vector(x, pool, rng, bound=DEFAULT_MASK_BOUND, gamma_scale=DEFAULT_MASK_SCALE, gamma=None):
    """Blind raw vector ``x`` (at the pool's scale) with a secret pool combination.

    Returns (x_hat, gamma) where x_hat = x * 2^gamma_scale + sum_j gamma_j r_j
    is a raw vector at ``pool.scale_exp + gamma_scale`` and gamma holds raws at
    ``gamma_scale`` drawn from [-bound, bound].
    """
    if pool.size == 0:
        raise ParameterError("masking pool is empty")
    if gamma is None:
        gamma = random_fixed_vector(pool.size, bound, gamma_scale, rng)
    elif len(gamma) != pool.size:
        raise DimensionError("gamma length does not match the pool")
    shift = 1 << gamma_scale
    x_hat = [int(v) * shift for v in x]
    for g, r in zip(gamma, pool.vectors):
        if g:
            for i, ri in enumerate(r):
                x_hat[i] += g * ri
    pool.consumed += 1
    return x_hat, list(gamma)


def unmask(y_hat, gamma, pool, gamma_scale=DEFAULT_MASK_SCALE):
    """Exact A x from the response to a masked query."""
    if len(gamma) != pool.size:
        raise DimensionError("gamma length does not match the pool")
    y = [int(v) for v in y_hat]
    for g, img in zip(gamma, pool.images):
        if g:
            for i, v in enumerate(img):
                y[i] -= g * v
    shift = 1 << gamma_scale
    out = []
    for v in y:
        q, rem = divmod(v, shift)
        if rem:
            raise ArithmeticError("unmasked response is not a multiple of the mask scale")
        out.append(q)
    return out


class MaskedOperator:
    """Wrap an unmasked raw round so every query leaves the owner blinded.

    ``inner`` must accept vectors at ``vector_scale + gamma_scale``.  Every
    masked query and its secret gamma is appended to ``log``.
    """

    def __init__(self, inner, pool, rng, bound=DEFAULT_MASK_BOUND, gamma_scale=DEFAULT_MASK_SCALE):
        self.inner = inner
        self.pool = pool
        self.rng = rng
        self.bound = bound
        self.gamma_scale = gamma_scale
        self.dim = inner.dim
        self.weight_scale = inner.weight_scale
        self.vector_scale = pool.scale_exp
        self.log = []

    def mvm_batch(self, xs):
        masked = [mask_vector(x, self.pool, self.rng, self.bound, self.gamma_scale) for x in xs]
        ys = self.inner.mvm_batch([xh for xh, _ in masked])
        out = []
        for x, (xh, g), yh in zip(xs, masked, ys):
            y = unmask(yh, g, self.pool, self.gamma_scale)
            self.log.append({"x": list(x), "x_hat": xh, "gamma": g, "y": y})
            out.append(y)
        return out


# -- convergence --------------------------------------------------------------


def check_convergence(history, tol, max_iter=None):
    """Tri-state test on a sequence of eigenvalue estimates.

    Entries may be bare estimates or (estimate, residual) pairs.
    """
    vals = [h[0] if isinstance(h, (tuple, list)) else h for h in history]
    if len(vals) >= 2:
        cur, prev = float(vals[-1]), float(vals[-2])
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return CONVERGED
    if max_iter is not None and len(vals) >= max_iter:
        return FAILED
    return CONTINUE


# -- sessions -----------------------------------------------------------------


@dataclass
class SessionState:
    graph_id: str
    method: str
    k: int
    tol: float = 1e-6
    max_iter: int = 500
    history: list = field(default_factory=list)
    found: list = field(default_factory=list)
    iterations: int = 0
    mvm_rounds: int = 0
    restarts: int = 0
    converged: bool = False
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.method not in ("power", "lanczos"):
            raise ParameterError(f"unknown method {self.method!r}")
        if self.k < 1:
            raise ParameterError("k must be positive")
        if not self.tol > 0:
            raise ParameterError("tolerance must be positive")

    @property
    def eigenvalues(self):
        return [lam for lam, _ in self.found]

    def report(self, backend, wall_time_ms):
        return {
            "graph_id": self.graph_id,
            "method": self.method,
            "k": self.k,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "iterations": self.iterations,
            "mvm_rounds": self.mvm_rounds,
            "wall_time_ms": float(wall_time_ms),
            "backend": backend,
            "converged": self.converged,
        }


def report_json(report):
    return json.dumps(report, indent=2, sort_keys=False)


def _query(session, operator, block):
    """One cloud round on the columns of ``block``; returns (Xd, Y) as floats."""
    vs = operator.vector_scale
    raws = [quantize_vector(block[:, j], vs) for j in range(block.shape[1])]
    ys = operator.mvm_batch(raws)
    session.mvm_rounds += 1
    session.trace.append(raws)
    out_scale = operator.weight_scale + vs
    xd = np.array([dequantize_vector(r, vs) for r in raws]).T
    y = np.array([[int(v) * 2.0**-out_scale for v in col] for col in ys]).T
    return xd, y


def _project_out(x, basis):
    for _ in range(2):
        for v in basis:
            x = x - np.outer(v, v @ x) if x.ndim == 2 else x - v * (v @ x)
    return x


def _orthonormal_columns(x, locked, rng):
    x = _project_out(x, locked)
    q, r = np.linalg.qr(x)
    scale = max(1.0, float(np.max(np.abs(np.diag(r))))) if r.size else 1.0
    for j in range(q.shape[1]):
        if abs(r[j, j]) < BREAKDOWN * scale:
            # rank lost: replace the column with a fresh direction
            v = _project_out(rng.standard_normal(x.shape[0]), list(locked) + [q[:, i] for i in range(j)])
            q[:, j] = v / np.linalg.norm(v)
    return q


def power_topk(session, operator, rng, block=None):
    """Top-k eigenpairs by |lambda| using blocked power iteration.

    A block of ``min(dim, 2k)`` vectors is multiplied each round and reduced
    by Rayleigh-Ritz on the quantized vectors actually sent.  The leading
    Ritz pair locks once its value satisfies ``check_convergence``; locked
    pairs are deflated owner-side from later images and dropped from the
    block.  Returns ``session.found``.
    """
    dim = operator.dim
    k = session.k
    if k > dim:
        raise DimensionError(f"k={k} exceeds dimension {dim}")
    p = min(dim, block or 2 * k)
    if p < k:
        raise ParameterError("block smaller than k")
    locked_vals, locked_vecs = [], []
    x = _orthonormal_columns(rng.standard_normal((dim, p)), [], rng)
    prev = None
    while len(locked_vals) < k:
        if session.iterations >= session.max_iter:
            break
        session.iterations += 1
        xd, y = _query(session, operator, x)
        if locked_vals:
            lv = np.array(locked_vecs).T
            y = y - lv @ (np.array(locked_vals)[:, None] * (lv.T @ xd))
        if np.all(np.linalg.norm(y, axis=0) < BREAKDOWN) and session.restarts < MAX_RESTARTS:
            session.restarts += 1
            x = _orthonormal_columns(rng.standard_normal(x.shape), locked_vecs, rng)
            prev = None
            continue
        g = xd.T @ xd
        h = xd.T @ y
        h = (h + h.T) / 2
        linv = np.linalg.inv(np.linalg.cholesky(g))
        theta, w = jacobi_eigh(linv @ h @ linv.T)
        order = order_by_magnitude(list(theta))
        theta = theta[order]
        coeffs = linv.T @ w[:, order]
        ritz = xd @ coeffs
        images = y @ coeffs
        resid = float(np.linalg.norm(images[:, 0] - theta[0] * ritz[:, 0]))
        session.history.append((float(theta[0]), resid))
        n_lock = 0
        if prev is not None:
            while (
                n_lock < len(theta)
                and len(locked_vals) + n_lock < k
                and check_convergence([prev[n_lock], theta[n_lock]], session.tol) == CONVERGED
            ):
                n_lock += 1
        for j in range(n_lock):
            v = _project_out(ritz[:, j], locked_vecs)
            locked_vals.append(float(theta[j]))
            locked_vecs.append(v / np.linalg.norm(v))
        if len(locked_vals) >= k:
            break
        nxt = images[:, n_lock:].copy()
        for j in range(nxt.shape[1]):
            if np.linalg.norm(nxt[:, j]) < BREAKDOWN:
                # image vanished: the Ritz vector spans a null direction already
                nxt[:, j] = ritz[:, n_lock + j]
        keep = min(nxt.shape[1], dim - len(locked_vals))
        x = _orthonormal_columns(nxt[:, :keep], locked_vecs, rng)
        prev = theta[n_lock:n_lock + keep]
    session.converged = len(locked_vals) >= k
    order = order_by_magnitude(locked_vals)
    session.found = [(locked_vals[i], locked_vecs[i]) for i in order]
    return session.found


@dataclass
class TridiagonalFactor:
    alphas: list
    betas: list
    basis: np.ndarray  # dim x s, orthonormal columns
    breakdown: bool = False

    @property
    def steps(self):
        return len(self.alphas)

    def matrix(self):
        s = self.steps
        t = np.diag(self.alphas)
        if s > 1:
            off = np.array(self.betas[: s - 1])
            t += np.diag(off, 1) + np.diag(off, -1)
        return t

    def ritz(self):
        """Ritz values sorted by |value| descending with residual estimates."""
        d, z = tridiag_eigh(self.alphas, self.betas[: self.steps - 1])
        order = order_by_magnitude(list(d))
        last_beta = self.betas[self.steps - 1] if len(self.betas) >= self.steps else 0.0
        resid = [abs(last_beta * z[-1, i]) for i in order]
        return d[order], z[:, order], resid


class _LanczosRun:
    def __init__(self, session, operator, rng):
        self.session = session
        self.op = operator
        q = rng.standard_normal(operator.dim)
        self.q = [q / np.linalg.norm(q)]
        self.alphas = []
        self.betas = []
        self.breakdown = False
        self.scale = 0.0

    def step(self):
        q = self.q[-1]
        _, y = _query(self.session, self.op, q[:, None])
        y = y[:, 0]
        alpha = float(q @ y)
        r = y - alpha * q
        if self.betas:
            r = r - self.betas[-1] * self.q[-2]
        qm = np.array(self.q)
        for _ in range(2):
            r = r - qm.T @ (qm @ r)
        beta = float(np.linalg.norm(r))
        self.alphas.append(alpha)
        self.betas.append(beta)
        self.session.iterations += 1
        self.scale = max(self.scale, abs(alpha), beta)
        # below the quantization floor the residual is rounding noise, not a new direction
        if beta <= max(BREAKDOWN, _noise_floor(self.op, self.scale)):
            self.breakdown = True
        elif len(self.q) < self.op.dim:
            self.q.append(r / beta)

    def restart(self, rng):
        """Continue past an invariant subspace with a fresh orthogonal direction."""
        qm = np.array(self.q)
        v = rng.standard_normal(self.op.dim)
        for _ in range(2):
            v = v - qm.T @ (qm @ v)
        self.q.append(v / np.linalg.norm(v))
        self.betas[-1] = 0.0
        self.breakdown = False
        self.session.restarts += 1

    def factor(self):
        s = len(self.alphas)
        return TridiagonalFactor(list(self.alphas), list(self.betas), np.array(self.q[:s]).T, self.breakdown)


def lanczos_factor(session, operator, steps, rng):
    """Run exactly ``min(steps, dim)`` Lanczos steps (fewer on breakdown)."""
    run = _LanczosRun(session, operator, rng)
    for _ in range(min(steps, operator.dim)):
        run.step()
        if run.breakdown:
            break
    return run.factor()


def _noise_floor(operator, scale):
    """Residual size explained by quantizing the query vector alone."""
    return 8.0 * math.sqrt(operator.dim) * 2.0 ** -operator.vector_scale * scale


def lanczos_topk(session, operator, rng, steps=None):
    """Top-k eigenpairs by |lambda| from a fully reorthogonalized Lanczos run.

    Starts with ``steps`` (default min(4k, dim)) and keeps stepping until the
    k leading Ritz pairs have small residuals, the basis reaches ``dim``, or
    the recurrence breaks down.
    """
    dim = operator.dim
    k = session.k
    if k > dim:
        raise DimensionError(f"k={k} exceeds dimension {dim}")
    s = min(steps or 4 * k, dim)
    if s < k:
        raise ParameterError("Lanczos needs at least k steps")
    run = _LanczosRun(session, operator, rng)
    while True:
        run.step()
        n = len(run.alphas)
        done = run.breakdown or n >= dim or n >= session.max_iter
        if run.breakdown and n < min(k, dim):
            run.restart(rng)
            continue
        if n >= s or done:
            fac = run.factor()
            theta, z, resid = fac.ritz()
            top = min(k, len(theta))
            floor = _noise_floor(operator, run.scale)
            ok = all(resid[i] <= max(session.tol * max(1.0, abs(theta[i])), floor) for i in range(top))
            session.history.append((float(theta[0]), float(resid[0])))
            if (ok and top == k) or done:
                break
    vecs = fac.basis @ z[:, :top]
    session.found = [(float(theta[i]), vecs[:, i] / np.linalg.norm(vecs[:, i])) for i in range(top)]
    session.converged = top == k and (ok or run.breakdown or n >= dim)
    return session.found


def analyze(session, operator, rng, backend, steps=None):
    """Run the session's method and return the JSON-ready report."""
    t0 = time.perf_counter()
    if session.method == "power":
        power_topk(session, operator, rng)
    else:
        lanczos_topk(session, operator, rng, steps=steps)
    return session.report(backend, (time.perf_counter() - t0) * 1000.0)
