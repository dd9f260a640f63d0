"""Hyperbolic session model: projection, time-aware attention, future heads.

Layer math follows the tangent-space convention: sums and nonlinearities are
applied after a log map at the origin and the result is mapped back with the
exp map.  Every function here is generic over plain ndarrays (inference) and
tape Nodes (training); see ``grad``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import grad, manifold
from .grad import Arrayish
from .graph import SessionGraph, neighborhood

Item = str


@dataclass
class ModelParams:
    """Learnable state.

    ``item_features`` rows are the per-item input vectors (ball-constrained);
    the attention layers themselves are parameter-free, so depth is just the
    iteration count ``num_layers``.
    """

    items: List[Item]
    item_features: np.ndarray        # (n_items, feat_dim)
    feat_proj: np.ndarray            # (dim, feat_dim) input transform
    att_last_proj: np.ndarray        # (dim, dim) readout: last-item side
    att_item_proj: np.ndarray        # (dim, dim) readout: candidate side
    sess_future_proj: np.ndarray     # (dim, dim) session head
    item_future_proj: np.ndarray     # (dim, dim) item head
    att_vec: np.ndarray              # (dim,) readout scoring vector
    att_bias: np.ndarray             # (dim,) readout bias, ball point
    time_proj: np.ndarray            # (dim,) interval embedding column
    lambda_s: float = 0.1
    lambda_v: float = 0.1
    num_layers: int = 1
    attention_sign: float = 1.0
    leaky_slope: float = 0.2
    neighborhood: str = "in"
    item_index: Dict[Item, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.item_index:
            self.item_index = {it: i for i, it in enumerate(self.items)}
        if self.lambda_s < 0 or self.lambda_v < 0:
            raise ValueError("smoothing coefficients must be nonnegative")
        if not 1 <= self.num_layers <= 3:
            raise ValueError("num_layers must be in 1..3")
        if self.attention_sign not in (1.0, -1.0):
            raise ValueError("attention_sign must be +1 or -1")

    @property
    def dim(self) -> int:
        return self.feat_proj.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.feat_proj.shape[1]

    def item_vec(self, item_id: Item) -> np.ndarray:
        return self.item_features[self.item_index[item_id]]

    def matrix_fields(self) -> List[str]:
        return [
            "feat_proj", "att_last_proj", "att_item_proj",
            "sess_future_proj", "item_future_proj",
            "att_vec", "att_bias", "time_proj",
        ]


class BoundParams:
    """ModelParams view with selected arrays overridden (typically by Nodes).

    Override keys are field names or ``"item:<id>"`` for single table rows.
    """

    def __init__(self, base: ModelParams, overrides: Dict[str, Arrayish]):
        self._base = base
        self._overrides = overrides

    def __getattr__(self, name):
        ov = object.__getattribute__(self, "_overrides")
        if name in ov:
            return ov[name]
        return getattr(object.__getattribute__(self, "_base"), name)

    def item_vec(self, item_id: Item):
        key = "item:" + item_id
        if key in self._overrides:
            return self._overrides[key]
        return self._base.item_vec(item_id)


def init_params(
    items: Sequence[Item],
    dim: int,
    rng: np.random.Generator,
    *,
    categories: Optional[Dict[Item, int]] = None,
    lambda_s: float = 0.1,
    lambda_v: float = 0.1,
    num_layers: int = 1,
    attention_sign: float = 1.0,
    leaky_slope: float = 0.2,
    neighborhood: str = "in",
) -> ModelParams:
    """Seeded initialization.

    With a category map the item features are (shell-clipped) one-hot
    category indicators; otherwise free vectors from U(-0.01, 0.01)^dim.
    Square transforms start at identity plus U(-0.05, 0.05) noise so initial
    embeddings stay distinguishable.
    """
    items = list(items)
    n = len(items)
    if n == 0:
        raise ValueError("empty item vocabulary")

    if categories is not None:
        n_cat = max(categories.values()) + 1
        feats = np.zeros((n, n_cat))
        for i, it in enumerate(items):
            feats[i, categories[it]] = 1.0
        feats = manifold.project_rows_to_ball(feats)
        feat_dim = n_cat
    else:
        feat_dim = dim
        feats = rng.uniform(-0.01, 0.01, size=(n, feat_dim))

    def square(d):
        return np.eye(d) + rng.uniform(-0.05, 0.05, size=(d, d))

    if feat_dim == dim:
        w_in = square(dim)
    else:
        w_in = rng.uniform(-0.05, 0.05, size=(dim, feat_dim))
        for i in range(min(dim, feat_dim)):
            w_in[i, i] += 1.0

    return ModelParams(
        items=items,
        item_features=feats,
        feat_proj=w_in,
        att_last_proj=square(dim),
        att_item_proj=square(dim),
        sess_future_proj=square(dim),
        item_future_proj=square(dim),
        att_vec=rng.uniform(-0.5, 0.5, size=dim),
        att_bias=np.zeros(dim),
        time_proj=rng.uniform(-0.5, 0.5, size=dim),
        lambda_s=lambda_s,
        lambda_v=lambda_v,
        num_layers=num_layers,
        attention_sign=attention_sign,
        leaky_slope=leaky_slope,
        neighborhood=neighborhood,
    )


# ---------------------------------------------------------------------------
# forward components
# ---------------------------------------------------------------------------

def hyperbolic_projection(raw_feature: Arrayish, params) -> Arrayish:
    """Map a raw feature vector into the ball and transform it."""
    return manifold.mobius_matvec(params.feat_proj, manifold.exp_map0(raw_feature))


def time_embedding(t_norm: float, params) -> Arrayish:
    """Embed a normalized interval via the time column: origin at t = 0."""
    if not 0.0 <= t_norm < 1.0:
        raise ValueError(f"normalized interval {t_norm} outside [0, 1)")
    if t_norm == 0.0:
        return np.zeros(params.dim)
    col = grad.reshape(params.time_proj, (params.dim, 1))
    return manifold.mobius_matvec(col, np.array([t_norm]))


def _pair_distance(state, i: int, j: int, cache: Optional[Dict] = None):
    """d(state_i, state_j); the self case is the exact constant 0 (both its
    value and its gradient with respect to the shared point vanish)."""
    if i == j:
        return 0.0
    if cache is None:
        return manifold.distance(state[i], state[j])
    key = (i, j) if i < j else (j, i)
    if key not in cache:
        cache[key] = manifold.distance(state[key[0]], state[key[1]])
    return cache[key]


def attention_coefficients(
    state: Sequence[Arrayish], g: SessionGraph, i: int, params,
    dist_cache: Optional[Dict] = None,
) -> List[Tuple[int, Arrayish]]:
    """Softmax over signed neighbor distances; returns (node index, weight)."""
    neigh = neighborhood(g, i, params.neighborhood)
    scores = [
        grad.mul(params.attention_sign, _pair_distance(state, i, j, dist_cache))
        for j, _ in neigh
    ]
    vals = [float(grad.value_of(s)) for s in scores]
    pivot = scores[int(np.argmax(vals))]
    exps = [grad.exp(grad.sub(s, pivot)) for s in scores]
    total = grad.nsum(exps)
    return [(j, grad.div(e, total)) for (j, _), e in zip(neigh, exps)]


def self_attention_layer(state: Sequence[Arrayish], g: SessionGraph, params) -> List[Arrayish]:
    """One aggregation step: weighted, time-shifted neighbors in tangent space."""
    time_cache: Dict[float, Arrayish] = {}
    dist_cache: Dict = {}

    def timed(interval: float) -> Arrayish:
        if interval not in time_cache:
            time_cache[interval] = time_embedding(interval, params)
        return time_cache[interval]

    out: List[Arrayish] = []
    for i in range(g.n_nodes):
        neigh = neighborhood(g, i, params.neighborhood)
        weights = attention_coefficients(state, g, i, params, dist_cache)
        terms = []
        for (j, interval), (_, w) in zip(neigh, weights):
            joint = state[j] if interval == 0.0 else manifold.mobius_add(state[j], timed(interval))
            terms.append(manifold.log_map0(manifold.mobius_scalar_mul(w, joint)))
        agg = grad.leaky_relu(grad.nsum(terms), params.leaky_slope)
        out.append(manifold.exp_map0(agg))
    return out


def soft_attention_session(state: Sequence[Arrayish], g: SessionGraph, params) -> Arrayish:
    """Session readout keyed on the last item.

    Each item's coefficient is the signed scalar produced by a 1-row Mobius
    matrix-vector product against the activated joint embedding; the
    coefficients are not normalized.
    """
    p = g.last_index
    last_part = manifold.mobius_matvec(params.att_last_proj, state[p])
    row = grad.reshape(params.att_vec, (1, params.dim))
    terms = []
    for q in range(g.n_nodes):
        inner = manifold.mobius_add(
            manifold.mobius_add(
                last_part,
                manifold.mobius_matvec(params.att_item_proj, state[q]),
            ),
            params.att_bias,
        )
        activated = manifold.exp_map0(
            grad.leaky_relu(manifold.log_map0(inner), params.leaky_slope)
        )
        beta = grad.reshape(manifold.mobius_matvec(row, activated), ())
        terms.append(manifold.log_map0(manifold.mobius_scalar_mul(beta, state[q])))
    agg = grad.leaky_relu(grad.nsum(terms), params.leaky_slope)
    return manifold.exp_map0(agg)


def project_session_future(h_s: Arrayish, t_norm: float, params) -> Arrayish:
    """Evolve the session embedding to a future instant.

    Computed in the tangent space at the origin as log(h_s) * (1 + log(h_t)),
    so a zero interval leaves the tangent vector untouched (all-ones factor).
    """
    h_t = time_embedding(t_norm, params)
    scaled = grad.mul(manifold.log_map0(h_s), grad.add(1.0, manifold.log_map0(h_t)))
    return manifold.exp_map0(grad.leaky_relu(scaled, params.leaky_slope))


def project_item_future(h_s_future: Arrayish, h_last: Arrayish, t_norm: float, params) -> Arrayish:
    """Predict the future item embedding from session, last item and interval."""
    h_t = time_embedding(t_norm, params)
    inner = manifold.mobius_add(
        manifold.mobius_add(
            manifold.mobius_matvec(params.sess_future_proj, h_s_future),
            manifold.mobius_matvec(params.item_future_proj, h_last),
        ),
        h_t,
    )
    return manifold.exp_map0(grad.tanh(manifold.log_map0(inner)))


@dataclass
class ForwardResult:
    initial: List[Arrayish]     # per-node embeddings after input projection
    final: List[Arrayish]       # per-node embeddings after the last layer
    session: Arrayish           # readout before future projection
    session_future: Arrayish
    item_future: Arrayish


def forward_session(g: SessionGraph, t_norm: float, params) -> ForwardResult:
    """Full pass for one session graph and query interval."""
    state = [hyperbolic_projection(params.item_vec(it), params) for it in g.nodes]
    initial = list(state)
    for _ in range(params.num_layers):
        state = self_attention_layer(state, g, params)
    h_s = soft_attention_session(state, g, params)
    h_s_fut = project_session_future(h_s, t_norm, params)
    h_v_fut = project_item_future(h_s_fut, state[g.last_index], t_norm, params)
    return ForwardResult(
        initial=initial,
        final=state,
        session=h_s,
        session_future=h_s_fut,
        item_future=h_v_fut,
    )


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

@dataclass
class RankedList:
    """Top-k items by ascending distance, ties broken by ascending item id."""

    entries: List[Tuple[Item, float]]
    k: int


def project_item_table(params: ModelParams) -> np.ndarray:
    """Projected embeddings of the whole catalog, one row per item (numeric)."""
    feats = np.asarray(params.item_features, dtype=np.float64)
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    safe = np.maximum(norms, 1e-300)
    mapped = np.where(norms > 0, np.tanh(norms) / safe * feats, 0.0)
    mapped = manifold.project_rows_to_ball(mapped)

    ma = mapped @ np.asarray(params.feat_proj, dtype=np.float64).T
    m_n = np.linalg.norm(mapped, axis=1, keepdims=True)
    ma_n = np.linalg.norm(ma, axis=1, keepdims=True)
    ok = (m_n > 0) & (ma_n > 0)
    scale = np.where(
        ok,
        np.tanh(ma_n / np.maximum(m_n, 1e-300) * np.arctanh(np.where(ok, m_n, 0.0)))
        / np.maximum(ma_n, 1e-300),
        0.0,
    )
    return manifold.project_rows_to_ball(scale * ma)


def score_items(h_v_future: Arrayish, params: ModelParams, k: int) -> RankedList:
    """Rank the catalog by distance to the predicted item embedding."""
    if isinstance(h_v_future, grad.Node):
        h_v_future = h_v_future.value
    n = len(params.items)
    if n == 0:
        raise ValueError("empty item table")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    table = project_item_table(params)
    dists = manifold.distances_to_rows(np.asarray(h_v_future, dtype=np.float64), table)
    order = sorted(range(n), key=lambda r: (dists[r], params.items[r]))
    return RankedList(entries=[(params.items[r], float(dists[r])) for r in order[:k]], k=k)
