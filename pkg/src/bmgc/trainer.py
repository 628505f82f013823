"""The BMGC training loop.

Per run: propagate features once per view, pick the initial dominant view
from the aggregated features, then for each epoch encode every view,
reconstruct, align projections with the dominant view and the feature Gram
matrix, add the self-training clustering term once warm-up is over, and take
one Adam step per batch. Every ``t_recalc`` epochs the dominant view is
re-mined from the current representations.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import seeding
from .clustering import (ClusterResult, clu_loss, kl_divergence, kl_grad, kmeans,
                         soft_assignment, target_distribution, view_centers)
from .errors import ConfigError, NonFiniteGradient
from .losses import LossBreakdown, adv_loss, anf_loss, recon_cosine_loss
from .metrics import gram_discrepancy, mine_dominant_view
from .nn import AdamState, MlpParams, adam_init, adam_step, init_mlp, mlp_backward, mlp_forward
from .propagate import aggregate_views

log = logging.getLogger(__name__)

TERMS = ("rec", "adv", "anf", "clu")


@dataclass
class TrainConfig:
    clusters: int
    epochs: int = 400
    lr: float = 1e-2
    weight_decay: float = 1e-4
    t_recalc: int = 50
    d_r: int = 10
    tau: float = 1.0
    K: int = 3
    alpha: float = 0.3
    seed: int = 0
    batch_size: Optional[int] = None
    clu_warmup_epochs: int = 50
    hidden: int = 256
    normalize_features: bool = False
    dtype: str = "float32"
    final_restarts: int = 20
    terms: tuple = ("rec", "adv", "anf", "clu")

    def validate(self, n=None):
        checks = [
            (self.clusters >= 2, "clusters must be >= 2"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.t_recalc >= 1, "t_recalc must be >= 1"),
            (self.lr > 0, "lr must be positive"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.d_r >= 1 and self.hidden >= 1, "layer widths must be >= 1"),
            (self.tau > 0, "tau must be positive"),
            (self.K >= 1, "K must be >= 1"),
            (0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]"),
            (self.clu_warmup_epochs >= 0, "clu_warmup_epochs must be >= 0"),
            (self.dtype in ("float32", "float64"), "dtype must be float32 or float64"),
            (self.final_restarts >= 1, "final_restarts must be >= 1"),
            (self.batch_size is None or self.batch_size >= 1, "batch_size must be >= 1"),
            (len(self.terms) > 0 and set(self.terms) <= set(TERMS), f"terms must be a subset of {TERMS}"),
        ]
        if n is not None:
            checks.append((self.batch_size is None or self.batch_size <= n, "batch_size must be <= N"))
            checks.append((self.clusters <= n, "clusters must be <= N"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self):
        d = asdict(self)
        d["terms"] = list(self.terms)
        return d


@dataclass
class BMGCModel:
    encoder: MlpParams
    decoder: MlpParams
    projectors: list

    @classmethod
    def init(cls, d_f, d_r, hidden, V, rng, dtype=np.float64):
        enc = init_mlp([d_f, hidden, d_r], rng, dtype=dtype)
        dec = init_mlp([d_r, hidden, d_f], rng, dtype=dtype)
        projs = [init_mlp([d_r, d_r], rng, final_activation="elu", dtype=dtype) for _ in range(V)]
        return cls(enc, dec, projs)

    def arrays(self):
        out = self.encoder.arrays() + self.decoder.arrays()
        for p in self.projectors:
            out += p.arrays()
        return out

    def named_arrays(self):
        names = {}
        for prefix, p in [("encoder", self.encoder), ("decoder", self.decoder)] + [
                (f"projector{v}", q) for v, q in enumerate(self.projectors)]:
            for k, (W, b) in enumerate(zip(p.weights, p.biases)):
                names[f"{prefix}.W{k}"] = W
                names[f"{prefix}.b{k}"] = b
        return names

    def encode(self, X):
        return mlp_forward(self.encoder, X)


@dataclass
class ModelState:
    model: BMGCModel
    optimizer: AdamState
    dominant_view: int = 0
    epoch: int = 0


@dataclass
class Forward:
    Z: list
    Xhat: list
    Zt: list
    enc_cache: list
    dec_cache: list
    proj_cache: list


@dataclass(frozen=True)
class ClusterTargets:
    """Detached quantities for the clustering term (constant within an epoch)."""
    assignment: np.ndarray
    view_centers: list
    concat_centers: np.ndarray


@dataclass
class TrainResult:
    Z: np.ndarray
    clusters: ClusterResult
    history: list
    state: ModelState
    initial_dominant_view: int
    final_discrepancies: list = field(default_factory=list)


def forward(model, X_views):
    Z, Xh, Zt, ec, dc, pc = [], [], [], [], [], []
    for v, Xv in enumerate(X_views):
        z, c1 = mlp_forward(model.encoder, Xv, return_cache=True)
        xh, c2 = mlp_forward(model.decoder, z, return_cache=True)
        zt, c3 = mlp_forward(model.projectors[v], z, return_cache=True)
        Z.append(z), Xh.append(xh), Zt.append(zt)
        ec.append(c1), dc.append(c2), pc.append(c3)
    return Forward(Z, Xh, Zt, ec, dc, pc)


def concat(Z_views):
    return np.concatenate(Z_views, axis=1)


def cluster_targets(Z_views, v_star, C, seed, epoch, restarts=1):
    """Dominant assignment plus per-view and concatenated centers."""
    Z64 = [np.asarray(z, dtype=np.float64) for z in Z_views]
    y_hat = kmeans(Z64[v_star], C, seed=seed, restarts=restarts, stream_key=(epoch,)).assignments
    centers = [view_centers(z, y_hat, C) for z in Z64]
    Zc = concat(Z64)
    cc = kmeans(Zc, C, init=view_centers(Zc, y_hat, C)).centers
    return ClusterTargets(y_hat, centers, cc)


def loss_and_grads(model, fwd, X_views, X, v_star, tau, targets=None, xtx=None, terms=TERMS,
                   discrepancies=None):
    """Loss breakdown and gradients aligned with ``model.arrays()``.

    ``targets`` enables the clustering term; its targets P are computed from
    the current (detached) soft assignments and held fixed.
    """
    V = len(X_views)
    dZ = [np.zeros_like(z) for z in fwd.Z]
    dec_grads = [np.zeros_like(a) for a in model.decoder.arrays()]
    proj_grads = [[np.zeros_like(a) for a in p.arrays()] for p in model.projectors]
    rec = adv = anf = clu = 0.0

    if "rec" in terms:
        for v in range(V):
            val, g = recon_cosine_loss(X_views[v], fwd.Xhat[v], V, return_grad=True)
            rec += val
            gp, gz = mlp_backward(model.decoder, fwd.dec_cache[v], g, need_input_grad=True)
            for acc, x in zip(dec_grads, gp):
                acc += x
            dZ[v] += gz

    if "adv" in terms and V > 1:
        adv, gts = adv_loss(fwd.Zt, v_star, tau, return_grad=True)
        for v in range(V):
            gp, gz = mlp_backward(model.projectors[v], fwd.proj_cache[v], gts[v].astype(fwd.Zt[v].dtype),
                                  need_input_grad=True)
            proj_grads[v] = gp
            dZ[v] += gz

    if "anf" in terms:
        anf, gz = anf_loss(X, fwd.Z, return_grad=True, xtx=xtx, discrepancies=discrepancies)
        for v in range(V):
            dZ[v] += gz[v]

    if "clu" in terms and targets is not None:
        per_view = []
        for v in range(V):
            Q = soft_assignment(fwd.Z[v], targets.view_centers[v])
            P = target_distribution(Q)
            per_view.append((P, Q))
            dZ[v] += (kl_grad(np.asarray(fwd.Z[v], np.float64), targets.view_centers[v], P) / V).astype(dZ[v].dtype)
        Zc = concat([np.asarray(z, np.float64) for z in fwd.Z])
        Qc = soft_assignment(Zc, targets.concat_centers)
        Pc = target_distribution(Qc)
        gc = kl_grad(Zc, targets.concat_centers, Pc)
        d_r = fwd.Z[0].shape[1]
        for v in range(V):
            dZ[v] += gc[:, v * d_r:(v + 1) * d_r].astype(dZ[v].dtype)
        clu = clu_loss(per_view, (Pc, Qc), V)

    enc_grads = [np.zeros_like(a) for a in model.encoder.arrays()]
    for v in range(V):
        gp, _ = mlp_backward(model.encoder, fwd.enc_cache[v], dZ[v])
        for acc, x in zip(enc_grads, gp):
            acc += x
    grads = enc_grads + dec_grads
    for gp in proj_grads:
        grads += gp
    return LossBreakdown(float(rec), float(adv), float(anf), float(clu)), grads


def minibatch_schedule(N, batch_size, seed, epoch):
    """Seeded per-epoch permutation cut into ``ceil(N / B)`` batches."""
    if not 1 <= batch_size <= N:
        raise ConfigError(f"batch_size must lie in [1, {N}], got {batch_size}")
    perm = seeding.stream(seed, seeding.BATCH, epoch).permutation(N)
    return [perm[i:i + batch_size] for i in range(0, N, batch_size)]


def recalc_dominant(state, X, Z_views, xtx=None):
    """Re-mine the dominant view from representations and store it on ``state``."""
    state.dominant_view = mine_dominant_view(X, Z_views, xtx=xtx)
    return state.dominant_view


def prepare_inputs(g, cfg):
    X = np.asarray(g.features, dtype=np.float64)
    if cfg.normalize_features:
        X = X / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-12)
    agg = aggregate_views(g, cfg.K, cfg.alpha, features=X)
    return X, agg


def train(g, cfg, progress=None):
    """Run BMGC on ``g``; returns final representations, clusters and per-epoch history."""
    cfg.validate(g.n)
    dtype = np.dtype(cfg.dtype)
    X64, agg = prepare_inputs(g, cfg)
    xtx = X64.T @ X64
    X_views = [m.astype(dtype) for m in agg.matrices]
    X = X64.astype(dtype)
    V, N = g.num_views, g.n

    v0 = mine_dominant_view(X64, list(agg.matrices), xtx=xtx)
    model = BMGCModel.init(X.shape[1], cfg.d_r, cfg.hidden, V, seeding.stream(cfg.seed, seeding.INIT), dtype)
    state = ModelState(model, adam_init(model.arrays(), cfg.lr, cfg.weight_decay), v0, 0)
    log.info("initial dominant view %d", v0)
    history = []

    for epoch in range(cfg.epochs):
        state.epoch = epoch
        full = cfg.batch_size is None
        fwd = forward(model, X_views) if full else None
        Z_full = fwd.Z if full else [model.encode(x) for x in X_views]
        disc = [gram_discrepancy(X64, z, xtx=xtx) for z in Z_full]
        if epoch > 0 and epoch % cfg.t_recalc == 0:
            state.dominant_view = int(np.argmin(disc))
            log.info("epoch %d: dominant view %d", epoch, state.dominant_view)
        v_star = state.dominant_view
        targets = None
        if "clu" in cfg.terms and epoch >= cfg.clu_warmup_epochs:
            targets = cluster_targets(Z_full, v_star, cfg.clusters, cfg.seed, epoch)

        if full:
            batches = [(fwd, X_views, X, disc)]
        else:
            batches = ((None, [x[r] for x in X_views], X[r], None)
                       for r in minibatch_schedule(N, cfg.batch_size, cfg.seed, epoch))
        sums = np.zeros(4)
        count = 0
        for f, xv, xb, dd in batches:
            if f is None:
                f = forward(model, xv)
            parts, grads = loss_and_grads(model, f, xv, xb, v_star, cfg.tau, targets, terms=cfg.terms,
                                          discrepancies=dd)
            vals = np.array([parts.rec, parts.adv, parts.anf, parts.clu])
            if not np.all(np.isfinite(vals)) or not all(np.all(np.isfinite(gr)) for gr in grads):
                raise NonFiniteGradient(f"non-finite loss or gradient at epoch {epoch}: {parts.as_dict()}",
                                        epoch=epoch, breakdown=parts)
            adam_step(model.arrays(), grads, state.optimizer)
            sums += vals
            count += 1
        mean = LossBreakdown(*(float(x) for x in sums / count))
        row = {"epoch": epoch, **mean.as_dict(), "dominant_view": v_star}
        row.update({f"metric_v{v}": float(d) for v, d in enumerate(disc)})
        history.append(row)
        if progress is not None:
            progress(row, state)

    Z_views = [model.encode(x) for x in X_views]
    Z = concat([np.asarray(z, dtype=np.float64) for z in Z_views])
    final_disc = [gram_discrepancy(X64, z, xtx=xtx) for z in Z_views]
    result = kmeans(Z, cfg.clusters, seed=cfg.seed, restarts=cfg.final_restarts, stream_key=(cfg.epochs,))
    state.epoch = cfg.epochs
    return TrainResult(Z, result, history, state, v0, final_disc)
