"""Per-part HDP topic models trained with online variational inference.

Every semantic part owns an independent truncated HDP (topics are shared only
among the keypoints of that part).  Global variational parameters of a part
are the topic-word Dirichlets ``lam`` (K x V) and the top-level stick Betas
``(u, v)``; each document gets table sticks ``(a, b)``, table-to-topic
assignments ``zeta`` (T x K) and word-to-table assignments ``psi`` (W x T).

Inference works on batches of documents held as dense ``(D, W)`` count
matrices over the columns actually used by the batch; documents converge
independently and are frozen once their bound stops improving, so a document
gets the same result alone or inside a batch.
"""

from __future__ import annotations

import io
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import digamma, gammaln, log_softmax

from .descriptors import DescriptorConfig, PointDocument, PreparedObject, prepare_object


class ModelError(ValueError):
    pass


@dataclass
class HdpHyperparams:
    gamma: float = 1.0
    alpha0: float = 1.0
    eta: float = 0.01
    K: int = 20
    T: int = 10
    kappa: float = 0.9
    tau0: float = 1.0
    batch_size: int = 16
    # document-level coordinate ascent
    max_iters: int = 100
    tol: float = 1e-3

    def __post_init__(self):
        for name in ("gamma", "alpha0", "eta"):
            if not getattr(self, name) > 0:
                raise ModelError(f"{name} must be positive")
        # T == K is allowed so that the smallest toy instances (K = T = 2) exist
        if self.T < 1 or self.K < 2 or self.T > self.K:
            raise ModelError("need 1 <= T <= K and K >= 2")
        if not 0.5 < self.kappa <= 1.0:
            raise ModelError("kappa must lie in (0.5, 1]")
        if self.tau0 < 0:
            raise ModelError("tau0 must be non-negative")
        if self.batch_size < 1 or self.max_iters < 1:
            raise ModelError("batch_size and max_iters must be positive")


@dataclass
class LocalPartModel:
    part_label: object
    lam: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t_updates: int = 0
    doc_count: int = 0

    @property
    def K(self) -> int:
        return self.lam.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.lam.shape[1]

    def expected_topics(self) -> np.ndarray:
        return self.lam / self.lam.sum(axis=1, keepdims=True)

    def expected_log_topics(self, vocab: Optional[np.ndarray] = None) -> np.ndarray:
        """E[log phi]; with ``vocab`` the topics are renormalized onto that word subset."""
        lam = self.lam if vocab is None else self.lam[:, vocab]
        return digamma(lam) - digamma(lam.sum(axis=1, keepdims=True))

    def expected_log_sticks(self) -> np.ndarray:
        return expected_log_sticks(self.u, self.v)

    def topic_weights(self) -> np.ndarray:
        """E[beta]: expected top-level topic proportions (sums to 1)."""
        m = self.u / (self.u + self.v)
        out = np.ones(self.K)
        out[:-1] = m
        out[1:] *= np.cumprod(1.0 - m)
        return out


@dataclass
class DocumentParams:
    a: np.ndarray
    b: np.ndarray
    zeta: np.ndarray
    psi: np.ndarray


def expected_log_sticks(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """E[log pi_t] for a truncated stick with Beta(a, b) breaks (last stick is 1)."""
    dig = digamma(a + b)
    elog_v = digamma(a) - dig
    elog_1mv = digamma(b) - dig
    shape = a.shape[:-1] + (a.shape[-1] + 1,)
    out = np.zeros(shape)
    out[..., :-1] = elog_v
    out[..., 1:] += np.cumsum(elog_1mv, axis=-1)
    return out


def beta_kl_terms(a, b, prior_a, prior_b):
    """Sum over sticks of E[log Beta(x|prior)] - E[log Beta(x|a,b)] under q = Beta(a, b)."""
    dig = digamma(a + b)
    elog_v = digamma(a) - dig
    elog_1mv = digamma(b) - dig
    log_prior_norm = gammaln(prior_a + prior_b) - gammaln(prior_a) - gammaln(prior_b)
    e_log_p = log_prior_norm + (prior_a - 1) * elog_v + (prior_b - 1) * elog_1mv
    e_log_q = gammaln(a + b) - gammaln(a) - gammaln(b) + (a - 1) * elog_v + (b - 1) * elog_1mv
    return np.sum(e_log_p - e_log_q, axis=-1)


def corpus_bound(model: LocalPartModel, hyper: HdpHyperparams) -> float:
    """E[log p(beta') p(phi)] + H(q(beta')) + H(q(phi)) for one part."""
    sticks = beta_kl_terms(model.u, model.v, 1.0, hyper.gamma)
    lam = model.lam
    V = lam.shape[1]
    elog_phi = model.expected_log_topics()
    eta = hyper.eta
    e_log_p = gammaln(V * eta) - V * gammaln(eta) + (eta - 1) * elog_phi.sum(axis=1)
    e_log_q = gammaln(lam.sum(axis=1)) - gammaln(lam).sum(axis=1) + ((lam - 1) * elog_phi).sum(axis=1)
    return float(sticks + np.sum(e_log_p - e_log_q))


# ---------------------------------------------------------------------------
# document-level inference
# ---------------------------------------------------------------------------


@dataclass
class _BatchState:
    log_zeta: np.ndarray  # (D, T, K)
    log_psi: np.ndarray  # (D, W, T)
    a: np.ndarray  # (D, T-1)
    b: np.ndarray
    elbo: np.ndarray  # (D,), document part only
    sweeps: np.ndarray  # (D,)


def _local_bound(cnt, zeta, log_zeta, psi, log_psi, a, b, elog_phi, elog_beta, alpha0):
    """Document terms of the bound (everything except the 1/|P| corpus share)."""
    wpsi = psi * cnt[..., None]
    zE = zeta @ elog_phi  # (D, T, W)
    term_w = np.einsum("dwt,dtw->d", wpsi, zE)
    term_c = np.sum(zeta * (elog_beta - log_zeta), axis=(1, 2))
    elog_pi = expected_log_sticks(a, b)
    term_z = np.sum(wpsi * (elog_pi[:, None, :] - log_psi), axis=(1, 2))
    term_pi = beta_kl_terms(a, b, 1.0, alpha0)
    return term_w + term_c + term_z + term_pi


def _sweep(cnt, psi, a, b, elog_phi, elog_beta, alpha0):
    """One coordinate-ascent pass: zeta, then psi, then the table sticks."""
    T = psi.shape[2]
    wpsi = psi * cnt[..., None]
    log_zeta = log_softmax(np.matmul(wpsi.transpose(0, 2, 1), elog_phi.T) + elog_beta, axis=2)
    zeta = np.exp(log_zeta)
    elog_pi = expected_log_sticks(a, b)
    log_psi = log_softmax(np.matmul(zeta, elog_phi).transpose(0, 2, 1) + elog_pi[:, None, :], axis=2)
    psi = np.exp(log_psi)
    n_t = np.einsum("dwt,dw->dt", psi, cnt)
    a = 1.0 + n_t[:, : T - 1]
    b = alpha0 + np.cumsum(n_t[:, ::-1], axis=1)[:, ::-1][:, 1:]
    return log_zeta, zeta, log_psi, psi, a, b


def _infer_dense(cnt: np.ndarray, elog_phi: np.ndarray, elog_beta: np.ndarray, hyper: HdpHyperparams,
                 max_iters: int, tol: float, trace: Optional[list] = None) -> _BatchState:
    D, W = cnt.shape
    T, K = hyper.T, elog_phi.shape[0]
    psi = np.full((D, W, T), 1.0 / T)
    a = np.ones((D, T - 1))
    b = np.full((D, T - 1), hyper.alpha0)
    state = _BatchState(
        log_zeta=np.full((D, T, K), -np.log(K)),
        log_psi=np.log(psi),
        a=a, b=b,
        elbo=np.full(D, -np.inf),
        sweeps=np.zeros(D, dtype=np.int64),
    )
    active = np.arange(D)
    for _ in range(max_iters):
        if not len(active):
            break
        c = cnt[active]
        log_zeta, zeta, log_psi, psi_new, a, b = _sweep(
            c, np.exp(state.log_psi[active]), state.a[active], state.b[active], elog_phi, elog_beta, hyper.alpha0)
        elbo = _local_bound(c, zeta, log_zeta, psi_new, log_psi, a, b, elog_phi, elog_beta, hyper.alpha0)
        improvement = elbo - state.elbo[active]
        state.log_zeta[active] = log_zeta
        state.log_psi[active] = log_psi
        state.a[active] = a
        state.b[active] = b
        state.elbo[active] = elbo
        state.sweeps[active] += 1
        if trace is not None:
            trace.append(state.elbo.copy())
        active = active[~(improvement < tol)]
    return state


def _doc_columns(docs: Sequence[PointDocument], vocab_size: int):
    for doc in docs:
        if len(doc.ids) == 0:
            raise ModelError("empty document")
        if doc.ids[-1] >= vocab_size:
            raise ModelError(f"word id {doc.ids[-1]} outside vocabulary of size {vocab_size}")
    cols = np.unique(np.concatenate([doc.ids for doc in docs]))
    cnt = np.zeros((len(docs), len(cols)))
    for i, doc in enumerate(docs):
        cnt[i, np.searchsorted(cols, doc.ids)] = doc.counts
    return cols, cnt


def _dense_columns(counts: np.ndarray):
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts.sum(axis=1) <= 0):
        raise ModelError("empty document")
    cols = np.flatnonzero(counts.sum(axis=0))
    return cols, counts[:, cols]


def _elog_phi_columns(model: LocalPartModel, cols: np.ndarray, vocab: Optional[np.ndarray]):
    if vocab is None:
        return model.expected_log_topics()[:, cols]
    vocab = np.asarray(vocab)
    pos = np.searchsorted(vocab, cols)
    if np.any(pos >= len(vocab)) or np.any(vocab[np.minimum(pos, len(vocab) - 1)] != cols):
        raise ModelError("document words outside the restricted vocabulary")
    return model.expected_log_topics(vocab)[:, pos]


def infer_batch(model: LocalPartModel, hyper: HdpHyperparams, counts: np.ndarray,
                vocab: Optional[np.ndarray] = None, max_iters: Optional[int] = None,
                tol: Optional[float] = None) -> np.ndarray:
    """Converged document bounds (without corpus terms) for dense ``(D, V)`` counts.

    ``vocab`` restricts the model to a sorted subset of word ids, renormalizing
    every topic onto it (used to score spin-only documents).
    """
    if counts.shape[1] != model.vocab_size:
        raise ModelError("count matrix width differs from the model vocabulary")
    cols, cnt = _dense_columns(counts)
    elog_phi = _elog_phi_columns(model, cols, vocab)
    state = _infer_dense(cnt, elog_phi, model.expected_log_sticks(), hyper,
                         max_iters or hyper.max_iters, hyper.tol if tol is None else tol)
    return state.elbo


def _effective_doc_count(model: LocalPartModel) -> int:
    return max(model.doc_count, 1)


def infer_document(model: LocalPartModel, hyper: HdpHyperparams, doc: PointDocument,
                   iters: Optional[int] = None, tol: Optional[float] = None,
                   trace: Optional[list] = None) -> tuple[DocumentParams, float]:
    """Coordinate ascent on one document; returns its parameters and full bound.

    ``psi`` rows follow ``doc.ids``.  When ``trace`` is a list, the bound after
    every sweep is appended to it.
    """
    if model.vocab_size != doc.vocab_size:
        raise ModelError("document vocabulary differs from the model vocabulary")
    cols, cnt = _doc_columns([doc], model.vocab_size)
    sweeps = [] if trace is not None else None
    state = _infer_dense(cnt, model.expected_log_topics()[:, cols], model.expected_log_sticks(), hyper,
                         iters or hyper.max_iters, hyper.tol if tol is None else tol, sweeps)
    corpus = corpus_bound(model, hyper) / _effective_doc_count(model)
    if trace is not None:
        trace.extend(float(s[0]) + corpus for s in sweeps)
    params = DocumentParams(state.a[0], state.b[0], np.exp(state.log_zeta[0]), np.exp(state.log_psi[0]))
    return params, float(state.elbo[0]) + corpus


def elbo_document(model: LocalPartModel, hyper: HdpHyperparams, doc: PointDocument,
                  params: DocumentParams, include_corpus: bool = True) -> float:
    """Per-document lower bound for arbitrary (feasible) variational parameters."""
    T = hyper.T
    n_words = len(doc.ids)
    if params.zeta.shape != (T, model.K) or params.psi.shape != (n_words, T):
        raise ModelError("parameter shapes do not match the model and document")
    if params.a.shape != (T - 1,) or params.b.shape != (T - 1,):
        raise ModelError("stick parameters must have length T-1")
    cnt = doc.counts.astype(np.float64)[None, :]
    zeta, psi = params.zeta[None], params.psi[None]
    with np.errstate(divide="ignore"):
        log_zeta, log_psi = np.log(zeta), np.log(psi)
    # 0 * log 0 contributes nothing
    log_zeta = np.where(zeta > 0, log_zeta, 0.0)
    log_psi = np.where(psi > 0, log_psi, 0.0)
    local = _local_bound(cnt, zeta, log_zeta, psi, log_psi, params.a[None], params.b[None],
                         model.expected_log_topics()[:, doc.ids], model.expected_log_sticks(), hyper.alpha0)
    value = float(local[0])
    if include_corpus:
        value += corpus_bound(model, hyper) / _effective_doc_count(model)
    return value


# ---------------------------------------------------------------------------
# registry and global updates
# ---------------------------------------------------------------------------


@dataclass
class PartRegistry:
    hyper: HdpHyperparams
    vocab_size: int
    models: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.models)

    def labels(self) -> list:
        return list(self.models)


def new_part(registry: PartRegistry, part_label, seed: int = 0) -> LocalPartModel:
    if part_label in registry.models:
        raise ModelError(f"part {part_label!r} is already registered")
    hyper = registry.hyper
    rng = np.random.default_rng(seed)
    lam = hyper.eta + rng.uniform(0.0, 0.01 * hyper.eta, size=(hyper.K, registry.vocab_size))
    model = LocalPartModel(part_label, lam, np.ones(hyper.K - 1), np.full(hyper.K - 1, hyper.gamma))
    registry.models[part_label] = model
    return model


def step_size(hyper: HdpHyperparams, t: int) -> float:
    return float((hyper.tau0 + t) ** (-hyper.kappa))


def update_minibatch(model: LocalPartModel, hyper: HdpHyperparams, docs, new_docs: bool = True) -> float:
    """One stochastic natural-gradient step on a minibatch of this part's documents.

    ``docs`` is a list of :class:`PointDocument` or a dense ``(D, V)`` count
    matrix.  ``new_docs=False`` revisits documents already counted in
    ``doc_count`` (later epochs of offline training).  Returns the mean
    per-document bound under the pre-update parameters.
    """
    if isinstance(docs, np.ndarray):
        if docs.ndim != 2 or len(docs) == 0:
            raise ModelError("empty minibatch")
        if docs.shape[1] != model.vocab_size:
            raise ModelError("count matrix width differs from the model vocabulary")
        cols, cnt = _dense_columns(docs)
    else:
        docs = list(docs)
        if not docs:
            raise ModelError("empty minibatch")
        cols, cnt = _doc_columns(docs, model.vocab_size)
    n = len(cnt)
    if new_docs:
        model.doc_count += n
    corpus = corpus_bound(model, hyper) / _effective_doc_count(model)
    state = _infer_dense(cnt, model.expected_log_topics()[:, cols], model.expected_log_sticks(), hyper,
                         hyper.max_iters, hyper.tol)
    zeta = np.exp(state.log_zeta)
    psi = np.exp(state.log_psi)
    ss_lam = np.einsum("dtk,dwt,dw->kw", zeta, psi, cnt)
    ss_stick = zeta.sum(axis=(0, 1))

    ratio = _effective_doc_count(model) / n
    rho = step_size(hyper, model.t_updates)
    lam_hat = np.full_like(model.lam, hyper.eta)
    lam_hat[:, cols] += ratio * ss_lam
    u_hat = 1.0 + ratio * ss_stick[:-1]
    v_hat = hyper.gamma + ratio * np.cumsum(ss_stick[::-1])[::-1][1:]
    model.lam = (1.0 - rho) * model.lam + rho * lam_hat
    model.u = (1.0 - rho) * model.u + rho * u_hat
    model.v = (1.0 - rho) * model.v + rho * v_hat
    model.t_updates += 1
    return float(np.mean(state.elbo) + corpus)


def train_part(model: LocalPartModel, hyper: HdpHyperparams, counts: np.ndarray,
               rng: Optional[np.random.Generator] = None, new_docs: bool = True) -> list[float]:
    """Shuffle ``counts`` rows and feed them through :func:`update_minibatch`."""
    order = np.arange(len(counts)) if rng is None else rng.permutation(len(counts))
    elbos = []
    for start in range(0, len(order), hyper.batch_size):
        elbos.append(update_minibatch(model, hyper, counts[order[start:start + hyper.batch_size]], new_docs))
    return elbos


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def score_parts(registry: PartRegistry, counts: np.ndarray, vocab: Optional[np.ndarray] = None) -> np.ndarray:
    """Document-only bounds of every document under every part, shape ``(D, P)``."""
    if not registry.models:
        raise ModelError("registry is empty")
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[1] != registry.vocab_size:
        raise ModelError("count matrix width differs from the registry vocabulary")
    return np.stack([infer_batch(m, registry.hyper, counts, vocab) for m in registry.models.values()], axis=1)


def predict_parts(registry: PartRegistry, counts: np.ndarray, vocab: Optional[np.ndarray] = None,
                  allowed: Optional[Iterable] = None) -> list:
    """Best part per document; ties go to the earliest registered part.

    ``allowed`` restricts the competition to a subset of registered parts.
    """
    labels = registry.labels()
    scores = score_parts(registry, counts, vocab)
    if allowed is not None:
        allowed = set(allowed)
        mask = np.array([lab in allowed for lab in labels])
        if not mask.any():
            raise ModelError("none of the allowed parts is registered")
        scores = np.where(mask, scores, -np.inf)
    return [labels[i] for i in np.argmax(scores, axis=1)]


def predict_part(registry: PartRegistry, doc: PointDocument) -> tuple[object, float, dict]:
    if doc.vocab_size != registry.vocab_size:
        raise ModelError("document vocabulary differs from the registry vocabulary")
    scores = score_parts(registry, doc.dense()[None, :])[0]
    labels = registry.labels()
    best = int(np.argmax(scores))
    return labels[best], float(scores[best]), dict(zip(labels, scores.tolist()))


def spin_vocabulary(config: DescriptorConfig) -> np.ndarray:
    return np.arange(config.spin_vocab)


def segment_prepared(registry: PartRegistry, prepared: PreparedObject, spin_vocab: Optional[np.ndarray] = None,
                     allowed: Optional[Iterable] = None) -> list:
    """Labels for the keypoints of an already prepared object.

    Spin-only documents (narrower than the registry vocabulary) are scored
    against the spin block of every model; ``spin_vocab`` lists those ids.
    """
    counts = prepared.counts
    vocab = None
    if counts.shape[1] != registry.vocab_size:
        if spin_vocab is None or counts.shape[1] != len(spin_vocab):
            raise ModelError("document vocabulary does not match the registry")
        full = np.zeros((len(counts), registry.vocab_size))
        full[:, spin_vocab] = counts
        counts, vocab = full, np.asarray(spin_vocab)
    return predict_parts(registry, counts, vocab, allowed)


def segment_object(registry: PartRegistry, cloud, config: DescriptorConfig, allowed=None) -> list:
    """Segment a raw cloud: one predicted part per downsampled keypoint."""
    if not registry.models:
        raise ModelError("registry is empty")
    prepared = prepare_object(cloud, config)
    spin_vocab = spin_vocabulary(config) if config.spin_only else None
    return segment_prepared(registry, prepared, spin_vocab, allowed)


# ---------------------------------------------------------------------------
# offline training over a labelled collection
# ---------------------------------------------------------------------------


def part_documents(prepared: Sequence[PreparedObject]) -> dict:
    """Stack keypoint documents of many objects by ground-truth part."""
    grouped: dict = {}
    for obj in prepared:
        labels = obj.keypoints.part_labels
        if labels is None:
            raise ModelError("training objects need part labels")
        for lab in _ordered_unique(labels):
            grouped.setdefault(lab, []).append(obj.counts[labels == lab])
    return {lab: np.concatenate(blocks) for lab, blocks in grouped.items()}


def _ordered_unique(labels) -> list:
    seen = {}
    for lab in labels.tolist():
        seen.setdefault(lab, None)
    return list(seen)


def train_offline(registry: PartRegistry, prepared: Sequence[PreparedObject], epochs: int = 1,
                  seed: int = 0) -> list[float]:
    """Train one model per annotated part; returns the mean bound of every epoch."""
    grouped = part_documents(prepared)
    for i, lab in enumerate(sorted(grouped, key=str)):
        if lab not in registry.models:
            new_part(registry, lab, seed=seed + i)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        elbos, weights = [], []
        for lab in sorted(grouped, key=str):
            counts = grouped[lab]
            batch = train_part(registry.models[lab], registry.hyper, counts, rng, new_docs=epoch == 0)
            elbos.extend(batch)
            weights.extend(min(registry.hyper.batch_size, len(counts) - s)
                           for s in range(0, len(counts), registry.hyper.batch_size))
        history.append(float(np.average(elbos, weights=weights)))
    return history


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "partseg-checkpoint"
CHECKPOINT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _kv_lines(pairs) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs)


def _parse_kv(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition(" = ")
            out[key.strip()] = value
    return out


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _zip_write(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def checkpoint_bytes(registry: PartRegistry, descriptor: Optional[DescriptorConfig] = None) -> bytes:
    """Serialize a registry to a deterministic zip archive.

    ``manifest.txt`` holds the vocabulary size, hyperparameters, descriptor
    settings and the ordered part directory names; each part directory holds a
    ``meta.txt`` plus ``lambda``/``u``/``v`` as raw little-endian float64.
    """
    manifest = [("format", CHECKPOINT_FORMAT), ("version", CHECKPOINT_VERSION),
                ("vocab_size", registry.vocab_size)]
    manifest += [(f"hyper.{k}", _fmt(v)) for k, v in asdict(registry.hyper).items()]
    if descriptor is not None:
        manifest += [(f"descriptor.{k}", _fmt(v)) for k, v in asdict(descriptor).items()]
    parts = []
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for i, (label, model) in enumerate(registry.models.items()):
            name = f"part{i:04d}"
            parts.append(name)
            meta = [("label", label), ("label_type", "int" if isinstance(label, (int, np.integer)) else "str"),
                    ("K", model.K), ("V", model.vocab_size),
                    ("t_updates", model.t_updates), ("doc_count", model.doc_count)]
            _zip_write(zf, f"{name}/meta.txt", _kv_lines(meta).encode())
            for key in ("lam", "u", "v"):
                arr = np.ascontiguousarray(getattr(model, key), dtype="<f8")
                _zip_write(zf, f"{name}/{key}.f8", arr.tobytes())
        manifest.append(("parts", ",".join(parts)))
        _zip_write(zf, "manifest.txt", _kv_lines(manifest).encode())
    return buf.getvalue()


def save_checkpoint(registry: PartRegistry, path, descriptor: Optional[DescriptorConfig] = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(registry, descriptor))


def _coerce(cls, raw: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name in raw:
            value = raw[f.name]
            if value == "None":
                kwargs[f.name] = None
            elif f.type in ("bool", bool):
                kwargs[f.name] = value == "True"
            elif f.type in ("int", int):
                kwargs[f.name] = int(value)
            else:
                kwargs[f.name] = float(value)
    return cls(**kwargs)


def load_checkpoint(path) -> tuple[PartRegistry, Optional[DescriptorConfig]]:
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise ModelError(f"cannot read checkpoint {path}: {exc}") from exc
    with zf:
        try:
            manifest = _parse_kv(zf.read("manifest.txt").decode())
        except KeyError:
            raise ModelError(f"{path}: missing manifest") from None
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ModelError(f"{path}: not a {CHECKPOINT_FORMAT} archive")
        hyper = _coerce(HdpHyperparams, {k[6:]: v for k, v in manifest.items() if k.startswith("hyper.")})
        desc_raw = {k[11:]: v for k, v in manifest.items() if k.startswith("descriptor.")}
        descriptor = _coerce(DescriptorConfig, desc_raw) if desc_raw else None
        registry = PartRegistry(hyper, int(manifest["vocab_size"]))
        names = [n for n in manifest.get("parts", "").split(",") if n]
        for name in names:
            meta = _parse_kv(zf.read(f"{name}/meta.txt").decode())
            K, V = int(meta["K"]), int(meta["V"])
            arrays = {key: np.frombuffer(zf.read(f"{name}/{key}.f8"), dtype="<f8").astype(np.float64)
                      for key in ("lam", "u", "v")}
            label = int(meta["label"]) if meta["label_type"] == "int" else meta["label"]
            registry.models[label] = LocalPartModel(
                label, arrays["lam"].reshape(K, V), arrays["u"], arrays["v"],
                int(meta["t_updates"]), int(meta["doc_count"]))
    return registry, descriptor
