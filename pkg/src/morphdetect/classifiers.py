"""Linear SVM, SRKDA and P-CRC scorers, one of each per feature type.

Every score is oriented "higher = more morph-like". Labels are 0 for bona
fide and 1 for morph.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .features import FEATURE_TYPES

BONA_FIDE = 0
MORPH = 1
CLASSIFIER_KINDS = ("SVM", "SRKDA", "PCRC")

DEFAULT_HYPERPARAMS = {
    "svm_c": 1.0,
    "svm_gap_tol": 1e-6,
    "srkda_sigma": "median",
    "srkda_delta": 0.01,
    "pcrc_lambda": 0.01,
    "pcrc_bias": 1.0,
}

_CHUNK = 32


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


def standardize_fit(vectors):
    """Per-dimension mean and population std; zero-variance dims get scale 1."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise TrainingError("standardize_fit needs a nonempty 2-D matrix")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[~(scale > 0)] = 1.0
    return Standardization(mean, scale)


def standardize_apply(st: Standardization, vector):
    return st.apply(vector)


@dataclass(frozen=True)
class TrainingSet:
    """Standardised training rows of one feature type plus their labels."""

    x: np.ndarray  # standardised, (n, d)
    labels: np.ndarray  # (n,) of 0/1
    standardization: Standardization
    feature_type: str = ""

    @classmethod
    def build(cls, vectors, labels, feature_type=""):
        vectors = np.asarray(vectors, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if vectors.ndim != 2 or vectors.shape[0] != labels.shape[0]:
            raise TrainingError("vectors must be (n, d) with one label per row")
        if not np.isin(labels, (BONA_FIDE, MORPH)).all():
            raise TrainingError("labels must be 0 (bona fide) or 1 (morph)")
        counts = np.bincount(labels, minlength=2)
        if counts.min() < 2:
            raise TrainingError(f"need at least 2 samples per class, got {counts.tolist()}")
        st = standardize_fit(vectors)
        return cls(st.apply(vectors), labels, st, feature_type)


def _rows(x, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(1, -1) if single else x
    if x.shape[1] != d:
        raise ValueError(f"expected vectors of dim {d}, got {x.shape[1]}")
    return x, single


def _chunked(fn, x):
    return np.concatenate([fn(x[i:i + _CHUNK]) for i in range(0, x.shape[0], _CHUNK)])


# ----------------------------------------------------------------------- linear SVM


def _smo(K, y, C, eps, max_iter=1_000_000):
    """Dual coordinate pairs (second-order working set selection). y in {-1, +1}."""
    n = y.size
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(K).copy()
    a = np.zeros(n)
    G = -np.ones(n)
    for _ in range(max_iter):
        up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
        low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
        v = -y * G
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(v[up])])
        m = v[i]
        if m - v[low].min() < eps:
            break
        cand = low & (v < m)
        quad = diag[i] + diag - 2.0 * K[i]
        quad = np.where(quad > 0, quad, 1e-12)
        obj = np.where(cand, -((m - v) ** 2) / quad, np.inf)
        j = int(np.argmin(obj))

        ai, aj = a[i], a[j]
        qd = max(diag[i] + diag[j] - 2.0 * K[i, j], 1e-12)
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / qd
            diff = ai - aj
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j], a[i] = 0.0, diff
            elif a[i] < 0:
                a[i], a[j] = 0.0, -diff
            if diff > 0:
                if a[i] > C:
                    a[i], a[j] = C, C - diff
            elif a[j] > C:
                a[j], a[i] = C, C + diff
        else:
            delta = (G[i] - G[j]) / qd
            s = ai + aj
            a[i] -= delta
            a[j] += delta
            if s > C:
                if a[i] > C:
                    a[i], a[j] = C, s - C
            elif a[j] < 0:
                a[j], a[i] = 0.0, s
            if s > C:
                if a[j] > C:
                    a[j], a[i] = C, s - C
            elif a[i] < 0:
                a[i], a[j] = 0.0, s
        G += Q[:, i] * (a[i] - ai) + Q[:, j] * (a[j] - aj)

    yG = y * G
    free = (a > 0) & (a < C)
    if free.any():
        rho = yG[free].mean()
    else:
        at_ub = a >= C
        ub_mask = (at_ub & (y < 0)) | (~at_ub & (y > 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[~ub_mask].max() if (~ub_mask).any() else -np.inf
        rho = (ub + lb) / 2.0
    return a, rho


def svm_duality_gap(K, y, a, rho, C):
    ay = a * y
    Kay = K @ ay
    f = Kay - rho
    quad = ay @ Kay
    primal = 0.5 * quad + C * np.maximum(0.0, 1.0 - y * f).sum()
    dual = a.sum() - 0.5 * quad
    return primal - dual


@dataclass(frozen=True)
class LinearSVM:
    w: np.ndarray
    b: float
    standardization: Standardization
    feature_type: str = ""
    metadata: dict = field(default_factory=dict)
    kind = "SVM"

    def score(self, x):
        x, single = _rows(x, self.w.size)
        s = _chunked(lambda c: self.standardization.apply(c) @ self.w + self.b, x)
        return float(s[0]) if single else s


def train_linear_svm(ts: TrainingSet, C=DEFAULT_HYPERPARAMS["svm_c"], gap_tol=DEFAULT_HYPERPARAMS["svm_gap_tol"]):
    """Soft-margin linear SVM on the standardised rows, solved in the dual to ``gap_tol``."""
    if np.unique(ts.labels).size < 2:
        raise TrainingError("SVM training needs both classes")
    if C <= 0:
        raise TrainingError("C must be positive")
    y = np.where(ts.labels == MORPH, 1.0, -1.0)
    K = ts.x @ ts.x.T
    eps, gap = 1e-3, np.inf
    while True:
        a, rho = _smo(K, y, C, eps)
        gap = svm_duality_gap(K, y, a, rho, C)
        if gap < gap_tol or eps < 1e-13:
            break
        eps /= 10.0
    if not gap < gap_tol:
        raise TrainingError(f"SVM did not reach duality gap {gap_tol} (gap {gap:.3g})")
    w = (a * y) @ ts.x
    meta = {"C": float(C), "duality_gap": float(gap), "n_support": int(np.count_nonzero(a > 0))}
    return LinearSVM(w, float(-rho), ts.standardization, ts.feature_type, meta)


def svm_score(model: LinearSVM, vector):
    return model.score(vector)


# --------------------------------------------------------------------------- SRKDA


def rbf_kernel(a, b, sigma):
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    sq = np.maximum(a2[:, None] + b2[None, :] - 2.0 * (a @ b.T), 0.0)
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_pairwise_distance(x):
    g = x @ x.T
    d = np.diag(g)
    sq = np.maximum(d[:, None] + d[None, :] - 2.0 * g, 0.0)
    iu = np.triu_indices(x.shape[0], k=1)
    med = float(np.median(np.sqrt(sq[iu])))
    return med if med > 0 else 1.0


def spectral_responses(labels):
    """Class indicators Gram-Schmidt orthogonalised against the all-ones vector.

    Returns (n, c-1) orthonormal columns; the ones direction is dropped.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    n = labels.size
    basis = [np.ones(n) / np.sqrt(n)]
    for c in classes:
        v = (labels == c).astype(np.float64)
        for q in basis:
            v = v - (q @ v) * q
        norm = np.linalg.norm(v)
        if norm > 1e-10:
            basis.append(v / norm)
    return np.column_stack(basis[1:])


@dataclass(frozen=True)
class SRKDA:
    x_train: np.ndarray
    alpha: np.ndarray
    sigma: float
    midpoint: float
    orientation: float
    class_means: np.ndarray  # projected (bona fide, morph), before orientation
    standardization: Standardization
    feature_type: str = ""
    metadata: dict = field(default_factory=dict)
    kind = "SRKDA"

    def project(self, x_std):
        return rbf_kernel(x_std, self.x_train, self.sigma) @ self.alpha

    def score(self, x):
        x, single = _rows(x, self.x_train.shape[1])
        s = _chunked(lambda c: self.orientation * (self.project(self.standardization.apply(c)) - self.midpoint), x)
        return float(s[0]) if single else s


def train_srkda(ts: TrainingSet, sigma=DEFAULT_HYPERPARAMS["srkda_sigma"], delta=DEFAULT_HYPERPARAMS["srkda_delta"]):
    """Kernel discriminant analysis via spectral regression with an RBF kernel."""
    if np.unique(ts.labels).size < 2:
        raise TrainingError("SRKDA training needs both classes")
    if not delta > 0:
        raise TrainingError("SRKDA ridge delta must be > 0")
    if sigma == "median":
        sigma = median_pairwise_distance(ts.x)
    sigma = float(sigma)
    K = rbf_kernel(ts.x, ts.x, sigma)
    y = spectral_responses(ts.labels)[:, 0]
    cf = linalg.cho_factor(K + delta * np.eye(K.shape[0]), lower=True)
    alpha = linalg.cho_solve(cf, y)
    proj = K @ alpha
    means = np.array([proj[ts.labels == BONA_FIDE].mean(), proj[ts.labels == MORPH].mean()])
    orientation = 1.0 if means[1] >= means[0] else -1.0
    meta = {"sigma": sigma, "delta": float(delta), "kernel": "rbf"}
    return SRKDA(ts.x, alpha, sigma, float(means.mean()), orientation, means, ts.standardization, ts.feature_type, meta)


def srkda_score(model: SRKDA, vector):
    return model.score(vector)


# ---------------------------------------------------------------------------- P-CRC


@dataclass(frozen=True)
class PCRC:
    """Collaborative representation over the pooled standardised training rows.

    Atoms and probes carry one extra constant coordinate ``bias``, so classes
    are represented by affine rather than linear spans. Standardisation
    centres the data, and two classes lying on opposite sides of the origin
    then span the same linear subspace; the constant coordinate tells them
    apart. ``bias=0`` is the plain linear form.

    ``gram_inv`` is ``(A A^T + lambda I)^-1`` for the row-major augmented
    dictionary A = [X, bias], so the coding vector of a probe p is
    ``gram_inv @ (A @ [p, bias])``.
    """

    x_train: np.ndarray
    labels: np.ndarray
    gram_inv: np.ndarray
    lam: float
    standardization: Standardization
    feature_type: str = ""
    metadata: dict = field(default_factory=dict)
    bias: float = 0.0
    kind = "PCRC"

    def code(self, p_std):
        return (p_std @ self.x_train.T + self.bias**2) @ self.gram_inv.T

    def residuals(self, p_std):
        """(m, 2) residual norms for the bona fide and morph sub-dictionaries."""
        coef = self.code(p_std)
        out = np.empty((p_std.shape[0], 2))
        for c in (BONA_FIDE, MORPH):
            sel = self.labels == c
            recon = coef[:, sel] @ self.x_train[sel]
            extra = self.bias * (1.0 - coef[:, sel].sum(axis=1))
            out[:, c] = np.sqrt(np.sum((p_std - recon) ** 2, axis=1) + extra**2)
        return out

    def score(self, x):
        x, single = _rows(x, self.x_train.shape[1])

        def _s(c):
            r = self.residuals(self.standardization.apply(c))
            return r[:, BONA_FIDE] - r[:, MORPH]

        s = _chunked(_s, x)
        return float(s[0]) if single else s


def train_pcrc(ts: TrainingSet, lam=DEFAULT_HYPERPARAMS["pcrc_lambda"], bias=DEFAULT_HYPERPARAMS["pcrc_bias"]):
    if np.unique(ts.labels).size < 2:
        raise TrainingError("P-CRC training needs both classes")
    if not lam > 0:
        raise TrainingError("P-CRC lambda must be > 0")
    if not bias >= 0:
        raise TrainingError("P-CRC bias must be >= 0")
    n = ts.x.shape[0]
    cf = linalg.cho_factor(ts.x @ ts.x.T + bias**2 + lam * np.eye(n), lower=True)
    gram_inv = np.ascontiguousarray(linalg.cho_solve(cf, np.eye(n)))  # same layout as a reloaded bundle
    return PCRC(ts.x, ts.labels.copy(), gram_inv, float(lam), ts.standardization, ts.feature_type,
                {"lambda": float(lam), "bias": float(bias)}, float(bias))


def pcrc_score(model: PCRC, vector):
    return model.score(vector)


# --------------------------------------------------------------------- score grid


def train_models(feature_matrices, labels, hyper=None):
    """Train all nine (feature type, classifier) models.

    ``feature_matrices`` maps feature type to an (n, d) raw matrix.
    """
    hp = {**DEFAULT_HYPERPARAMS, **(hyper or {})}
    models = {}
    for ft in FEATURE_TYPES:
        ts = TrainingSet.build(feature_matrices[ft], labels, ft)
        models[(ft, "SVM")] = train_linear_svm(ts, hp["svm_c"], hp["svm_gap_tol"])
        models[(ft, "SRKDA")] = train_srkda(ts, hp["srkda_sigma"], hp["srkda_delta"])
        models[(ft, "PCRC")] = train_pcrc(ts, hp["pcrc_lambda"], hp["pcrc_bias"])
    return models


def _check_models(models):
    missing = [(f, k) for f in FEATURE_TYPES for k in CLASSIFIER_KINDS if (f, k) not in models]
    if missing:
        raise KeyError(f"missing trained models: {missing}")


def score_probe(models, fs):
    """3x3 grid [feature type, classifier] for one FeatureSet."""
    _check_models(models)
    grid = np.empty((len(FEATURE_TYPES), len(CLASSIFIER_KINDS)))
    for fi, ft in enumerate(FEATURE_TYPES):
        for ci, kind in enumerate(CLASSIFIER_KINDS):
            grid[fi, ci] = models[(ft, kind)].score(fs[ft])
    return grid


def score_matrix(models, feature_matrices):
    """(m, 3, 3) score grids for m probes given per-feature-type raw matrices."""
    _check_models(models)
    m = next(iter(feature_matrices.values())).shape[0]
    out = np.empty((m, len(FEATURE_TYPES), len(CLASSIFIER_KINDS)))
    for fi, ft in enumerate(FEATURE_TYPES):
        for ci, kind in enumerate(CLASSIFIER_KINDS):
            out[:, fi, ci] = models[(ft, kind)].score(feature_matrices[ft])
    return out
