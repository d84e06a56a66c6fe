"""LIBSVM datasets, dataset statistics, synthetic stand-ins and the reference-solution cache."""

import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError
from .objective import LogisticObjective, gram_lambda_max, logistic_constants, max_row_norm

log = logging.getLogger(__name__)

CACHE_ENV = "ADABFGS_CACHE_DIR"
DATA_ENV = "ADABFGS_DATA_DIR"
CACHE_MAGIC = "adabfgs-refsol"
CACHE_VERSION = 1

_LABELS = {"+1": 1.0, "1": 1.0, "-1": -1.0, "0": -1.0, "2": -1.0}


@dataclass(frozen=True)
class SparseDataset:
    """Binary classification data: an m-by-n CSR feature matrix and +-1 labels."""

    features: sp.csr_matrix
    labels: np.ndarray
    name: str = ""

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    def rows(self):
        X = self.features
        for i in range(self.m):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            yield list(zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist()))

    def objective(self, constants=None):
        return LogisticObjective(self.features, self.labels, constants)

    def content_hash(self, params=None):
        """SHA-256 over the numeric content and any extra parameters."""
        X = self.features
        h = hashlib.sha256()
        h.update(np.asarray(X.shape, dtype=np.int64).tobytes())
        for arr, dtype in ((X.indptr, np.int64), (X.indices, np.int64),
                           (X.data, np.float64), (self.labels, np.float64)):
            h.update(np.ascontiguousarray(arr, dtype=dtype).tobytes())
        h.update(json.dumps(params or {}, sort_keys=True).encode())
        return h.hexdigest()


def _label(token, lineno):
    try:
        return _LABELS[token]
    except KeyError:
        try:
            value = float(token)
        except ValueError:
            raise ParseError(f"malformed label {token!r}", lineno) from None
        for key, mapped in _LABELS.items():
            if float(key) == value:
                return mapped
        raise ParseError(f"unsupported label {token!r}", lineno) from None


def parse_libsvm(stream, n=None, name=""):
    """Parse LIBSVM text (``label idx:val ...`` with 1-based indices).

    ``stream`` may be a file object or a string. Labels +1/1 become +1 and
    -1/0/2 become -1. ``n`` overrides the feature count inferred from the
    largest index.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels, indptr, indices, data = [], [0], [], []
    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_label(tokens[0], lineno))
        row = []
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed feature token {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"malformed feature token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"feature index {idx} is not 1-based", lineno)
            row.append((idx - 1, val))
        row.sort()
        for (idx, _), (nxt, _) in zip(row, row[1:]):
            if idx == nxt:
                raise ParseError(f"duplicate feature index {idx + 1}", lineno)
        for idx, val in row:
            indices.append(idx)
            data.append(val)
        indptr.append(len(indices))
    if not labels:
        raise ValueError("no samples found")
    n_seen = max(indices) + 1 if indices else 0
    if n is None:
        n = n_seen
    elif n < n_seen:
        raise ValueError(f"n = {n} is smaller than the largest feature index {n_seen}")
    X = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=np.int64),
                       np.array(indptr, dtype=np.int64)), shape=(len(labels), n))
    return SparseDataset(X, np.array(labels), name)


def load_libsvm(path, n=None):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, n=n, name=path.stem)


def write_libsvm(ds, stream):
    """Write ``ds`` in LIBSVM format with full-precision values."""
    for label, row in zip(ds.labels, ds.rows()):
        feats = " ".join(f"{i + 1}:{v!r}" for i, v in row)
        stream.write(f"{int(label):+d} {feats}".rstrip() + "\n")


def dataset_stats(ds):
    """Largest row norm and the largest eigenvalue of the Gram matrix."""
    res = gram_lambda_max(ds.features)
    return max_row_norm(ds.features), res.value, res.converged


def dataset_constants(ds):
    """Logistic constants built from :func:`dataset_stats`."""
    _, lam, converged = dataset_stats(ds)
    return replace(logistic_constants(ds.features, lambda_max=lam), power_converged=converged)


def find_dataset(name, data_dir=None):
    """Locate ``name`` (e.g. "mushrooms") in ``data_dir`` or $ADABFGS_DATA_DIR."""
    base = data_dir or os.environ.get(DATA_ENV)
    if not base:
        return None
    for candidate in (name, f"{name}.txt", f"{name}.libsvm", f"{name}.svm"):
        p = Path(base) / candidate
        if p.is_file():
            return p
    return None


# Synthetic stand-ins with the shape of the public benchmark sets.

def make_onehot_dataset(m=8124, cardinalities=None, seed=0, name="onehot"):
    """Categorical records one-hot encoded, labels drawn from a planted logistic model."""
    rng = np.random.default_rng(seed)
    if cardinalities is None:
        cardinalities = [6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 2]
    offsets = np.concatenate(([0], np.cumsum(cardinalities)))
    n = int(offsets[-1])
    cols = np.empty((m, len(cardinalities)), dtype=np.int64)
    for j, card in enumerate(cardinalities):
        probs = rng.dirichlet(np.ones(card))
        cols[:, j] = offsets[j] + rng.choice(card, size=m, p=probs)
    X = sp.csr_matrix((np.ones(cols.size), cols.ravel(),
                       np.arange(0, cols.size + 1, len(cardinalities))), shape=(m, n))
    w = rng.normal(scale=2.0, size=n)
    margin = X @ w
    margin -= np.median(margin)
    labels = np.where(rng.random(m) < 1.0 / (1.0 + np.exp(-margin)), 1.0, -1.0)
    X.sort_indices()
    return SparseDataset(X, labels, name)


def make_sparse_binary_dataset(m=49749, n=300, mean_nnz=11.7, positive_rate=0.03, seed=0,
                               name="sparse-binary"):
    """Sparse 0/1 features with a skewed feature popularity and rare positives."""
    rng = np.random.default_rng(seed)
    popularity = rng.pareto(1.2, size=n) + 0.05
    popularity /= popularity.sum()
    counts = np.clip(rng.poisson(mean_nnz, size=m), 1, n)
    indptr = np.concatenate(([0], np.cumsum(counts)))
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i in range(m):
        indices[indptr[i]:indptr[i + 1]] = np.sort(
            rng.choice(n, size=counts[i], replace=False, p=popularity))
    X = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(m, n))
    w = rng.normal(scale=1.5, size=n)
    margin = X @ w
    margin += np.log(positive_rate) - np.quantile(margin, 1.0 - positive_rate)
    labels = np.where(rng.random(m) < 1.0 / (1.0 + np.exp(-margin)), 1.0, -1.0)
    return SparseDataset(X, labels, name)


# Reference-solution cache.
#
# Text file, one item per line:
#   adabfgs-refsol <version>
#   hash <sha256 of dataset content and parameters>
#   n <dimension>
#   f_star <float>
#   <x_star[0]>
#   ...
#   <x_star[n-1]>
# Floats use Python's shortest round-trip repr, so values reload bit-exactly.

def cache_dir(path=None):
    base = path or os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "adabfgs"
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    return base


def write_refsol(path, key, x_star, f_star):
    lines = [f"{CACHE_MAGIC} {CACHE_VERSION}", f"hash {key}", f"n {len(x_star)}",
             f"f_star {float(f_star)!r}"]
    lines += [repr(float(v)) for v in x_star]
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_refsol(path, key):
    """Return (x_star, f_star) or raise ValueError if the file is unusable."""
    lines = Path(path).read_text().splitlines()
    if len(lines) < 4:
        raise ValueError("truncated header")
    magic, _, version = lines[0].partition(" ")
    if magic != CACHE_MAGIC or version != str(CACHE_VERSION):
        raise ValueError(f"unknown cache format {lines[0]!r}")
    if lines[1] != f"hash {key}":
        raise ValueError("content hash mismatch")
    tag, _, n = lines[2].partition(" ")
    tag2, _, f_star = lines[3].partition(" ")
    if tag != "n" or tag2 != "f_star":
        raise ValueError("malformed header")
    n = int(n)
    payload = lines[4:]
    if len(payload) != n:
        raise ValueError(f"expected {n} entries, found {len(payload)}")
    x = np.array([float(v) for v in payload])
    f_star = float(f_star)
    if not (np.all(np.isfinite(x)) and np.isfinite(f_star)):
        raise ValueError("non-finite payload")
    return x, f_star


def cached_reference(name, key, solve, directory=None):
    """Load the cached reference solution for ``key`` or compute it with ``solve()``.

    ``solve`` returns (x_star, f_star). Returns (x_star, f_star, loaded) where
    ``loaded`` tells whether the cache was used.
    """
    path = cache_dir(directory) / f"{name or 'objective'}-{key[:16]}.refsol"
    if path.exists():
        try:
            x, f = read_refsol(path, key)
            return x, f, True
        except (ValueError, OSError) as err:
            log.warning("reference cache %s unusable (%s); recomputing", path, err)
    x, f = solve()
    write_refsol(path, key, x, f)
    return x, f, False


def array_hash(*arrays, params=None):
    """SHA-256 over dense arrays and parameters, for objectives without a dataset."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(np.asarray(a.shape, dtype=np.int64).tobytes())
        h.update(a.tobytes())
    h.update(json.dumps(params or {}, sort_keys=True).encode())
    return h.hexdigest()
