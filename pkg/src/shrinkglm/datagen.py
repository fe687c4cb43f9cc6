"""Seeded synthetic data for the corrupted GLM simulations.

Every generator is a pure function of its parameters and a seed.  Streams
are derived from a single 64-bit base seed by hashing (base, label, index)
into a counter-based Philox generator, so parallel trials reproduce
bit-identically regardless of scheduling.
"""

import dataclasses
import hashlib
import math

import numpy as np
from scipy.special import expit

from ._validation import as_finite_matrix, as_finite_vector, check_binary, check_flip_probability
from .glm import Dataset

_MASK64 = (1 << 64) - 1


def _label_word(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(base_seed, *labels):
    """Derive an independent Philox generator for (base_seed, labels...)."""
    entropy = [int(base_seed) & _MASK64] + [_label_word(l) for l in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_generator(seed):
    """Accept either a ready Generator or a base seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(seed)


@dataclasses.dataclass(frozen=True)
class FeatureDist:
    """Marginal law of a feature entry (or scalar noise draw)."""

    kind: str = "gaussian_std"
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian_std", "student_t"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "student_t":
            if self.nu is None or self.nu <= 0:
                raise ValueError(f"student_t requires nu > 0, got {self.nu}")

    @classmethod
    def parse(cls, text):
        """Parse 'gaussian' or 't:NU' (e.g. 't:4.1')."""
        text = text.strip()
        if text == "gaussian":
            return cls("gaussian_std")
        if text.startswith("t:"):
            return cls("student_t", nu=float(text[2:]))
        raise ValueError(f"cannot parse distribution {text!r}; expected 'gaussian' or 't:NU'")

    def label(self):
        if self.kind == "gaussian_std":
            return "gaussian"
        return f"t:{self.nu:g}"

    def sample(self, rng, shape):
        if self.kind == "gaussian_std":
            return rng.standard_normal(shape)
        # Student-t via the Gaussian / chi-square ratio transform.
        z = rng.standard_normal(shape)
        v = rng.chisquare(self.nu, shape)
        return z / np.sqrt(v / self.nu)

    def sd(self):
        """Population standard deviation; infinite for t with nu <= 2."""
        if self.kind == "gaussian_std":
            return 1.0
        if self.nu <= 2:
            return math.inf
        return math.sqrt(self.nu / (self.nu - 2.0))


@dataclasses.dataclass(frozen=True)
class CorruptionSpec:
    """How responses are corrupted: additive noise or label flips."""

    kind: str = "none"
    noise_dist: FeatureDist | None = None
    target_sd: float | None = None
    flip_p: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "additive_noise", "label_flip"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.kind == "additive_noise":
            if self.noise_dist is None or self.target_sd is None:
                raise ValueError("additive_noise requires noise_dist and target_sd")
            if self.target_sd < 0:
                raise ValueError(f"target_sd must be nonnegative, got {self.target_sd}")
            if not math.isfinite(self.noise_dist.sd()):
                raise ValueError(
                    "additive noise law must have finite variance (student_t needs nu > 2)"
                )
        if self.kind == "label_flip":
            check_flip_probability(self.flip_p, "flip_p")


def gen_features(n, d, dist, seed):
    """An n x d matrix of i.i.d. draws from ``dist``."""
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = as_generator(seed)
    return dist.sample(rng, (int(n), int(d)))


def gen_linear(X, beta_star, noise, seed):
    """Linear responses with additive noise rescaled to the target SD."""
    X = as_finite_matrix(X, "X")
    beta_star = as_finite_vector(beta_star, "beta_star")
    if noise.kind != "additive_noise":
        raise ValueError(f"gen_linear requires an additive_noise spec, got {noise.kind!r}")
    rng = as_generator(seed)
    y = X @ beta_star
    eps = noise.noise_dist.sample(rng, X.shape[0]) * (noise.target_sd / noise.noise_dist.sd())
    return Dataset(X=X, z=y + eps, y_clean=y)


def gen_logistic(X, beta_star, seed):
    """Bernoulli responses with success probability sigmoid(x @ beta*)."""
    X = as_finite_matrix(X, "X")
    beta_star = as_finite_vector(beta_star, "beta_star")
    rng = as_generator(seed)
    prob = expit(X @ beta_star)
    y = (rng.random(X.shape[0]) < prob).astype(np.float64)
    return Dataset(X=X, z=y, y_clean=y)


def flip_labels(data, p, seed):
    """Flip each binary label independently with probability p."""
    p = check_flip_probability(p)
    z = check_binary(data.z, "z")
    rng = as_generator(seed)
    mask = rng.random(data.n) < p
    flipped = np.where(mask, 1.0 - z, z)
    y_clean = data.y_clean if data.y_clean is not None else data.z
    return Dataset(X=data.X, z=flipped, y_clean=y_clean, flip_mask=mask)


BETA_PATTERNS = ("five_ones", "half_pm_half", "sparse_pm1", "custom")


def make_beta(d, pattern, values=None):
    """Named coefficient patterns used by the simulation designs."""
    d = int(d)
    if pattern == "five_ones":
        if d < 5:
            raise ValueError(f"five_ones needs d >= 5, got {d}")
        beta = np.zeros(d)
        beta[:5] = 1.0
        return beta
    if pattern == "half_pm_half":
        if d < 2 or d % 2:
            raise ValueError(f"half_pm_half needs even d >= 2, got {d}")
        return np.concatenate([np.full(d // 2, 0.5), np.full(d // 2, -0.5)])
    if pattern == "sparse_pm1":
        if d < 3:
            raise ValueError(f"sparse_pm1 needs d >= 3, got {d}")
        beta = np.zeros(d)
        beta[0] = beta[1] = 1.0
        beta[2] = -1.0
        return beta
    if pattern == "custom":
        beta = as_finite_vector(values, "values")
        if beta.shape[0] != d:
            raise ValueError(f"custom values have length {beta.shape[0]}, expected {d}")
        return beta
    raise ValueError(f"unknown beta pattern {pattern!r}; expected one of {BETA_PATTERNS}")


def save_dataset(path, dataset):
    """Write the dataset as CSV: x1,...,xd,z[,y_clean][,flipped].

    Floats use 17-significant-digit round-trip formatting.
    """
    cols = [dataset.X, dataset.z[:, None]]
    names = [f"x{j + 1}" for j in range(dataset.d)] + ["z"]
    fmts = ["%.17g"] * (dataset.d + 1)
    if dataset.y_clean is not None:
        cols.append(dataset.y_clean[:, None])
        names.append("y_clean")
        fmts.append("%.17g")
    if dataset.flip_mask is not None:
        cols.append(dataset.flip_mask.astype(np.float64)[:, None])
        names.append("flipped")
        fmts.append("%d")
    block = np.hstack(cols)
    np.savetxt(path, block, fmt=",".join(fmts), header=",".join(names), comments="")


def load_dataset(path):
    """Read a dataset CSV written by :func:`save_dataset`."""
    with open(path) as fh:
        header = fh.readline().strip()
        names = header.split(",")
        d = sum(1 for c in names if c.startswith("x"))
        expected = [f"x{j + 1}" for j in range(d)] + ["z"]
        if names[: d + 1] != expected:
            raise ValueError(
                f"bad dataset header in {path}: expected columns {expected[:2]}...,z "
                f"got {names[: d + 1]}"
            )
        extras = names[d + 1 :]
        for c in extras:
            if c not in ("y_clean", "flipped"):
                raise ValueError(f"unknown dataset column {c!r} in {path}")
        try:
            block = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ValueError(f"malformed dataset row in {path}: {exc}") from exc
    if block.shape[1] != len(names):
        raise ValueError(
            f"{path}: rows have {block.shape[1]} fields but header names {len(names)}"
        )
    X = block[:, :d]
    z = block[:, d]
    y_clean = block[:, names.index("y_clean")] if "y_clean" in names else None
    mask = block[:, names.index("flipped")].astype(bool) if "flipped" in names else None
    return Dataset(X=X, z=z, y_clean=y_clean, flip_mask=mask)
