"""Parameterised formulas with a hand-written reverse pass.

A ``LearnableFormula`` fixes the operator tree of a skeleton and exposes its
numeric slots as one flat vector ``theta``:

* every atom contributes ``d`` coefficients and one offset, expressed on
  standardised states ``z = (x - shift) / scale``;
* with ``relaxed=True`` every temporal node contributes two continuous window
  endpoints, stored as fractions of the node's window length ``W`` so that one
  learning rate suits both kinds of slot. The node aggregates over all offsets ``0..W`` with soft window
  weights ``w = sigmoid(kappa (tau - t1)) * sigmoid(kappa (t2 - tau))``:
  Eventually computes ``softmax_beta(v + log w)`` and Always computes
  ``softmin_beta(v - log w)``.

``materialize`` maps theta back to an ordinary ``Formula`` in raw state units
with integer windows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, log_expit

from ..errors import HorizonError, ShapeError
from ..stl.formula import Always, And, Atom, Eventually, Formula, Not, Or, Predicate, horizon
from ..stl.syntax import format_formula, parse

Backward = Callable[[np.ndarray], None]


@dataclass
class _Node:
    kind: str  # atom | not | and | or | F | G
    children: list["_Node"] = field(default_factory=list)
    a: slice | None = None
    b: int | None = None
    t1: float = 0
    t2: float = 0
    t_idx: tuple[int, int] | None = None
    window: int = 0


def _temporal_depth(f: Formula) -> int:
    if isinstance(f, Atom):
        return 0
    if isinstance(f, Not):
        return _temporal_depth(f.child)
    if isinstance(f, (And, Or)):
        return max(_temporal_depth(c) for c in f.children)
    return 1 + _temporal_depth(f.child)


def _lse(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """log-sum-exp along ``axis`` and the matching softmax probabilities."""
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = np.sum(e, axis=axis, keepdims=True)
    return np.squeeze(np.log(s) + m, axis=axis), e / s


class LearnableFormula:
    def __init__(self, skeleton: Formula, T: int, d: int, relaxed: bool = True,
                 shift=None, scale=None, kappa: float = 2.0):
        self.skeleton = skeleton
        self.T = int(T)
        self.d = int(d)
        self.relaxed = bool(relaxed)
        self.kappa = float(kappa)
        self.shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float).copy()
        self.scale = np.ones(d) if scale is None else np.asarray(scale, dtype=float).copy()
        if self.shift.shape != (d,) or self.scale.shape != (d,) or np.any(self.scale <= 0):
            raise ShapeError("shift/scale must be length-d vectors with positive scale")
        if not relaxed and horizon(skeleton) > T:
            raise HorizonError(f"skeleton horizon {horizon(skeleton)} exceeds T={T}")
        self._init: list[float] = []
        self.root = self._compile(skeleton, self.T)
        self.theta_init = np.array(self._init)
        self.n_params = self.theta_init.size
        del self._init

    # ----------------------------------------------------------- construction

    def _slot(self, value: float) -> int:
        self._init.append(float(value))
        return len(self._init) - 1

    def _compile(self, f: Formula, budget: int) -> _Node:
        if isinstance(f, Atom):
            a = np.zeros(self.d)
            pa = np.asarray(f.predicate.a)
            if pa.size > self.d:
                raise ShapeError(f"predicate uses x{pa.size - 1} but d={self.d}")
            a[: pa.size] = pa
            a_std = a * self.scale
            start = len(self._init)
            for v in a_std:
                self._slot(v)
            b_std = f.predicate.b - float(a @ self.shift)
            return _Node("atom", a=slice(start, start + self.d), b=self._slot(b_std))
        if isinstance(f, Not):
            return _Node("not", [self._compile(f.child, budget)])
        if isinstance(f, (And, Or)):
            kind = "and" if isinstance(f, And) else "or"
            return _Node(kind, [self._compile(c, budget) for c in f.children])
        kind = "F" if isinstance(f, Eventually) else "G"
        if not self.relaxed:
            node = _Node(kind, t1=f.t1, t2=f.t2, window=f.t2)
            node.children = [self._compile(f.child, budget - f.t2)]
            return node
        window = budget // _temporal_depth(f)
        if window < 0:
            raise HorizonError("not enough horizon for the temporal nesting of the skeleton")
        t1 = float(min(f.t1, window))
        t2 = float(min(max(f.t2, t1), window))
        node = _Node(kind, window=window)
        unit = max(window, 1)
        node.t_idx = (self._slot(t1 / unit), self._slot(t2 / unit))
        node.children = [self._compile(f.child, budget - window)]
        return node

    # ---------------------------------------------------------------- helpers

    def standardize(self, states) -> np.ndarray:
        X = np.asarray(getattr(states, "states", states), dtype=float)
        if X.ndim == 2:
            X = X[None]
        if X.shape[1] != self.T + 1 or X.shape[2] != self.d:
            raise ShapeError(
                f"expected trajectories with T={self.T}, d={self.d}; got T={X.shape[1] - 1}, "
                f"d={X.shape[2]}"
            )
        return (X - self.shift) / self.scale

    def random_theta(self, rng: np.random.Generator, Z: np.ndarray) -> np.ndarray:
        """Seeded initialisation: random unit directions, offsets at the median
        projection of the (standardised) data, random windows."""
        theta = self.theta_init.copy()
        flat = Z.reshape(-1, self.d)

        def visit(node: _Node):
            if node.kind == "atom":
                a = rng.standard_normal(self.d)
                a /= np.linalg.norm(a)
                theta[node.a] = a
                theta[node.b] = float(np.median(flat @ a))
            elif node.t_idx is not None:
                lo, hi = np.sort(rng.uniform(0, 1, 2))
                theta[node.t_idx[0]], theta[node.t_idx[1]] = lo, hi
            for c in node.children:
                visit(c)

        visit(self.root)
        return theta

    def project(self, theta) -> np.ndarray:
        """Clamp window endpoints into ``[0, W]`` with ``t1 <= t2``; crossed
        endpoints meet at their midpoint."""
        theta = np.array(theta, dtype=float)

        def visit(node):
            if node.t_idx is not None:
                i, j = node.t_idx
                lo, hi = np.clip(theta[i], 0.0, 1.0), np.clip(theta[j], 0.0, 1.0)
                if lo > hi:
                    lo = hi = 0.5 * (lo + hi)
                theta[i], theta[j] = lo, hi
            for c in node.children:
                visit(c)

        visit(self.root)
        return theta

    def windows(self, theta) -> list[tuple[float, float]]:
        out = []

        def visit(node):
            if node.t_idx is not None:
                unit = max(node.window, 1)
                out.append((unit * float(theta[node.t_idx[0]]), unit * float(theta[node.t_idx[1]])))
            for c in node.children:
                visit(c)

        visit(self.root)
        return out

    # ---------------------------------------------------------- materialising

    def materialize(self, theta) -> Formula:
        theta = np.asarray(theta, dtype=float)

        def build(node: _Node) -> Formula:
            if node.kind == "atom":
                a_std = theta[node.a]
                a = a_std / self.scale
                b = theta[node.b] + float(a_std @ (self.shift / self.scale))
                if not np.any(a != 0):
                    a = np.eye(self.d)[0] * 1e-12
                return Atom(Predicate(tuple(a), b))
            kids = [build(c) for c in node.children]
            if node.kind == "not":
                return Not(kids[0])
            if node.kind == "and":
                return And(tuple(kids))
            if node.kind == "or":
                return Or(tuple(kids))
            if node.t_idx is None:
                t1, t2 = int(node.t1), int(node.t2)
            else:
                unit = max(node.window, 1)
                t1 = int(np.clip(np.rint(unit * theta[node.t_idx[0]]), 0, node.window))
                t2 = int(np.clip(np.rint(unit * theta[node.t_idx[1]]), t1, node.window))
            cls = Eventually if node.kind == "F" else Always
            return cls(t1, t2, kids[0])

        return build(self.root)

    # ------------------------------------------------------- forward/backward

    def forward(self, theta, Z: np.ndarray, beta: float, grad: np.ndarray | None = None):
        """Smooth robustness at t=0 for standardised states ``Z``.

        Returns ``(values, backward)``; ``backward(dvalues)`` adds
        ``dvalues @ d(values)/d(theta)`` into ``grad``.
        """
        theta = np.asarray(theta, dtype=float)
        sig, back = self._fwd(self.root, Z, theta, float(beta), grad)
        values = sig[:, 0].copy()

        def backward(dv: np.ndarray) -> None:
            if grad is None:
                raise ValueError("forward() was called without a gradient buffer")
            dsig = np.zeros_like(sig)
            dsig[:, 0] = dv
            back(dsig)

        return values, backward

    def smooth(self, theta, states, beta: float) -> np.ndarray:
        return self.forward(theta, self.standardize(states), beta)[0]

    def _fwd(self, node: _Node, Z, theta, beta, grad) -> tuple[np.ndarray, Backward]:
        if node.kind == "atom":
            a, b = theta[node.a], theta[node.b]
            V = Z @ a - b

            def back(dV):
                grad[node.a] += np.einsum("nt,ntd->d", dV, Z)
                grad[node.b] -= dV.sum()

            return V, back

        if node.kind == "not":
            C, cb = self._fwd(node.children[0], Z, theta, beta, grad)
            return -C, lambda dV: cb(-dV)

        if node.kind in ("and", "or"):
            s = -1.0 if node.kind == "and" else 1.0
            outs = [self._fwd(c, Z, theta, beta, grad) for c in node.children]
            n = min(o[0].shape[1] for o in outs)
            S = np.stack([o[0][:, :n] for o in outs])
            lse, P = _lse(s * beta * S, axis=0)
            V = s * lse / beta

            def back(dV):
                for k, (Ck, cb) in enumerate(outs):
                    dC = np.zeros_like(Ck)
                    dC[:, :n] = dV * P[k]
                    cb(dC)

            return V, back

        s = 1.0 if node.kind == "F" else -1.0
        C, cb = self._fwd(node.children[0], Z, theta, beta, grad)
        if node.t_idx is None:
            t1, K = int(node.t1), int(node.t2 - node.t1 + 1)
            offset = t1
            logw = np.zeros(K)
        else:
            K, offset = node.window + 1, 0
            tau = np.arange(K, dtype=float)
            unit = max(node.window, 1)
            a1, a2 = unit * theta[node.t_idx[0]], unit * theta[node.t_idx[1]]
            u1 = self.kappa * (tau - a1)
            u2 = self.kappa * (a2 - tau)
            logw = log_expit(u1) + log_expit(u2)
        L = C.shape[1] - offset - K + 1
        if L < 1:
            raise HorizonError("temporal window exceeds the trajectory horizon")
        Wd = sliding_window_view(C[:, offset:], K, axis=1)[:, :L]
        # Window weights act as a penalty in robustness units, independent of beta.
        lse, P = _lse(beta * (s * Wd + logw), axis=-1)
        V = s * lse / beta

        def back(dV):
            dC = np.zeros_like(C)
            G = dV[:, :, None] * P
            for j in range(K):
                dC[:, offset + j: offset + j + L] += G[:, :, j]
            if node.t_idx is not None:
                dlogw = s * G.sum(axis=(0, 1))
                grad[node.t_idx[0]] -= unit * self.kappa * (dlogw @ expit(-u1))
                grad[node.t_idx[1]] += unit * self.kappa * (dlogw @ expit(-u2))
            cb(dC)

        return V, back

    # ---------------------------------------------------------- serialisation

    def to_dict(self, theta) -> dict:
        return {
            "skeleton": format_formula(self.skeleton),
            "T": self.T,
            "d": self.d,
            "relaxed": self.relaxed,
            "kappa": self.kappa,
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "theta": np.asarray(theta, dtype=float).tolist(),
            "formula": format_formula(self.materialize(theta)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> tuple["LearnableFormula", np.ndarray]:
        lf = cls(parse(d["skeleton"]), d["T"], d["d"], d["relaxed"], d["shift"], d["scale"],
                 d.get("kappa", 2.0))
        theta = np.asarray(d["theta"], dtype=float)
        if theta.shape != (lf.n_params,):
            raise ShapeError(f"theta has {theta.size} entries, skeleton needs {lf.n_params}")
        return lf, theta


def standardization(states) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and standard deviation over all trajectories and times."""
    X = np.asarray(getattr(states, "states", states), dtype=float)
    flat = X.reshape(-1, X.shape[-1])
    sd = flat.std(axis=0)
    return flat.mean(axis=0), np.where(sd > 0, sd, 1.0)
