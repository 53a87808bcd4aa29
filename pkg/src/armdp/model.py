"""Robust MDP instances: data model, validation and the JSON file format.

An instance is the triple (Q, P, r) over finite states and actions:

* ``reward[s, a]`` in [0, 1];
* a controller decision set Q (``ControllerSet``), the same at every state;
* an S-rectangular ambiguity set P = x_s P_s, one ``StateAmbiguity`` per state.

Arrays held by an instance are made read-only, so an instance can be shared
freely once constructed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DimensionMismatch, ParseError, ValidationError

FORMAT_VERSION = 1
PROB_ATOL = 1e-12


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_row(row, field_name, index):
    row = np.asarray(row, dtype=float)
    if not np.all(np.isfinite(row)):
        raise ValidationError("non-finite probability", field_name, index)
    if np.any(row < 0.0):
        raise ValidationError("negative probability", field_name, index)
    total = float(row.sum())
    if abs(total - 1.0) > PROB_ATOL:
        raise ValidationError(f"row sums to {total!r}, expected 1", field_name, index)


# ---------------------------------------------------------------------------
# Controller decision set


@dataclass(frozen=True, eq=False)
class ControllerSet:
    """The controller's per-state decision set Q.

    ``variant`` is one of ``"dirac_only"``, ``"full_simplex"`` or ``"finite"``;
    only the last carries explicit ``distributions`` (k x |A|).
    """

    variant: str
    distributions: np.ndarray | None = None

    VARIANTS = ("dirac_only", "full_simplex", "finite")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}", "controller_set.variant")
        if self.variant == "finite":
            if self.distributions is None or len(self.distributions) == 0:
                raise ValidationError("finite controller set needs distributions",
                                      "controller_set.distributions")
            object.__setattr__(self, "distributions", _frozen(self.distributions))
        elif self.distributions is not None:
            raise ValidationError("only the finite variant takes distributions",
                                  "controller_set.distributions")

    @classmethod
    def dirac_only(cls):
        return cls("dirac_only")

    @classmethod
    def full_simplex(cls):
        return cls("full_simplex")

    @classmethod
    def finite(cls, distributions):
        return cls("finite", np.asarray(distributions, dtype=float))

    @property
    def is_enumerable(self):
        return self.variant != "full_simplex"

    def vertices(self, n_actions):
        """Enumerable elements of Q (Diracs for the simplex: its extreme points)."""
        if self.variant == "finite":
            return self.distributions
        return np.eye(n_actions)

    def contains_diracs(self, n_actions):
        if self.variant != "finite":
            return True
        eye = np.eye(n_actions)
        return all(any(np.allclose(d, e, atol=PROB_ATOL) for d in self.distributions) for e in eye)

    def contains(self, phi, atol=1e-9):
        phi = np.asarray(phi, dtype=float)
        if np.any(phi < -atol) or abs(phi.sum() - 1.0) > atol:
            return False
        if self.variant == "full_simplex":
            return True
        return any(np.allclose(phi, q, atol=atol) for q in self.vertices(len(phi)))

    def support_patterns(self, n_actions):
        """Distinct supports of elements of Q, as sorted tuples of actions.

        Reachability under a randomized decision depends only on its support,
        so these patterns are exhaustive for graph questions.
        """
        if self.variant == "dirac_only":
            return [(a,) for a in range(n_actions)]
        if self.variant == "full_simplex":
            out = []
            for mask in range(1, 2 ** n_actions):
                out.append(tuple(a for a in range(n_actions) if mask >> a & 1))
            return out
        seen = []
        for d in self.distributions:
            supp = tuple(int(a) for a in np.flatnonzero(d > 0))
            if supp not in seen:
                seen.append(supp)
        return seen

    def to_json(self):
        out = {"variant": self.variant}
        if self.variant == "finite":
            out["distributions"] = self.distributions.tolist()
        return out


# ---------------------------------------------------------------------------
# Per-state adversary decision sets


@dataclass(frozen=True, eq=False)
class FiniteKernels:
    """P_s as an explicit finite list; ``kernels[k, a]`` is a row over S."""

    kernels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kernels", _frozen(self.kernels))

    variant = "finite_kernels"

    @property
    def n_choices(self):
        return self.kernels.shape[0]

    def to_json(self):
        return {"variant": self.variant, "kernels": self.kernels.tolist()}


@dataclass(frozen=True, eq=False)
class SaTvBalls:
    """P_s = x_a {p : TV(p, nominal[a]) <= radius[a]} (SA-rectangular)."""

    nominal: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nominal", _frozen(self.nominal))
        object.__setattr__(self, "radius", _frozen(self.radius))

    variant = "sa_tv"

    def contains_row(self, a, row, atol=PROB_ATOL):
        row = np.asarray(row, dtype=float)
        if np.any(row < -atol) or abs(row.sum() - 1.0) > atol:
            return False
        return 0.5 * np.abs(row - self.nominal[a]).sum() <= self.radius[a] + atol

    def to_json(self):
        return {"variant": self.variant, "nominal": self.nominal.tolist(),
                "radius": self.radius.tolist()}


StateAmbiguity = Union[FiniteKernels, SaTvBalls]


# ---------------------------------------------------------------------------
# Instance


@dataclass(frozen=True, eq=False)
class RobustMdpInstance:
    n_states: int
    n_actions: int
    reward: np.ndarray
    controller_set: ControllerSet
    ambiguity: tuple
    state_labels: tuple | None = None
    action_labels: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "ambiguity", tuple(self.ambiguity))
        if self.state_labels is not None:
            object.__setattr__(self, "state_labels", tuple(self.state_labels))
        if self.action_labels is not None:
            object.__setattr__(self, "action_labels", tuple(self.action_labels))
        validate_instance(self)

    @property
    def shape(self):
        return self.n_states, self.n_actions

    @cached_property
    def all_finite(self):
        return all(isinstance(amb, FiniteKernels) for amb in self.ambiguity)

    @cached_property
    def all_tv(self):
        return all(isinstance(amb, SaTvBalls) for amb in self.ambiguity)

    def state_name(self, s):
        return self.state_labels[s] if self.state_labels else str(s)

    def state_index(self, name):
        """Resolve a state label or a decimal index."""
        if isinstance(name, (int, np.integer)):
            return int(name)
        if self.state_labels and name in self.state_labels:
            return self.state_labels.index(name)
        return int(name)


def validate_instance(inst):
    S, A = inst.n_states, inst.n_actions
    if not isinstance(S, (int, np.integer)) or S < 1:
        raise ValidationError("must be a positive integer", "n_states")
    if not isinstance(A, (int, np.integer)) or A < 1:
        raise ValidationError("must be a positive integer", "n_actions")
    r = inst.reward
    if r.shape != (S, A):
        raise ValidationError(f"shape {r.shape} != ({S}, {A})", "reward")
    for s in range(S):
        for a in range(A):
            if not np.isfinite(r[s, a]) or not 0.0 <= r[s, a] <= 1.0:
                raise ValidationError(f"{r[s, a]!r} outside [0, 1]", "reward", (s, a))
    cs = inst.controller_set
    if cs.variant == "finite":
        if cs.distributions.ndim != 2 or cs.distributions.shape[1] != A:
            raise ValidationError(f"distributions must be k x {A}", "controller_set.distributions")
        for k, d in enumerate(cs.distributions):
            _check_row(d, "controller_set.distributions", k)
    if len(inst.ambiguity) != S:
        raise ValidationError(f"{len(inst.ambiguity)} entries for {S} states", "ambiguity")
    for s, amb in enumerate(inst.ambiguity):
        if isinstance(amb, FiniteKernels):
            K = amb.kernels
            if K.ndim != 3 or K.shape[0] == 0 or K.shape[1:] != (A, S):
                raise ValidationError(f"kernels must be k x {A} x {S}, got {K.shape}",
                                      "ambiguity", s)
            for k in range(K.shape[0]):
                for a in range(A):
                    _check_row(K[k, a], "ambiguity.kernels", (s, k, a))
        elif isinstance(amb, SaTvBalls):
            if amb.nominal.shape != (A, S):
                raise ValidationError(f"nominal must be {A} x {S}", "ambiguity.nominal", s)
            if amb.radius.shape != (A,):
                raise ValidationError(f"radius must have {A} entries", "ambiguity.radius", s)
            for a in range(A):
                _check_row(amb.nominal[a], "ambiguity.nominal", (s, a))
                th = amb.radius[a]
                if not np.isfinite(th) or not 0.0 <= th <= 1.0:
                    raise ValidationError(f"radius {th!r} outside [0, 1]", "ambiguity.radius",
                                          (s, a))
        else:
            raise ValidationError(f"unknown ambiguity entry {type(amb).__name__}", "ambiguity", s)


# ---------------------------------------------------------------------------
# Stationary policies


@dataclass(frozen=True, eq=False)
class StationaryControllerPolicy:
    """Delta : S -> Q, stored as an |S| x |A| row-stochastic matrix."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    @classmethod
    def deterministic(cls, actions, n_actions):
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), list(actions)] = 1.0
        return cls(probs)

    @property
    def actions(self):
        """Action per state if the policy is deterministic, else ``None``."""
        if np.all((self.probs == 0.0) | (self.probs == 1.0)):
            return tuple(int(a) for a in self.probs.argmax(axis=1))
        return None


@dataclass(frozen=True, eq=False)
class StationaryAdversaryPolicy:
    """p in P, stored as ``kernel[s, a, s']``.

    ``indices`` records the chosen element of each finite P_s when known
    (``None`` entries for states whose rows were given explicitly).
    """

    kernel: np.ndarray
    indices: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "kernel", _frozen(self.kernel))
        if self.indices is not None:
            object.__setattr__(self, "indices", tuple(self.indices))

    @classmethod
    def from_indices(cls, instance, indices):
        if len(indices) != instance.n_states:
            raise DimensionMismatch(f"{len(indices)} indices for {instance.n_states} states")
        rows = []
        for s, k in enumerate(indices):
            amb = instance.ambiguity[s]
            if not isinstance(amb, FiniteKernels):
                if k not in (0, None):
                    raise ValidationError("only index 0 (nominal) is valid for sa_tv",
                                          "adversary", s)
                rows.append(amb.nominal)
                continue
            if not 0 <= k < amb.n_choices:
                raise ValidationError(f"kernel index {k} out of range", "adversary", s)
            rows.append(amb.kernels[k])
        return cls(np.array(rows), tuple(int(k) for k in indices))

    @classmethod
    def nominal(cls, instance):
        return cls.from_indices(instance, [0] * instance.n_states)


def validate_controller_policy(instance, policy):
    P = policy.probs
    if P.shape != instance.shape:
        raise DimensionMismatch(f"controller policy shape {P.shape} != {instance.shape}")
    for s in range(instance.n_states):
        _check_row(P[s], "controller", s)
        if not instance.controller_set.contains(P[s]):
            raise ValidationError("decision not in Q", "controller", s)


def validate_adversary_policy(instance, policy):
    K = policy.kernel
    S, A = instance.shape
    if K.shape != (S, A, S):
        raise DimensionMismatch(f"adversary kernel shape {K.shape} != {(S, A, S)}")
    for s, amb in enumerate(instance.ambiguity):
        for a in range(A):
            _check_row(K[s, a], "adversary", (s, a))
        if isinstance(amb, FiniteKernels):
            if not any(np.allclose(K[s], ker, atol=PROB_ATOL) for ker in amb.kernels):
                raise ValidationError("rows are not an element of P_s", "adversary", s)
        else:
            for a in range(A):
                if not amb.contains_row(a, K[s, a]):
                    raise ValidationError("row outside the TV ball", "adversary", (s, a))


def induced_chain(instance, controller, adversary):
    """Markov chain p_Delta(s'|s) = sum_a p(s'|s,a) Delta(a|s) and reward r_Delta."""
    D = np.asarray(getattr(controller, "probs", controller), dtype=float)
    K = np.asarray(getattr(adversary, "kernel", adversary), dtype=float)
    S, A = instance.shape
    if D.shape != (S, A) or K.shape != (S, A, S):
        raise DimensionMismatch(f"policy shapes {D.shape}, {K.shape} do not match {(S, A)}")
    P = np.einsum("sa,sat->st", D, K)
    r = np.einsum("sa,sa->s", D, instance.reward)
    return P, r


# ---------------------------------------------------------------------------
# JSON format


def _ambiguity_from_json(entry, s):
    if not isinstance(entry, dict) or "variant" not in entry:
        raise ParseError(f"ambiguity[{s}]: expected an object with 'variant'")
    variant = entry["variant"]
    try:
        if variant == "finite_kernels":
            return FiniteKernels(np.array(entry["kernels"], dtype=float))
        if variant == "sa_tv":
            return SaTvBalls(np.array(entry["nominal"], dtype=float),
                             np.array(entry["radius"], dtype=float))
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"ambiguity[{s}]: {exc}") from exc
    raise ParseError(f"ambiguity[{s}]: unknown variant {variant!r}")


def instance_from_dict(data):
    if not isinstance(data, dict):
        raise ParseError("top level must be an object")
    if data.get("format", FORMAT_VERSION) != FORMAT_VERSION:
        raise ParseError(f"unsupported format {data.get('format')!r}")
    try:
        S, A = data["n_states"], data["n_actions"]
        reward = np.array(data["reward"], dtype=float)
        cs_data = data["controller_set"]
        amb_data = data["ambiguity"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ParseError(f"reward: {exc}") from exc
    if not isinstance(amb_data, list):
        raise ParseError("ambiguity must be a list")
    try:
        dists = cs_data.get("distributions")
        cs = ControllerSet(cs_data["variant"],
                           None if dists is None else np.array(dists, dtype=float))
    except (KeyError, AttributeError, ValueError, TypeError) as exc:
        raise ParseError(f"controller_set: {exc}") from exc
    labels = data.get("labels", {})
    return RobustMdpInstance(
        n_states=S,
        n_actions=A,
        reward=reward,
        controller_set=cs,
        ambiguity=tuple(_ambiguity_from_json(e, s) for s, e in enumerate(amb_data)),
        state_labels=labels.get("states"),
        action_labels=labels.get("actions"),
        meta=data.get("meta", {}),
    )


def instance_to_dict(inst):
    out = {
        "format": FORMAT_VERSION,
        "n_states": inst.n_states,
        "n_actions": inst.n_actions,
        "reward": inst.reward.tolist(),
        "controller_set": inst.controller_set.to_json(),
        "ambiguity": [amb.to_json() for amb in inst.ambiguity],
    }
    labels = {}
    if inst.state_labels:
        labels["states"] = list(inst.state_labels)
    if inst.action_labels:
        labels["actions"] = list(inst.action_labels)
    if labels:
        out["labels"] = labels
    if inst.meta:
        out["meta"] = inst.meta
    return out


def _dump(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if all(not isinstance(x, (dict, list)) for x in obj):
            return json.dumps(obj)
        if all(isinstance(x, list) and all(not isinstance(y, (dict, list)) for y in x)
               for x in obj):
            return "[" + ", ".join(json.dumps(x) for x in obj) + "]"
        items = [f"{pad}  {_dump(x, indent + 1)}" for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return json.dumps(obj)


def _canonical_meta(obj):
    if isinstance(obj, dict):
        return {k: _canonical_meta(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_canonical_meta(x) for x in obj]
    return obj


def dumps_instance(inst):
    data = instance_to_dict(inst)
    if "meta" in data:
        data["meta"] = _canonical_meta(data["meta"])
    return _dump(data) + "\n"


def loads_instance(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    return instance_from_dict(data)


def load_instance(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads_instance(text)


def save_instance(inst, path):
    Path(path).write_text(dumps_instance(inst))

