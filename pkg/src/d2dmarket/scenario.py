"""Game instance data model: content catalog, users, connectivity, prices.

Everything here is an immutable value.  Arrays stored on the dataclasses are
flagged read-only so a scenario can be shared freely between solver calls.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "ScenarioError",
    "ContentCatalog",
    "UserProfile",
    "ConnectivityMatrix",
    "Scenario",
    "PricingPolicy",
    "PiStructure",
    "TIE_EPS",
    "validate_scenario",
    "load_scenario",
    "read_document",
    "pi_structure",
    "random_scenario",
]

# Ordering-only perturbation used to break interest ties between users.
TIE_EPS = 1e-9
# Values closer than this are treated as the same candidate price level.
DEDUP_TOL = 1e-12


class ScenarioError(ValueError):
    """Raised when a scenario document or value violates an invariant."""


def _frozen(values, *, ndim: int, name: str) -> np.ndarray:
    try:
        arr = np.array(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{name}: expected numbers, got {values!r}") from exc
    if arr.ndim != ndim:
        raise ScenarioError(f"{name}: expected {ndim}-d data, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name}: non-finite entry")
    arr.setflags(write=False)
    return arr


def _check_range(arr: np.ndarray, name: str, lo: float = 0.0, hi: float = 1.0) -> None:
    bad = np.argwhere((arr < lo) | (arr > hi))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        where = idx[0] if len(idx) == 1 else idx
        raise ScenarioError(
            f"{name}[{where}] = {arr[tuple(bad[0])]!r} outside [{lo}, {hi}]"
        )


@dataclass(frozen=True, eq=False)
class ContentCatalog:
    sizes: np.ndarray
    freshness: np.ndarray

    def __post_init__(self):
        sizes = _frozen(self.sizes, ndim=1, name="sizes")
        freshness = _frozen(self.freshness, ndim=1, name="freshness")
        if sizes.shape != freshness.shape:
            raise ScenarioError(
                f"sizes has {sizes.size} entries but freshness has {freshness.size}"
            )
        if sizes.size == 0:
            raise ScenarioError("catalog must contain at least one content")
        bad = np.flatnonzero(sizes <= 0)
        if bad.size:
            raise ScenarioError(f"sizes[{bad[0]}] = {sizes[bad[0]]!r} must be > 0")
        _check_range(freshness, "freshness")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "freshness", freshness)

    def __len__(self) -> int:
        return self.sizes.size


@dataclass(frozen=True, eq=False)
class UserProfile:
    interests: np.ndarray
    offpeak_load: float = 0.0

    def __post_init__(self):
        interests = _frozen(self.interests, ndim=1, name="interests")
        _check_range(interests, "interests")
        load = float(self.offpeak_load)
        if not np.isfinite(load) or load < 0:
            raise ScenarioError(f"offpeak_load = {self.offpeak_load!r} must be >= 0")
        object.__setattr__(self, "interests", interests)
        object.__setattr__(self, "offpeak_load", load)


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """Probability ``omega[i, j]`` that user ``i`` can deliver data to user ``j``."""

    omega: np.ndarray

    def __post_init__(self):
        omega = _frozen(self.omega, ndim=2, name="connectivity")
        n, m = omega.shape
        if n != m:
            raise ScenarioError(f"connectivity must be square, got {omega.shape}")
        _check_range(omega, "connectivity")
        if np.any(np.diag(omega) != 0):
            raise ScenarioError("connectivity diagonal must be 0")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def uniform(cls, n_users: int, value: float) -> "ConnectivityMatrix":
        omega = np.full((n_users, n_users), float(value))
        np.fill_diagonal(omega, 0.0)
        return cls(omega)

    @property
    def is_disconnected(self) -> bool:
        return not np.any(self.omega)


@dataclass(frozen=True)
class PricingPolicy:
    """Carrier strategy: off-peak price, peak price and trade commission."""

    y_o: float
    y_p: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("y_o", "y_p", "gamma"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ScenarioError(f"{name} = {value!r} must be a finite value >= 0")
            object.__setattr__(self, name, value)
        if self.gamma > 1:
            raise ScenarioError(f"gamma = {self.gamma!r} must lie in [0, 1]")

    def check(self, price_cap: float) -> None:
        """Raise unless the policy lies in the regulator's constraint set."""
        for name in ("y_o", "y_p"):
            if getattr(self, name) > price_cap * (1 + 1e-12):
                raise ScenarioError(
                    f"{name} = {getattr(self, name)!r} exceeds price cap {price_cap!r}"
                )

    @classmethod
    def flat(cls, price: float) -> "PricingPolicy":
        return cls(price, price, 0.0)


@dataclass(frozen=True, eq=False)
class PiStructure:
    """Freshness-popularity products and the candidate orderings built on them.

    Attributes
    ----------
    pi : (N, M) array
        ``freshness[m] * interest[j, m]``.
    ordering : (N, M) array
        ``pi`` with user ``j`` shifted down by ``j * TIE_EPS``.  Only used to
        rank users, never in payment arithmetic.
    sorted_disconnected : 1-d array
        1.0 followed by the distinct products of all users, descending.
    sorted_connected : 1-d array
        1.0 followed by the distinct per-content maxima, descending.
    top_user : (M,) int array
        Most interested user of each content (lowest index on ties).
    content_order : (M,) int array
        Contents sorted by their per-content maximum, descending.
    """

    pi: np.ndarray
    ordering: np.ndarray
    sorted_disconnected: np.ndarray
    sorted_connected: np.ndarray
    top_user: np.ndarray
    content_order: np.ndarray

    @property
    def content_max(self) -> np.ndarray:
        return self.pi[self.top_user, np.arange(self.pi.shape[1])]


@dataclass(frozen=True, eq=False)
class Scenario:
    catalog: ContentCatalog
    users: tuple[UserProfile, ...]
    connectivity: ConnectivityMatrix
    beta: float
    price_cap: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        users = tuple(self.users)
        if not users:
            raise ScenarioError("scenario needs at least one user")
        m = len(self.catalog)
        for j, user in enumerate(users):
            if user.interests.size != m:
                raise ScenarioError(
                    f"users[{j}].interests has {user.interests.size} entries, "
                    f"expected {m} (one per content)"
                )
        if self.connectivity.omega.shape != (len(users), len(users)):
            raise ScenarioError(
                f"connectivity shape {self.connectivity.omega.shape} does not "
                f"match {len(users)} users"
            )
        for name in ("beta", "price_cap"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ScenarioError(f"{name} = {value!r} must be > 0")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "users", users)

    # Convenience views used throughout the solvers.
    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_contents(self) -> int:
        return len(self.catalog)

    @property
    def sizes(self) -> np.ndarray:
        return self.catalog.sizes

    @property
    def freshness(self) -> np.ndarray:
        return self.catalog.freshness

    @property
    def omega(self) -> np.ndarray:
        return self.connectivity.omega

    @cached_property
    def interests(self) -> np.ndarray:
        arr = np.vstack([u.interests for u in self.users])
        arr.setflags(write=False)
        return arr

    @cached_property
    def offpeak_loads(self) -> np.ndarray:
        arr = np.array([u.offpeak_load for u in self.users])
        arr.setflags(write=False)
        return arr

    @cached_property
    def pis(self) -> PiStructure:
        return pi_structure(self)

    def replace(self, **changes) -> "Scenario":
        """Copy with some top-level fields (or ``interests``/``omega``) swapped."""
        catalog = changes.pop("catalog", self.catalog)
        users = changes.pop("users", self.users)
        connectivity = changes.pop("connectivity", self.connectivity)
        if "interests" in changes:
            interests = np.asarray(changes.pop("interests"), dtype=float)
            users = tuple(
                UserProfile(row, u.offpeak_load) for row, u in zip(interests, users)
            )
        if "omega" in changes:
            omega = changes.pop("omega")
            if np.ndim(omega) == 0:
                connectivity = ConnectivityMatrix.uniform(len(users), float(omega))
            else:
                connectivity = ConnectivityMatrix(omega)
        fields = dict(
            catalog=catalog,
            users=users,
            connectivity=connectivity,
            beta=self.beta,
            price_cap=self.price_cap,
            name=self.name,
        )
        unknown = set(changes) - set(fields)
        if unknown:
            raise TypeError(f"unknown scenario fields: {sorted(unknown)}")
        fields.update(changes)
        return Scenario(**fields)

    def disconnected(self) -> "Scenario":
        if self.connectivity.is_disconnected:
            return self
        return self.replace(omega=0.0)

    def to_document(self) -> dict[str, Any]:
        return {
            "sizes": self.sizes.tolist(),
            "freshness": self.freshness.tolist(),
            "users": [
                {"interests": u.interests.tolist(), "offpeak_load": u.offpeak_load}
                for u in self.users
            ],
            "connectivity": self.omega.tolist(),
            "beta": self.beta,
            "price_cap": self.price_cap,
        }


def _dedup_desc(values: np.ndarray) -> np.ndarray:
    out = [1.0]
    for v in sorted((float(x) for x in values.ravel()), reverse=True):
        if out[-1] - v > DEDUP_TOL:
            out.append(v)
    arr = np.array(out)
    arr.setflags(write=False)
    return arr


def pi_structure(s: Scenario) -> PiStructure:
    pi = s.interests * s.freshness[np.newaxis, :]
    ordering = pi - TIE_EPS * np.arange(s.n_users)[:, np.newaxis]
    # argmax returns the first maximiser, i.e. the lowest user index on ties.
    top_user = np.argmax(ordering, axis=0)
    content_max = pi[top_user, np.arange(s.n_contents)]
    content_order = np.lexsort((np.arange(s.n_contents), -content_max))
    for arr in (pi, ordering, top_user, content_order):
        arr.setflags(write=False)
    return PiStructure(
        pi=pi,
        ordering=ordering,
        sorted_disconnected=_dedup_desc(pi),
        sorted_connected=_dedup_desc(content_max),
        top_user=top_user,
        content_order=content_order,
    )


def _connectivity_from(raw, n_users: int) -> ConnectivityMatrix:
    if raw is None:
        return ConnectivityMatrix.uniform(n_users, 0.0)
    if np.ndim(raw) == 0:
        try:
            value = float(raw)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"connectivity: expected a number, got {raw!r}") from exc
        if not 0 <= value <= 1:
            raise ScenarioError(f"connectivity = {value!r} outside [0, 1]")
        return ConnectivityMatrix.uniform(n_users, value)
    return ConnectivityMatrix(raw)


def validate_scenario(raw: Mapping[str, Any] | Scenario) -> Scenario:
    """Build a :class:`Scenario` from a plain document, checking every field.

    The document keys are ``sizes``, ``freshness``, ``users`` (a list of
    ``{"interests": [...], "offpeak_load": x}``), ``connectivity`` (matrix, or a
    scalar applied to every off-diagonal pair), ``beta`` and ``price_cap``.
    Raises :class:`ScenarioError` naming the offending field.
    """
    if isinstance(raw, Scenario):
        return raw
    if not isinstance(raw, Mapping):
        raise ScenarioError(f"scenario document must be a mapping, got {type(raw).__name__}")
    missing = [k for k in ("sizes", "freshness", "users", "beta", "price_cap") if k not in raw]
    if missing:
        raise ScenarioError(f"missing scenario keys: {', '.join(missing)}")
    catalog = ContentCatalog(raw["sizes"], raw["freshness"])
    users_raw = raw["users"]
    if not isinstance(users_raw, Sequence) or isinstance(users_raw, (str, bytes)):
        raise ScenarioError("users must be a list of user profiles")
    users = []
    for j, u in enumerate(users_raw):
        if not isinstance(u, Mapping) or "interests" not in u:
            raise ScenarioError(f"users[{j}] needs an 'interests' list")
        try:
            users.append(UserProfile(u["interests"], u.get("offpeak_load", 0.0)))
        except ScenarioError as exc:
            raise ScenarioError(f"users[{j}].{exc}") from None
    connectivity = _connectivity_from(raw.get("connectivity"), len(users))
    return Scenario(
        catalog=catalog,
        users=tuple(users),
        connectivity=connectivity,
        beta=raw["beta"],
        price_cap=raw["price_cap"],
        name=str(raw.get("name", "")),
    )


def read_document(path: str | Path) -> dict[str, Any]:
    """Read a JSON or YAML document (chosen by file suffix)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return doc


def load_scenario(path: str | Path) -> Scenario:
    doc = read_document(path)
    return validate_scenario(doc.get("scenario", doc))


def random_scenario(
    rng: np.random.Generator,
    max_users: int = 3,
    max_contents: int = 3,
    *,
    min_users: int = 1,
    connected: bool = True,
    offpeak_max: float = 100.0,
) -> Scenario:
    """Draw a small random instance (used by audits and property tests)."""
    n = int(rng.integers(min_users, max_users + 1))
    m = int(rng.integers(1, max_contents + 1))
    sizes = rng.uniform(50.0, 150.0, m)
    freshness = rng.uniform(0.5, 1.0, m)
    interests = rng.uniform(0.0, 1.0, (n, m))
    loads = rng.uniform(0.0, offpeak_max, n)
    omega = rng.uniform(0.0, 1.0, (n, n)) if connected else np.zeros((n, n))
    np.fill_diagonal(omega, 0.0)
    return Scenario(
        catalog=ContentCatalog(sizes, freshness),
        users=tuple(UserProfile(p, l) for p, l in zip(interests, loads)),
        connectivity=ConnectivityMatrix(omega),
        beta=float(rng.uniform(0.2, 0.9)),
        price_cap=1.0,
    )
