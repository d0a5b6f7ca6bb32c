"""JSON readers and writers for spaces, currents, function dictionaries and representations.

Space files hold either ``{"coords": [[...], ...]}`` or
``{"dist": [[...], ...]}``, optionally with ``"points"`` (ids) and ``"mu"``.

Current files are tagged by ``"type"``:

* ``{"type": "point", "m": [...]}``
* ``{"type": "flow", "flow": [[...]]}``
* ``{"type": "fragments", "fragments": [{"times", "trace", "edges"?, "weight"?, "nu"?}]}``
* ``{"type": "precurrent", "mu": [...], "basis": [[fragment, ...], ...],
  "k": k, "tuples": [[i, j], ...], "coeffs": [[...], ...]}``

Every basis derivation of a precurrent uses ``mu`` as reference measure;
a fragment without ``"nu"`` in a basis gets ``nu = mu(left)``.

Strings of the form ``fixture:NAME`` select built-in examples instead of a
file (see :data:`FIXTURES`).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .currents import FlowCurrent, FragmentCurrent, PointCurrent, Precurrent
from .derivations import CarrierPiece, Derivation
from .errors import InputError
from .exterior import KVector
from .fixtures import grid, seg
from .fragments import Fragment, default_nu
from .space import FnDict, MetricSpace

__all__ = ["load_json", "read_space", "read_current", "read_functions", "dump", "FIXTURES", "fixture"]


def load_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from exc


def _space_from(data):
    if not isinstance(data, dict):
        raise InputError("space file must hold a JSON object")
    pts = data.get("points")
    if "coords" in data:
        X = MetricSpace.from_coords(np.asarray(data["coords"], dtype=float), points=pts)
    elif "dist" in data:
        X = MetricSpace(np.asarray(data["dist"], dtype=float), points=pts)
    else:
        raise InputError("space file needs 'coords' or 'dist'")
    mu = data.get("mu")
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (X.n,):
            raise InputError("'mu' needs one weight per point")
    return X, mu


def _fragment(X, f):
    try:
        return Fragment(X, f["times"], f["trace"], f.get("h_max", np.inf), edges=f.get("edges"))
    except KeyError as exc:
        raise InputError(f"fragment is missing {exc}") from exc


def _current_from(X, data, mu=None):
    kind = data.get("type")
    if kind == "zero":
        return FlowCurrent(X, np.zeros((X.n, X.n)))
    if kind == "point":
        return PointCurrent(X, np.asarray(data["m"], dtype=float))
    if kind == "flow":
        C = np.asarray(data["flow"], dtype=float)
        if C.shape != (X.n, X.n):
            raise InputError("flow matrix has the wrong shape")
        return FlowCurrent(X, C)
    if kind == "fragments":
        pieces = []
        for f in data.get("fragments", []):
            g = _fragment(X, f)
            nu = np.asarray(f["nu"], dtype=float) if "nu" in f else default_nu(g)
            pieces.append(CarrierPiece(g, float(f.get("weight", 1.0)), nu))
        return FragmentCurrent(X, pieces)
    if kind == "precurrent":
        m = np.asarray(data.get("mu", mu), dtype=float)
        if m.shape != (X.n,):
            raise InputError("precurrent needs 'mu' with one weight per point")
        basis = []
        for frs in data["basis"]:
            pieces = []
            for f in frs:
                g = _fragment(X, f)
                nu = np.asarray(f["nu"], dtype=float) if "nu" in f else m[g.left].copy()
                pieces.append(CarrierPiece(g, float(f.get("weight", 1.0)), nu))
            basis.append(Derivation(X, m, pieces))
        k = int(data["k"])
        coeffs = {tuple(a): np.asarray(c, dtype=float) for a, c in zip(data["tuples"], data["coeffs"])}
        return Precurrent(KVector(basis, k, coeffs), m)
    raise InputError(f"unknown current type {kind!r}")


# ---------------------------------------------------------------------------
# fixtures


def _grid_m(name, default=4):
    parts = name.split(":")
    return int(parts[1]) if len(parts) > 1 else default


def fixture(name):
    """``(space, mu, current)`` for a built-in example."""
    base = name.split(":")[0]
    if base == "seg":
        X = seg()
        g = Fragment(X, [0.0, 0.5, 1.0], [0, 1, 2])
        return X, np.array([0.5, 0.5, 0.0]), FragmentCurrent(X, [CarrierPiece(g, 1.0, default_nu(g))])
    if base == "grid":
        G = grid(_grid_m(name))
        T = Precurrent(KVector.simple([G.Dx, G.Dy], (0, 1)), G.mu)
        return G.space, G.mu, T
    if base == "grid-x":
        G = grid(_grid_m(name))
        return G.space, G.mu, Precurrent(KVector.simple([G.Dx, G.Dy], (0,)), G.mu)
    if base == "jump":
        n = _grid_m(name, 65)
        t = np.linspace(0.0, 1.0, n)
        X = MetricSpace.from_coords(t[:, None])
        g = Fragment(X, t, np.arange(n))
        lam = np.where(t[:-1] < 0.5, 1.0, 0.5)
        mu = np.r_[np.diff(t), 0.0]
        return X, mu, FragmentCurrent(X, [CarrierPiece(g, 1.0, lam * np.diff(t))])
    if base == "zero":
        X = seg()
        return X, np.array([0.5, 0.5, 0.0]), FlowCurrent(X, np.zeros((3, 3)))
    raise InputError(f"unknown fixture {name!r}")


FIXTURES = ("seg", "grid[:m]", "grid-x[:m]", "jump[:n]", "zero")


def read_space(spec):
    if isinstance(spec, str) and spec.startswith("fixture:"):
        X, mu, _ = fixture(spec[len("fixture:"):])
        return X, mu
    return _space_from(load_json(spec))


def read_current(spec, X, mu=None):
    if isinstance(spec, str) and spec.startswith("fixture:"):
        _, _, T = fixture(spec[len("fixture:"):])
        if T.space.n != X.n:
            raise InputError("fixture current does not match the space")
        return T
    data = load_json(spec)
    try:
        return _current_from(X, data, mu)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{spec}: malformed current ({exc})") from exc


def read_functions(spec, X):
    data = load_json(spec)
    vals = np.asarray(data["values"], dtype=float)
    names = data.get("names", [f"f{i}" for i in range(len(vals))])
    if vals.ndim != 2 or vals.shape[1] != X.n:
        raise InputError("functions need one value per point")
    return FnDict(X, list(names), vals)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def dump(obj):
    """Deterministic JSON text (sorted keys, fixed float formatting by ``json``)."""
    return json.dumps(obj, default=_default, sort_keys=True, indent=1, allow_nan=True)
